import functools
import stat
import sys

import numpy as np
import pytest

from rmperception.exceptions import EncodingError, SolverError, TractabilityError, ValidationError
from rmperception.inference import (
    CdclSolver, CnfFormula, ExternalSolver, NoConsistentMachine, PysatSolver,
    RewardMachineInferrer, Sample, brute_force_infer, decode_model, encode_phi, get_backend,
    has_direct_conflict, infer_minimal, parse_dimacs, sat_solve,
)
from rmperception.reward_machine import consistent_with

E, C, O = frozenset(), frozenset({"c"}), frozenset({"o"})
THREE = [([E, C], [0, 0]), ([C, O], [0, 1]), ([E, O], [0, 0])]
CONFLICT = [([E, C], [0, 0]), ([E, C], [0, 1])]
BACKENDS = ["cdcl", "pysat"]


def random_3cnf(rng, n=20, m=None):
    m = int(rng.integers(60, 110)) if m is None else m
    clauses = []
    for _ in range(m):
        vs = rng.choice(np.arange(1, n + 1), 3, replace=False)
        clauses.append([int(v) if rng.random() < 0.5 else -int(v) for v in vs])
    return CnfFormula(n, clauses)


@functools.lru_cache(maxsize=None)
def _packed_columns(n):
    # column i holds bit i of every assignment index, packed eight per byte
    idx = np.arange(2 ** n, dtype=np.uint32)
    return [np.packbits(((idx >> i) & 1).astype(bool)) for i in range(n)]


def truth_table_sat(f):
    """Exhaustive check over all 2**n assignments."""
    cols = _packed_columns(f.variable_count)
    ok = np.full_like(cols[0], 0xFF)
    for clause in f.clauses:
        hit = np.zeros_like(ok)
        for lit in clause:
            col = cols[abs(lit) - 1]
            hit |= col if lit > 0 else ~col
        ok &= hit
    return bool(ok.any())


@functools.lru_cache(maxsize=None)
def random_instances():
    rng = np.random.default_rng(2024)
    out = []
    for _ in range(100):
        f = random_3cnf(rng)
        out.append((f, truth_table_sat(f)))
    return out


class TestCnf:
    def test_literal_range(self):
        with pytest.raises(ValidationError):
            CnfFormula(2, [[1, 3]])
        with pytest.raises(ValidationError):
            CnfFormula(2, [[0]])

    def test_dimacs_round_trip(self):
        f = CnfFormula(3, [[1, -2], [3], [-1, 2, -3]])
        text = f.to_dimacs()
        assert text.splitlines()[0] == "p cnf 3 3"
        g = parse_dimacs(text)
        assert g.variable_count == 3 and g.clauses == f.clauses

    def test_bad_dimacs(self):
        with pytest.raises(ValidationError):
            parse_dimacs("1 2 0\n")


@pytest.mark.parametrize("backend", BACKENDS)
class TestSolvers:
    def test_unit(self, backend):
        model = sat_solve(CnfFormula(1, [[1]]), backend)
        assert model[1] is True

    def test_contradiction(self, backend):
        assert sat_solve(CnfFormula(1, [[1], [-1]]), backend) is None

    def test_random_3cnf_against_truth_table(self, backend):
        solver = get_backend(backend)
        sat_count = 0
        for f, expected in random_instances():
            model = solver.solve(f)
            assert (model is not None) == expected
            if model is not None:
                assert f.satisfied_by(model)
                sat_count += 1
        assert 10 < sat_count < 90  # instances straddle the phase transition


def pigeonhole(n):
    """n + 1 pigeons in n holes: UNSAT and hard for resolution."""
    var = lambda p, h: p * n + h + 1  # noqa: E731
    clauses = [[var(p, h) for h in range(n)] for p in range(n + 1)]
    clauses += [[-var(p, h), -var(q, h)] for h in range(n)
                for p in range(n + 1) for q in range(p + 1, n + 1)]
    return CnfFormula((n + 1) * n, clauses)


@pytest.mark.parametrize("name", ["glucose4", "cadical153"])
def test_pysat_budget_exhaustion(name):
    with pytest.raises(SolverError):
        PysatSolver(name, conflict_budget=10).solve(pigeonhole(8))


def test_unknown_backend():
    with pytest.raises(ValidationError):
        get_backend("minisat-9000")


def _script(tmp_path, body):
    path = tmp_path / "solver.py"
    path.write_text(f"#!{sys.executable}\nimport sys\n{body}\n")
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return str(path)


class TestExternal:
    def test_delegates_to_process(self, tmp_path):
        # stand-in solver process speaking DIMACS in, competition format out
        body = """
from pysat.formula import CNF
from pysat.solvers import Solver
with Solver(bootstrap_with=CNF(from_file=sys.argv[1]).clauses) as s:
    if s.solve():
        print('s SATISFIABLE')
        print('v ' + ' '.join(map(str, s.get_model())) + ' 0')
        sys.exit(10)
print('s UNSATISFIABLE')
sys.exit(20)
"""
        solver = ExternalSolver(_script(tmp_path, body))
        f = CnfFormula(3, [[1, 2], [-1], [-2, 3]])
        model = solver.solve(f)
        assert f.satisfied_by(model)
        assert solver.solve(CnfFormula(1, [[1], [-1]])) is None
        assert infer_minimal(Sample(THREE), 4, solver).n_states == 2

    def test_crash_is_backend_error(self, tmp_path):
        solver = ExternalSolver(_script(tmp_path, "sys.exit(3)"))
        with pytest.raises(SolverError):
            solver.solve(CnfFormula(1, [[1]]))

    def test_missing_binary(self):
        with pytest.raises(SolverError):
            ExternalSolver("/nonexistent/solver").solve(CnfFormula(1, [[1]]))


class TestEncoding:
    def test_empty_sample_k1(self):
        f, ctx = encode_phi(Sample(), 1)
        model = sat_solve(f)
        assert model is not None
        rm = decode_model(model, ctx)
        assert rm.n_states == 1 and rm([C, O]) == [0, 0]

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_conflict_unsat(self, k):
        f, _ = encode_phi(Sample(CONFLICT), k)
        assert sat_solve(f) is None

    def test_three_traces(self):
        assert sat_solve(encode_phi(Sample(THREE), 1)[0]) is None
        f, ctx = encode_phi(Sample(THREE), 2)
        model = sat_solve(f)
        rm = decode_model(model, ctx)
        assert rm.n_states == 2 and consistent_with(rm, THREE)

    def test_k_must_be_positive(self):
        with pytest.raises(ValidationError):
            encode_phi(Sample(), 0)

    def test_variable_meanings(self):
        f, ctx = encode_phi(Sample(THREE), 2)
        kinds = {ctx.meaning(v)[0] for v in range(1, f.variable_count + 1)}
        assert kinds == {"transition", "output", "run"}
        assert ctx.meaning(ctx.d_var(1, 0, 1)) == ("transition", 1, ctx.alphabet[0], 1)

    def test_exactly_one_breach(self):
        f, ctx = encode_phi(Sample(THREE), 2)
        model = sat_solve(f)
        model[ctx.d_var(0, 0, 0)] = model[ctx.d_var(0, 0, 1)] = True
        with pytest.raises(EncodingError):
            decode_model(model, ctx)

    def test_round_trip_known_machine(self, coffee):
        rng = np.random.default_rng(9)
        alphabet = [E, C, O, frozenset({"X"}), frozenset({"c", "X"})]
        sample = Sample()
        for _ in range(15):
            seq = [alphabet[i] for i in rng.integers(len(alphabet), size=6)]
            sample.add(seq, coffee(seq))
        rm = infer_minimal(sample, 4)
        assert rm and consistent_with(rm, sample)
        for labels, rewards in sample:
            assert rm(labels) == list(rewards)


def random_sample(rng, n_traces=6, length=5):
    alphabet = [E, C, O, frozenset({"c", "o"})]
    return Sample([
        ([alphabet[i] for i in rng.integers(4, size=length)],
         [int(x) for x in rng.random(length) < 0.2])
        for _ in range(n_traces)
    ])


class TestSymmetryBreaking:
    def test_same_first_satisfiable_k(self):
        rng = np.random.default_rng(12)
        for _ in range(40):
            sample = random_sample(rng)
            plain = [sat_solve(encode_phi(sample, k)[0]) is not None for k in range(1, 5)]
            sym = [sat_solve(encode_phi(sample, k, symmetry_breaking=True)[0]) is not None
                   for k in range(1, 5)]
            first = plain.index(True) if True in plain else None
            assert (sym.index(True) if True in sym else None) == first

    def test_models_decode_consistently(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            sample = random_sample(rng)
            rm = infer_minimal(sample, 4)
            if rm:
                assert consistent_with(rm, sample)

    def test_direct_conflict(self):
        assert has_direct_conflict(Sample(CONFLICT))
        assert not has_direct_conflict(Sample(THREE))

    def test_trusted_formula_skips_check(self):
        f = CnfFormula.trusted(1, [[1]])
        assert sat_solve(f)[1] is True


class TestSearch:
    def test_empty(self):
        assert infer_minimal(Sample(), 4).n_states == 1
        assert brute_force_infer(Sample(), 3).n_states == 1

    def test_three_traces(self):
        assert infer_minimal(Sample(THREE), 4).n_states == 2
        assert brute_force_infer(Sample(THREE), 3).n_states == 2

    def test_conflict(self):
        assert infer_minimal(Sample(CONFLICT), 4) is NoConsistentMachine
        assert brute_force_infer(Sample(CONFLICT), 3) is NoConsistentMachine
        assert not NoConsistentMachine

    def test_cap_too_small(self):
        # counting modulo 3 needs three states
        seq = [C] * 6
        sample = Sample([(seq, [0, 0, 1, 0, 0, 1])])
        assert infer_minimal(sample, 2) is NoConsistentMachine
        assert infer_minimal(sample, 3).n_states == 3

    def test_monotone_in_k(self):
        sample = Sample([([C] * 6, [0, 0, 1, 0, 0, 1])])
        verdicts = [sat_solve(encode_phi(sample, k)[0]) is not None for k in range(1, 6)]
        assert verdicts == [False, False, True, True, True]

    def test_tractability_guard(self):
        labels = [frozenset({str(i)}) for i in range(5)]
        with pytest.raises(TractabilityError):
            brute_force_infer(Sample([(labels, [0] * 5)]), 3)
        with pytest.raises(TractabilityError):
            brute_force_infer(Sample(), 4)
        with pytest.raises(TractabilityError):
            brute_force_infer(Sample([([E, E, E], [0, 1, 2])]), 3)

    def test_k_start_matches_full_search(self):
        sample = Sample([([C] * 6, [0, 0, 1, 0, 0, 1])])
        assert infer_minimal(sample, 4, k_start=3).n_states == 3

    def test_sample_eviction(self):
        sample = Sample(capacity=3)
        evicted = [sample.add([E] * i, [0] * i) for i in range(1, 5)]
        assert evicted == [False, False, False, True]
        assert [len(l) for l, _ in sample] == [2, 3, 4]

    def test_alphabet_order_canonical(self):
        sample = Sample([([frozenset({"b", "a"}), frozenset({"z"}), E], [0, 0, 0])])
        assert sample.alphabet() == [E, frozenset({"z"}), frozenset({"a", "b"})]


class TestEstimator:
    def test_fit_predict_score(self):
        est = RewardMachineInferrer(k_max=4).fit(THREE)
        assert est.found_ and est.n_states_ == 2
        assert est.predict([[E, C], [C, O]]) == [[0, 0], [0, 1]]
        assert est.score(THREE) == 1.0
        assert est.get_params() == {"k_max": 4, "backend": None}

    def test_not_found(self):
        est = RewardMachineInferrer(k_max=2).fit(CONFLICT)
        assert not est.found_ and est.n_states_ is None
        with pytest.raises(ValueError):
            est.predict([[E]])
