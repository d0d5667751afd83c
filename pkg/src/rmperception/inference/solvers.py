"""Pluggable SAT backends.

Every backend exposes ``solve(formula) -> list[bool] | None``: a list indexed
by variable (index 0 unused) for satisfiable formulas, ``None`` for UNSAT.
Failures of the backend itself raise :class:`SolverError`.
"""
import heapq
import os
import shlex
import subprocess
import tempfile

from ..exceptions import SolverError, ValidationError


def _luby(i):
    k = 1
    while (1 << k) - 1 < i:
        k += 1
    while True:
        if i == (1 << k) - 1:
            return 1 << (k - 1)
        if i >= 1 << (k - 1):
            i -= (1 << (k - 1)) - 1
        k -= 1
        while (1 << k) - 1 < i:
            k += 1


class CdclSolver:
    """Small conflict-driven clause-learning solver.

    Two watched literals, first-UIP learning, activity-based branching with
    phase saving and Luby restarts. Adequate for desk-scale encodings; large
    instances should go to the PySAT or external backends.
    """

    name = "cdcl"

    def __init__(self, restart_base=100):
        self.restart_base = restart_base

    def solve(self, formula):
        return _Cdcl(formula.variable_count, formula.clauses, self.restart_base).run()


class _Cdcl:
    def __init__(self, n, clauses, restart_base):
        self.n = n
        self.val = [0] * (n + 1)
        self.level = [0] * (n + 1)
        self.reason = [None] * (n + 1)
        self.phase = [False] * (n + 1)
        self.act = [0.0] * (n + 1)
        self.inc = 1.0
        self.trail = []
        self.lim = []
        self.qhead = 0
        self.watches = {}
        self.heap = [(0.0, v) for v in range(1, n + 1)]
        self.restart_base = restart_base
        self.ok = True
        for clause in clauses:
            c = sorted(set(clause), key=abs)
            if any(-l in c for l in c if l > 0):
                continue
            if not c:
                self.ok = False
            elif len(c) == 1:
                if not self._enqueue(c[0], None):
                    self.ok = False
            else:
                self._attach(c)

    def _value(self, lit):
        v = self.val[abs(lit)]
        return v if lit > 0 else -v

    def _attach(self, c):
        self.watches.setdefault(c[0], []).append(c)
        self.watches.setdefault(c[1], []).append(c)

    def _enqueue(self, lit, reason):
        cur = self._value(lit)
        if cur:
            return cur > 0
        v = abs(lit)
        self.val[v] = 1 if lit > 0 else -1
        self.level[v] = len(self.lim)
        self.reason[v] = reason
        self.trail.append(lit)
        return True

    def _propagate(self):
        while self.qhead < len(self.trail):
            false_lit = -self.trail[self.qhead]
            self.qhead += 1
            ws = self.watches.get(false_lit, [])
            kept = []
            i = 0
            conflict = None
            while i < len(ws):
                c = ws[i]
                i += 1
                if c[0] == false_lit:
                    c[0], c[1] = c[1], c[0]
                if self._value(c[0]) > 0:
                    kept.append(c)
                    continue
                for k in range(2, len(c)):
                    if self._value(c[k]) >= 0:
                        c[1], c[k] = c[k], c[1]
                        self.watches.setdefault(c[1], []).append(c)
                        break
                else:
                    kept.append(c)
                    if self._value(c[0]) < 0:
                        conflict = c
                        kept.extend(ws[i:])
                        break
                    self._enqueue(c[0], c)
            self.watches[false_lit] = kept
            if conflict is not None:
                return conflict
        return None

    def _bump(self, v):
        self.act[v] += self.inc
        if self.act[v] > 1e100:
            self.act = [a * 1e-100 for a in self.act]
            self.inc *= 1e-100
            self.heap = [(-self.act[u], u) for u in range(1, self.n + 1) if not self.val[u]]
            heapq.heapify(self.heap)
        elif not self.val[v]:
            heapq.heappush(self.heap, (-self.act[v], v))

    def _analyze(self, conflict):
        seen = set()
        learnt = [0]
        counter = 0
        lit = None
        idx = len(self.trail) - 1
        clause = conflict
        cur = len(self.lim)
        while True:
            for q in clause:
                if lit is not None and q == lit:
                    continue
                v = abs(q)
                if v in seen or self.level[v] == 0:
                    continue
                seen.add(v)
                self._bump(v)
                if self.level[v] == cur:
                    counter += 1
                else:
                    learnt.append(q)
            while abs(self.trail[idx]) not in seen:
                idx -= 1
            lit = self.trail[idx]
            idx -= 1
            seen.discard(abs(lit))
            counter -= 1
            if counter == 0:
                break
            clause = self.reason[abs(lit)]
        learnt[0] = -lit
        if len(learnt) == 1:
            return learnt, 0
        best = max(range(1, len(learnt)), key=lambda j: self.level[abs(learnt[j])])
        learnt[1], learnt[best] = learnt[best], learnt[1]
        return learnt, self.level[abs(learnt[1])]

    def _backtrack(self, lvl):
        if len(self.lim) <= lvl:
            return
        start = self.lim[lvl]
        for lit in self.trail[start:]:
            v = abs(lit)
            self.phase[v] = lit > 0
            self.val[v] = 0
            self.reason[v] = None
            heapq.heappush(self.heap, (-self.act[v], v))
        del self.trail[start:]
        del self.lim[lvl:]
        self.qhead = len(self.trail)

    def _decide(self):
        while self.heap:
            _, v = heapq.heappop(self.heap)
            if not self.val[v]:
                return v
        return 0

    def run(self):
        if not self.ok or self._propagate() is not None:
            return None
        restarts = 1
        budget = self.restart_base * _luby(restarts)
        conflicts = 0
        while True:
            conflict = self._propagate()
            if conflict is not None:
                if not self.lim:
                    return None
                learnt, back = self._analyze(conflict)
                self._backtrack(back)
                if len(learnt) == 1:
                    self._enqueue(learnt[0], None)
                else:
                    self._attach(learnt)
                    self._enqueue(learnt[0], learnt)
                self.inc *= 1.05
                conflicts += 1
                continue
            if conflicts >= budget:
                self._backtrack(0)
                restarts += 1
                budget = self.restart_base * _luby(restarts)
                conflicts = 0
            v = self._decide()
            if not v:
                return [False] + [x > 0 for x in self.val[1:]]
            self.lim.append(len(self.trail))
            self._enqueue(v if self.phase[v] else -v, None)


class PysatSolver:
    """Backend delegating to a PySAT solver (Glucose 4 by default).

    ``conflict_budget`` bounds the search; exhausting it raises SolverError.
    """

    name = "pysat"

    def __init__(self, solver_name="glucose4", conflict_budget=None):
        self.solver_name = solver_name
        self.conflict_budget = conflict_budget

    def solve(self, formula):
        try:
            from pysat.solvers import Solver
        except ImportError as exc:  # pragma: no cover - depends on install
            raise SolverError("python-sat is not installed") from exc
        with Solver(name=self.solver_name, bootstrap_with=formula.clauses) as s:
            if self.conflict_budget is None:
                verdict = s.solve()
            else:
                s.conf_budget(self.conflict_budget)
                verdict = s.solve_limited()
                if verdict is None:
                    raise SolverError("conflict budget exhausted")
            if not verdict:
                return None
            model = s.get_model() or []
        values = [False] * (formula.variable_count + 1)
        for lit in model:
            if abs(lit) <= formula.variable_count:
                values[abs(lit)] = lit > 0
        return values


class ExternalSolver:
    """Runs a DIMACS solver process: ``command <file.cnf>``.

    The process must follow the SAT-competition output format (``s`` and
    ``v`` lines); exit codes 10/20 are accepted as SAT/UNSAT.
    """

    name = "external"

    def __init__(self, command, timeout=None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.command:
            raise ValidationError("external solver command is empty")
        self.timeout = timeout

    def solve(self, formula):
        fd, path = tempfile.mkstemp(suffix=".cnf")
        try:
            with os.fdopen(fd, "w") as fh:
                fh.write(formula.to_dimacs())
            try:
                proc = subprocess.run(
                    self.command + [path], capture_output=True, text=True,
                    timeout=self.timeout,
                )
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise SolverError(f"external solver failed: {exc}") from exc
        finally:
            os.unlink(path)
        status = None
        values = [False] * (formula.variable_count + 1)
        for line in proc.stdout.splitlines():
            if line.startswith("s "):
                status = line[2:].strip()
            elif line.startswith("v "):
                for tok in line[2:].split():
                    lit = int(tok)
                    if lit and abs(lit) <= formula.variable_count:
                        values[abs(lit)] = lit > 0
        if status == "UNSATISFIABLE" or (status is None and proc.returncode == 20):
            return None
        if status == "SATISFIABLE" or (status is None and proc.returncode == 10):
            return values
        raise SolverError(
            f"external solver exited with code {proc.returncode} and no verdict: "
            f"{proc.stderr.strip()[:200]}"
        )


def _pysat_available():
    try:
        import pysat.solvers  # noqa: F401
    except ImportError:  # pragma: no cover
        return False
    return True


def get_backend(backend=None, conflict_budget=None):
    """Resolve a backend name, command or instance.

    ``None``/``"auto"`` picks PySAT when installed and the embedded solver
    otherwise; ``"external:<command>"`` runs a solver process.
    ``conflict_budget`` applies to PySAT backends only.
    """
    if backend is None or backend == "auto":
        if _pysat_available():
            return PysatSolver(conflict_budget=conflict_budget)
        return CdclSolver()
    if hasattr(backend, "solve"):
        return backend
    if backend == "cdcl":
        return CdclSolver()
    if backend == "pysat":
        return PysatSolver(conflict_budget=conflict_budget)
    if isinstance(backend, str) and backend.startswith("pysat:"):
        return PysatSolver(backend.split(":", 1)[1], conflict_budget)
    if isinstance(backend, str) and backend.startswith("external:"):
        return ExternalSolver(backend.split(":", 1)[1])
    raise ValidationError(f"unknown SAT backend {backend!r}")


def sat_solve(formula, backend=None):
    """Solve ``formula``; returns an assignment list or ``None`` for UNSAT."""
    return get_backend(backend).solve(formula)
