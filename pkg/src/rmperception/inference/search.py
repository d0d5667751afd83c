"""Minimal consistent reward machine: SAT search and an exhaustive oracle."""
import logging

from ..exceptions import TractabilityError, ValidationError
from ..reward_machine import consistent_with, initial_hypothesis
from .encoding import PrefixTree, build_prefix_tree, decode_model, encode_phi, machine_from_tables
from .sample import Sample
from .solvers import get_backend

logger = logging.getLogger(__name__)


class _NoConsistentMachine:
    """Result of a search that found no machine within the state bound."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __bool__(self):
        return False

    def __repr__(self):
        return "NoConsistentMachine"

    def __reduce__(self):
        return (_NoConsistentMachine, ())


NoConsistentMachine = _NoConsistentMachine()


def _as_sample(sample):
    return sample if isinstance(sample, Sample) else Sample(sample)


def has_direct_conflict(sample):
    """True when two traces share a label prefix but disagree on its reward.

    No machine of any size is consistent with such a sample.
    """
    tree = sample if isinstance(sample, PrefixTree) else build_prefix_tree(_as_sample(sample))
    return any(len(outs) > 1 for outs in tree.outputs)


def infer_minimal(sample, k_max, backend=None, k_start=1):
    """Smallest machine (by state count, at most ``k_max``) consistent with ``sample``.

    Tries ``k = k_start, ..., k_max`` in order and returns the first decoded
    model, or :data:`NoConsistentMachine`. Passing ``k_start > 1`` is only
    exact when every smaller ``k`` is already known to be UNSAT.
    """
    if k_max < 1:
        raise ValidationError("k_max must be at least 1")
    if k_start < 1:
        raise ValidationError("k_start must be at least 1")
    sample = _as_sample(sample)
    if len(sample) == 0 and k_start == 1:
        return initial_hypothesis()
    tree = build_prefix_tree(sample)
    if has_direct_conflict(tree):
        return NoConsistentMachine
    solver = get_backend(backend)
    for k in range(k_start, k_max + 1):
        formula, ctx = encode_phi(tree, k, symmetry_breaking=True)
        assignment = solver.solve(formula)
        logger.debug("k=%d vars=%d clauses=%d sat=%s", k, formula.variable_count,
                     len(formula.clauses), assignment is not None)
        if assignment is not None:
            return decode_model(assignment, ctx)
    return NoConsistentMachine


BRUTE_FORCE_LIMITS = {"alphabet": 4, "k_max": 3, "rewards": 2}


def brute_force_infer(sample, k_max):
    """Exhaustive search for the smallest consistent machine.

    Transition entries are branched on lazily, in the order the traces reach
    them, so only reachable parts of the machine are enumerated. Refuses
    inputs beyond :data:`BRUTE_FORCE_LIMITS`.
    """
    sample = _as_sample(sample)
    alphabet = sample.alphabet()
    rewards = sample.reward_values()
    lim = BRUTE_FORCE_LIMITS
    if len(alphabet) > lim["alphabet"] or k_max > lim["k_max"] or len(rewards) > lim["rewards"]:
        raise TractabilityError(
            f"brute force limited to |alphabet|<={lim['alphabet']}, k_max<={lim['k_max']}, "
            f"|rewards|<={lim['rewards']}; got {len(alphabet)}, {k_max}, {len(rewards)}"
        )
    traces = [(list(l), list(r)) for l, r in sample]
    for k in range(1, k_max + 1):
        found = _dfs(traces, k, {}, {})
        if found is not None:
            delta, sigma = found
            rm = machine_from_tables(k, alphabet, delta, sigma)
            assert consistent_with(rm, sample)
            return rm
    return NoConsistentMachine


def _dfs(traces, k, delta, sigma):
    # Walk all traces under the partial tables; branch at the first gap.
    for labels, rews in traces:
        v = 0
        for lab, r in zip(labels, rews):
            key = (v, lab)
            if key in delta:
                if sigma[key] != r:
                    return None
                v = delta[key]
                continue
            sigma[key] = r
            for w in range(k):
                delta[key] = w
                found = _dfs(traces, k, delta, sigma)
                if found is not None:
                    return found
            del delta[key]
            del sigma[key]
            return None
    return dict(delta), dict(sigma)
