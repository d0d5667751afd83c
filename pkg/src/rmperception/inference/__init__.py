"""SAT-based inference of minimal reward machines from counterexample traces."""
from .cnf import CnfFormula, parse_dimacs
from .encoding import DecodeContext, build_prefix_tree, decode_model, encode_phi
from .estimator import RewardMachineInferrer
from .sample import Sample, label_key
from .search import (
    BRUTE_FORCE_LIMITS, NoConsistentMachine, brute_force_infer, has_direct_conflict, infer_minimal,
)
from .solvers import CdclSolver, ExternalSolver, PysatSolver, get_backend, sat_solve

__all__ = [
    "BRUTE_FORCE_LIMITS", "CdclSolver", "CnfFormula", "DecodeContext", "ExternalSolver",
    "NoConsistentMachine", "PysatSolver", "RewardMachineInferrer", "Sample",
    "brute_force_infer", "build_prefix_tree", "decode_model", "encode_phi", "get_backend",
    "has_direct_conflict", "infer_minimal", "label_key", "parse_dimacs", "sat_solve",
]
