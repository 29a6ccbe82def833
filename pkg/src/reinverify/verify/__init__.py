"""Decision procedures for DRLP properties."""
from .bab import ReluBranchNode, ResourceExhausted, solve
from .interval import UnboundedInput, solve_interval
from .model_check import bmc, k_induction, verify
from .query import ArityError, ConstraintQuery, NotInductible, build_induction_query, build_query
from .result import NonPiecewiseLinear, VerifyResult

__all__ = [
    "ArityError", "ConstraintQuery", "NonPiecewiseLinear", "NotInductible", "ReluBranchNode",
    "ResourceExhausted", "UnboundedInput", "VerifyResult", "bmc", "build_induction_query",
    "build_query", "k_induction", "solve", "solve_interval", "verify",
]
