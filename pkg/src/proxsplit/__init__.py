"""Degenerate preconditioned proximal point splitting."""

from .engine import (
    BlockAssembly,
    IterationTrace,
    RelaxationSchedule,
    StoppingRule,
    evaluate_T,
    evaluate_Ttilde,
    ppp_iterate,
    rppp_iterate,
)
from .operators import OperatorBlock
from .rates import RateCertificate, drs_contraction_factor, empirical_rate
from .schemes import (
    SchemeAssembly,
    SchemeConfig,
    build_cp,
    build_drs,
    build_fdr,
    build_parallel_fdr,
    build_relaxed_drs,
    build_sequential_fdr,
    run,
    validate_params,
)
from .spaces import BlockLayout, BlockVector, Factorization, Preconditioner, factor_psd

__version__ = "0.1.0"

__all__ = [
    "BlockAssembly",
    "BlockLayout",
    "BlockVector",
    "Factorization",
    "IterationTrace",
    "OperatorBlock",
    "Preconditioner",
    "RateCertificate",
    "RelaxationSchedule",
    "SchemeAssembly",
    "SchemeConfig",
    "StoppingRule",
    "build_cp",
    "build_drs",
    "build_fdr",
    "build_parallel_fdr",
    "build_relaxed_drs",
    "build_sequential_fdr",
    "drs_contraction_factor",
    "empirical_rate",
    "evaluate_T",
    "evaluate_Ttilde",
    "factor_psd",
    "ppp_iterate",
    "rppp_iterate",
    "run",
    "validate_params",
]
