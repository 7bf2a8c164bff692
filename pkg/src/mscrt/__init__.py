"""Multivariate conditional randomization tests from sufficient statistics.

Copies of a tested block ``X_T`` are drawn conditionally on a sufficient
statistic of the covariates, so the test is valid in finite samples without
knowing the covariate parameters. See :func:`run_crt` for the one-call
entry point and :mod:`mscrt.simulation` for the study harness.
"""

__version__ = "0.1.0"

from .engine import (
    CrtConfig,
    CrtResult,
    crt_pvalue,
    randomized_pvalue,
    run_crt,
    sample_copies,
)
from .errors import ConfigurationError, MscrtError, NumericalError
from .graph import Graph, parse_edge_list, read_edge_list
from .linalg import DataMatrix
from .multiplicity import (
    GroupSpec,
    bh_select,
    by_select,
    ebh_select,
    group_select,
    p_to_boosted_e,
)
from .samplers import CopySet, hub_sweep_copies, mvn_crt_copies
from .statistics import KINDS, make_distillation, prepare

__all__ = [
    "KINDS",
    "ConfigurationError",
    "CopySet",
    "CrtConfig",
    "CrtResult",
    "DataMatrix",
    "Graph",
    "GroupSpec",
    "MscrtError",
    "NumericalError",
    "bh_select",
    "by_select",
    "crt_pvalue",
    "ebh_select",
    "group_select",
    "hub_sweep_copies",
    "make_distillation",
    "mvn_crt_copies",
    "p_to_boosted_e",
    "parse_edge_list",
    "prepare",
    "randomized_pvalue",
    "read_edge_list",
    "run_crt",
    "sample_copies",
]
