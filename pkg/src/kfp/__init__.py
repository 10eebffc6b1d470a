"""Numerical toolkit for subelliptic estimates of Kramers-Fokker-Planck operators with polynomial potentials."""

from .assumption import AssumptionReport, CriticalSet, check_assumption, compact_resolvent_indicator, find_critical_points
from .errors import (BreakdownError, ClassificationAmbiguous, HypothesisViolated, KFPError, NonConvergence,
                     NotFound, PotentialParseError, SupportViolation)
from .estimates import (EstimateReport, localization_pipeline_trace, verify_bnv_lower, verify_bnv_remainder,
                        verify_inf_inequality, verify_main_theorem)
from .operators import (Discretization, OperatorMatrix, assemble_Kj, assemble_KV, assemble_Op, assemble_weight,
                        assemble_XV, smallest_singular_value)
from .partition import (DyadicPartition, FinePartition, RadialCutoffPair, build_fine_partition, build_radial_pair,
                        ims_residual, normalize_dyadic, scale_state, scaled_norm_check, select_nu)
from .potential import (HomogeneousPotential, Polynomial, growth_exponent, load_potential, paper_constants,
                        parse_potential_text, trace_split)

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport", "CriticalSet", "check_assumption", "compact_resolvent_indicator",
    "find_critical_points", "BreakdownError", "ClassificationAmbiguous", "HypothesisViolated", "KFPError",
    "NonConvergence", "NotFound", "PotentialParseError", "SupportViolation", "EstimateReport",
    "localization_pipeline_trace", "verify_bnv_lower", "verify_bnv_remainder", "verify_inf_inequality",
    "verify_main_theorem", "Discretization", "OperatorMatrix", "assemble_Kj", "assemble_KV", "assemble_Op",
    "assemble_weight", "assemble_XV", "smallest_singular_value", "DyadicPartition", "FinePartition",
    "RadialCutoffPair", "build_fine_partition", "build_radial_pair", "ims_residual", "normalize_dyadic",
    "scale_state", "scaled_norm_check", "select_nu", "HomogeneousPotential", "Polynomial", "growth_exponent",
    "load_potential", "paper_constants", "parse_potential_text", "trace_split",
]
