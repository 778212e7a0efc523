"""ARQ budget planning for multi-hop decode-and-forward relays."""

__version__ = "0.1.0"

from .channel import (  # noqa: E402
    ASYMPTOTIC,
    LinkSpec,
    OutageProfile,
    QuadratureError,
    capacity,
    dispersion,
    outage_probability,
    outage_profile,
    q_function,
    sample_snr,
    snr_pdf,
)
from .estimators import ArqAllocator, OutageTransformer  # noqa: E402
from .optimizer import (  # noqa: E402
    Method,
    OptimizationReport,
    OptimizationRequest,
    exhaustive_search,
    greedy_prune,
    multi_fold_csc_case1,
    multi_fold_csc_case2,
    multi_fold_csc_case3,
    multi_fold_sc,
    one_fold,
    optimal_tail_split,
    optimize,
    search_space_size,
)
from .pdp import (  # noqa: E402
    ClusterCase,
    NetworkLayout,
    ResidualDistribution,
    Strategy,
    VirtualNetwork,
    canonicalize_cluster,
    collapse_cluster,
    evaluate_pdp,
    pdp_csc_exact,
    pdp_non_cooperative,
    pdp_sc_exact,
    pdp_sc_sequence_form,
    psp_at_cluster_exit,
)
from .scenario import Scenario, ScenarioError, load_scenario  # noqa: E402
from .simulator import DelayModel, SimulationReport, delay_profile, simulate  # noqa: E402

__all__ = [
    "ASYMPTOTIC",
    "ArqAllocator",
    "ClusterCase",
    "DelayModel",
    "LinkSpec",
    "Method",
    "NetworkLayout",
    "OptimizationReport",
    "OptimizationRequest",
    "OutageProfile",
    "OutageTransformer",
    "QuadratureError",
    "ResidualDistribution",
    "Scenario",
    "ScenarioError",
    "SimulationReport",
    "Strategy",
    "VirtualNetwork",
    "canonicalize_cluster",
    "capacity",
    "collapse_cluster",
    "delay_profile",
    "dispersion",
    "evaluate_pdp",
    "exhaustive_search",
    "greedy_prune",
    "load_scenario",
    "multi_fold_csc_case1",
    "multi_fold_csc_case2",
    "multi_fold_csc_case3",
    "multi_fold_sc",
    "one_fold",
    "optimal_tail_split",
    "optimize",
    "outage_probability",
    "outage_profile",
    "pdp_csc_exact",
    "pdp_non_cooperative",
    "pdp_sc_exact",
    "pdp_sc_sequence_form",
    "psp_at_cluster_exit",
    "q_function",
    "sample_snr",
    "search_space_size",
    "simulate",
    "snr_pdf",
]
