"""Gamma-Poisson matrix factorization with exact marginal likelihood and
Monte Carlo EM dictionary estimation."""

__version__ = "0.1.0"

from .distributions import (
    NegBinParams,
    NegMultParams,
    nb_log_pmf,
    nb_sample,
    nm_log_pmf,
    nm_sample_compound,
    nm_sample_mixture,
)
from .errors import (
    BudgetExceededError,
    DataFormatError,
    DegenerateSupportError,
    GapError,
    NumericalError,
    ParameterError,
    ShapeError,
)
from .inference import (
    GibbsState,
    McemConfig,
    SampleSums,
    TraceRecord,
    collect_sums,
    gibbs_sweep,
    init_w,
    initial_state,
    mstep_c,
    mstep_ch,
    mstep_h,
    read_trace_csv,
    run_mcem,
    write_trace_csv,
)
from .marginal import (
    AdmissibleSetSpec,
    DEFAULT_TERM_BUDGET,
    EventProbs,
    MarginalParts,
    admissible_cardinality,
    enumerate_compositions,
    enumeration_terms,
    event_probs,
    marginal_nll,
    marginal_nll_decomposed,
)
from .model import (
    ComponentTensor,
    GapModel,
    SparseCountMatrix,
    generate_compound,
    generate_hierarchical,
    generate_nm,
    joint_nll,
    kl_divergence,
)
from .rng import make_rng, substream

__all__ = [
    "__version__",
    "NegBinParams",
    "NegMultParams",
    "nb_log_pmf",
    "nb_sample",
    "nm_log_pmf",
    "nm_sample_compound",
    "nm_sample_mixture",
    "GapError",
    "ParameterError",
    "ShapeError",
    "DataFormatError",
    "BudgetExceededError",
    "DegenerateSupportError",
    "NumericalError",
    "SparseCountMatrix",
    "ComponentTensor",
    "GapModel",
    "generate_hierarchical",
    "generate_nm",
    "generate_compound",
    "kl_divergence",
    "joint_nll",
    "EventProbs",
    "AdmissibleSetSpec",
    "MarginalParts",
    "event_probs",
    "enumerate_compositions",
    "enumeration_terms",
    "admissible_cardinality",
    "marginal_nll",
    "marginal_nll_decomposed",
    "DEFAULT_TERM_BUDGET",
    "GibbsState",
    "SampleSums",
    "McemConfig",
    "TraceRecord",
    "initial_state",
    "gibbs_sweep",
    "collect_sums",
    "mstep_ch",
    "mstep_h",
    "mstep_c",
    "init_w",
    "run_mcem",
    "write_trace_csv",
    "read_trace_csv",
    "make_rng",
    "substream",
]
