"""Vector compressed sensing: AMP solvers, minimax-risk theory and a phase-transition harness."""
from .denoisers import (
    BlockSoft,
    CovarianceState,
    JamesStein,
    avg_divergence,
    avg_jacobian,
    eta_bst,
    eta_colored,
    eta_js,
    jac,
    make_covariance_state,
)
from .distributions import parse_dist
from .exceptions import (
    DegenerateSparsityError,
    DivergedError,
    NoTransitionError,
    ThresholdRangeError,
    VacuousSignalError,
)
from .risk import (
    SparsePrior,
    bayes_two_point_bound,
    m_bst,
    m_js,
    predict_pt_se,
    r_js_zero,
    risk_mc,
    se_run,
    tau_minimax,
)
from .signal_model import gen_measurement, gen_signal, ingest_sparsify, make_rng, relative_error, sample_support
from .solvers import (
    SolveOptions,
    SolveResult,
    array_amp,
    general_vcs,
    group_bp_admm,
    oracle_recover,
    softsense,
    steinsense,
)

__version__ = "0.1.0"
