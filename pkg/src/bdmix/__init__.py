"""Mixing-rate certificates and finite-time statistics for many-server queues.

Birth-death chains (single-, n- and infinite-server) with exact stationary
laws, transient evolution by uniformization, spectral-gap oracles, drift
certificates, Poincare constants stitched from local bounds, regime-resolved
mixing rates, and the tail/idle/moment bounds they imply.
"""

from .bdchain import (
    BirthDeathChain,
    RegimeSpec,
    StateDistribution,
    build_mminf,
    build_mmn,
    choose_truncation,
    choose_truncation_mminf,
    dirac,
    extend_window,
    from_probs,
    generator_apply,
    stationary,
    uniform,
)
from .lyapunov import (
    DriftCertificate,
    LyapunovFunction,
    certify_drift,
    extract_drift,
    mean_field_certificate,
    mminf_certificate,
    sub_hw_certificate,
    super_hw_certificate,
)
from .poincare import (
    LocalPoincareBound,
    PoincareCertificate,
    canonical_path_constant,
    constant_b_certificate,
    g_constants,
    mean_field_poincare,
    roughly_uniform_bounds,
    singleton_certificate,
    stitch,
    stitched_certificate,
    sub_hw_poincare,
    truncation_local_bound,
    verify_poincare,
    weighted_poincare_super_hw,
)
from .regimes import (
    MixingRateBound,
    c_n,
    d_n,
    h_n,
    l_n,
    mixing_time_bound,
    theorem1_rate,
    zeta_spectral_bound,
)
from .spectral import (
    ConvergenceError,
    SpectralResult,
    beta_hat_lower_bound,
    dirichlet_form,
    f_star_bound,
    rayleigh,
    spectral_gap,
    van_doorn_bound,
    variance,
)
from .stats import (
    TailBoundSpec,
    chi_variational_check,
    idle_prob_bound,
    make_tail_spec,
    mean_queue_envelope,
    mgf,
    mgf_steady_bound,
    moment_gap_bound,
    simulate_queue,
    tail_bound,
    tail_threshold,
    variance_bound_check,
)
from .transient import chi, chi_square, decay_trace, evolve, tv_distance

__version__ = "0.1.0"

__all__ = [
    "BirthDeathChain",
    "ConvergenceError",
    "DriftCertificate",
    "LocalPoincareBound",
    "LyapunovFunction",
    "MixingRateBound",
    "PoincareCertificate",
    "RegimeSpec",
    "SpectralResult",
    "StateDistribution",
    "TailBoundSpec",
    "beta_hat_lower_bound",
    "build_mminf",
    "build_mmn",
    "c_n",
    "canonical_path_constant",
    "certify_drift",
    "chi",
    "chi_square",
    "chi_variational_check",
    "choose_truncation",
    "choose_truncation_mminf",
    "constant_b_certificate",
    "d_n",
    "decay_trace",
    "dirac",
    "dirichlet_form",
    "evolve",
    "extend_window",
    "extract_drift",
    "f_star_bound",
    "from_probs",
    "g_constants",
    "generator_apply",
    "h_n",
    "idle_prob_bound",
    "l_n",
    "make_tail_spec",
    "mean_field_certificate",
    "mean_field_poincare",
    "mean_queue_envelope",
    "mgf",
    "mgf_steady_bound",
    "mixing_time_bound",
    "mminf_certificate",
    "moment_gap_bound",
    "rayleigh",
    "roughly_uniform_bounds",
    "simulate_queue",
    "singleton_certificate",
    "spectral_gap",
    "stationary",
    "stitch",
    "stitched_certificate",
    "sub_hw_certificate",
    "sub_hw_poincare",
    "super_hw_certificate",
    "tail_bound",
    "tail_threshold",
    "theorem1_rate",
    "truncation_local_bound",
    "tv_distance",
    "uniform",
    "van_doorn_bound",
    "variance",
    "variance_bound_check",
    "verify_poincare",
    "weighted_poincare_super_hw",
    "zeta_spectral_bound",
]
