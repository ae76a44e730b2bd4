"""Closed-form quantum Schrodinger bridges between Gaussians and Gaussian mixtures."""

from .bohm import bohm_amplitude_fd, bohm_gaussian, bohm_generic_fd, internal_energy, score_gaussian
from .bridge import (
    BridgeKind,
    BridgeProblem,
    Gaussian,
    GaussianBridge,
    InfeasibleBridgeError,
    beta_max,
    bridge_covariance,
    bridge_covariance_dot,
    bridge_marginal,
    bridge_mean,
    complex_drift_matrix,
    continuity_residual,
    drift_matrix_C,
    drift_velocity,
    hje_residual,
    phase_S,
    population_step,
    riccati_residual,
    sample_marginal,
    wavefunction,
)
from .gmm import (
    EmConfig,
    EmFit,
    GaussianMixture,
    GaussianMixtureEM,
    bohm_mixture,
    em_fit,
    gmm_fit_em,
    gmm_logpdf,
    gmm_sample,
    match_components,
    mixture_score,
    responsibilities,
)
from .metrics import emd_samples, moment_check, subsample, w2_gaussian
from .spd import NotSPDError, solve_sym_lyapunov, spd_eigen, spd_inv, spd_inv_sqrt, spd_logdet, spd_sqrt
from .wavepacket import (
    CoupledMixtureBridge,
    TrainConfig,
    TrainResult,
    WavepacketBridge,
    fit_wavepacket_bridge,
    mixture_marginal,
    propagate_samples,
    train_bridge,
)

__version__ = "0.1.0"
