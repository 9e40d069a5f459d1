"""Particle gradient flows for beta-Bregman divergences and checks of their scale dependence."""

__version__ = "0.1.0"

from .bregman import (
    BetaGenerator,
    GridDensity,
    GridFunction,
    bregman_divergence,
    first_variation,
    first_variation_gradient,
    phi,
    phi_prime,
)
from .density import KdeEstimator, kde_density, kde_fit, kde_grad, kde_grad_log
from .flows import (
    Ensemble,
    FlowConfig,
    GaussianLaw,
    NumericalError,
    ess,
    exact_fr_gaussian,
    fr_bregman_reweight_step,
    fr_kl_reweight_step,
    langevin_chain,
    mala_step,
    resample_systematic,
    run_flow,
    svgd_step,
    ula_step,
    wasserstein_blob_step,
    wfr_step,
)
from .invariance import (
    InvarianceReport,
    constancy_defect,
    divergence_shift,
    first_variation_shift,
    scan,
)
from .targets import ScaledTarget, Target, gaussian_target, mixture_target, scaled, to_grid
