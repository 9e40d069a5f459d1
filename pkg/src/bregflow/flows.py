"""
Particle discretisations of gradient flows on probability measures.

An :class:`Ensemble` of weighted particles stands for the current law
``mu_t``.  Each step function returns a new ensemble; nothing is mutated.

Metrics and their one-step schemes:

``wasserstein``
    KL: unadjusted Langevin (optionally Metropolis-adjusted).  Other
    beta: deterministic blob transport with velocity
    ``-grad_x [Phi'(mu_hat) - Phi'(pi)]``, ``mu_hat`` a KDE.
``fisher_rao``
    KL: importance reweighting by ``(pi / mu_hat) ** (1 - exp(-gamma))``.
    Other beta: explicit Euler on the log-weights with the centred first
    variation.
``wfr``
    A Wasserstein move followed by a Fisher-Rao reweight and resampling
    when the effective sample size drops.
``stein``
    SVGD with an RBF kernel (KL only).

The non-KL Fisher-Rao and Wasserstein schemes are implementation choices;
only the KL flows have a canonical discretisation.

Randomness is drawn from counter-based streams addressed by
``(seed, step, purpose)`` (see :mod:`bregflow.rng`), so a run is a pure
function of its seed.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import logsumexp

from . import rng
from .bregman import DENSITY_FLOOR, BetaGenerator, first_variation_gradient, phi_prime_from_log
from .density import KdeEstimator, kde_fit
from .targets import SamplerView, Target

METRICS = ("wasserstein", "fisher_rao", "wfr", "stein")
LOG_FLOOR = math.log(DENSITY_FLOOR)


class NumericalError(RuntimeError):
    """A step produced or consumed non-finite values."""


def normalise_log_weights(log_weights: np.ndarray) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=float)
    return lw - logsumexp(lw)


@dataclass(frozen=True)
class Ensemble:
    """Weighted particles; ``(seed, step_index)`` is the random-stream state."""

    positions: np.ndarray
    log_weights: np.ndarray
    step_index: int = 0
    seed: int = 0
    time: float = 0.0

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        lw = np.asarray(self.log_weights, dtype=float)
        if lw.shape != (pos.shape[0],):
            raise ValueError(f"{lw.shape} log-weights for {pos.shape[0]} particles")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def from_positions(cls, positions, seed: int = 0) -> "Ensemble":
        pos = np.atleast_2d(np.asarray(positions, dtype=float))
        if pos.shape[0] == 1 and np.ndim(positions) == 1:
            pos = pos.T
        n = pos.shape[0]
        return cls(pos, np.full(n, -math.log(n)), seed=seed)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.positions

    def var(self) -> np.ndarray:
        return self.weights @ (self.positions - self.mean()) ** 2

    def replace(self, **changes) -> "Ensemble":
        return dataclasses.replace(self, **changes)

    def advance(self, gamma: float) -> "Ensemble":
        return self.replace(step_index=self.step_index + 1, time=self.time + gamma)


@dataclass(frozen=True)
class GaussianLaw:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("cov shape does not match mean")
        if np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValueError("cov must be positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, n: int, seed: int) -> np.ndarray:
        z = rng.normals(seed, 0, (n, self.dim), rng.Purpose.INIT)
        return self.mean + z @ np.linalg.cholesky(self.cov).T


Bandwidth = Union[str, float]


@dataclass(frozen=True)
class FlowConfig:
    metric: str = "wfr"
    beta: float = 1.0
    gamma: float = 0.05
    n_steps: int = 100
    n_particles: int = 1000
    bandwidth: Bandwidth = "silverman"
    kernel_lengthscale: float = 1.0
    resample_threshold: float = 0.5
    seed: int = 0
    metropolis: bool = False
    use_normalised: bool = False

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0.0 <= self.resample_threshold <= 1.0:
            raise ValueError("resample_threshold must lie in [0, 1]")
        if self.n_steps < 0 or self.n_particles < 1:
            raise ValueError("n_steps must be >= 0 and n_particles >= 1")
        if not self.kernel_lengthscale > 0:
            raise ValueError("kernel_lengthscale must be positive")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "silverman":
                raise ValueError(f"unknown bandwidth rule {self.bandwidth!r}")
        elif not self.bandwidth > 0:
            raise ValueError("fixed bandwidth must be positive")
        if self.metric == "stein" and self.beta != 1.0:
            raise ValueError("the Stein flow is implemented for KL (beta = 1) only")

    @property
    def generator(self) -> BetaGenerator:
        return BetaGenerator(self.beta)


def _view(target) -> SamplerView:
    return target if isinstance(target, SamplerView) else target.view()


def _scores(view: SamplerView, x: np.ndarray) -> np.ndarray:
    g = np.asarray(view.grad_log_density(x)).reshape(x.shape)
    bad = ~np.all(np.isfinite(g), axis=1)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise NumericalError(f"non-finite score at particle {i}, x={x[i].tolist()}")
    return g


def _log_target(view: SamplerView, x: np.ndarray) -> np.ndarray:
    lg = np.atleast_1d(np.asarray(view.log_density_unnorm(x), dtype=float))
    if not np.all(np.isfinite(lg)):
        raise NumericalError("non-finite log-density at a particle")
    return lg


def _finite_positions(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"{what} produced non-finite positions")
    return x


def _finite_weights(lw: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(lw)):
        raise NumericalError(f"{what} produced non-finite log-weights")
    return lw


# Wasserstein ---------------------------------------------------------------


def _ula_move(ens: Ensemble, view: SamplerView, gamma: float) -> np.ndarray:
    x = ens.positions
    z = rng.normals(ens.seed, ens.step_index, x.shape)
    return _finite_positions(x + gamma * _scores(view, x) + math.sqrt(2.0 * gamma) * z, "ULA")


def ula_step(ens: Ensemble, target, gamma: float) -> Ensemble:
    """One Euler-Maruyama step ``x + gamma grad log pi(x) + sqrt(2 gamma) z``."""
    return ens.replace(positions=_ula_move(ens, _view(target), gamma)).advance(gamma)


def mala_log_acceptance(view: SamplerView, x, y, gamma: float) -> np.ndarray:
    """Log Metropolis-Hastings ratio for Langevin proposals, using unnormalised densities."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    gx, gy = _scores(view, x), _scores(view, y)
    log_q_y_x = -np.sum((y - x - gamma * gx) ** 2, axis=1) / (4.0 * gamma)
    log_q_x_y = -np.sum((x - y - gamma * gy) ** 2, axis=1) / (4.0 * gamma)
    return _log_target(view, y) - _log_target(view, x) + log_q_x_y - log_q_y_x


def _mala_move(ens: Ensemble, view: SamplerView, gamma: float) -> tuple[np.ndarray, int]:
    x = ens.positions
    y = _ula_move(ens, view, gamma)
    log_alpha = mala_log_acceptance(view, x, y, gamma)
    u = rng.uniforms(ens.seed, ens.step_index, ens.n, rng.Purpose.METROPOLIS)
    accept = np.log(u) < np.minimum(log_alpha, 0.0)
    return np.where(accept[:, None], y, x), int(accept.sum())


def mala_step(ens: Ensemble, target, gamma: float) -> tuple[Ensemble, int]:
    """Langevin proposal with Metropolis-Hastings correction.

    Returns the new ensemble and the number of accepted proposals.
    """
    x, n_acc = _mala_move(ens, _view(target), gamma)
    return ens.replace(positions=x).advance(gamma), n_acc


def langevin_chain(
    target,
    x0,
    gamma: float,
    n_steps: int,
    seed: int = 0,
    metropolis: bool = False,
    start_step: int = 0,
) -> tuple[np.ndarray, int]:
    """Run ULA (or MALA) for ``n_steps`` and return every state.

    Produces exactly the positions of repeated :func:`ula_step` /
    :func:`mala_step` calls on an ensemble at ``x0``, but caches scores
    and log-densities between steps, which matters for long single chains.

    Returns
    -------
    path : ndarray, shape (n_steps, N, d)
        State after each step.
    n_accepted : int
        Total accepted proposals (``n_steps * N`` for ULA).
    """
    view = _view(target)
    x = np.array(np.atleast_2d(np.asarray(x0, dtype=float)))
    streams = rng.Streams(seed)
    sq = math.sqrt(2.0 * gamma)
    path = np.empty((n_steps,) + x.shape)
    gx = _scores(view, x)
    lx = _log_target(view, x) if metropolis else None
    n_acc = 0
    for k in range(n_steps):
        step = start_step + k
        z = streams.at(step, rng.Purpose.LANGEVIN).standard_normal(x.shape)
        y = _finite_positions(x + gamma * gx + sq * z, "ULA")
        gy = _scores(view, y)
        if metropolis:
            ly = _log_target(view, y)
            log_q_y_x = -np.sum((y - x - gamma * gx) ** 2, axis=1) / (4.0 * gamma)
            log_q_x_y = -np.sum((x - y - gamma * gy) ** 2, axis=1) / (4.0 * gamma)
            log_alpha = ly - lx + log_q_x_y - log_q_y_x
            u = streams.at(step, rng.Purpose.METROPOLIS).random(x.shape[0])
            accept = np.log(u) < np.minimum(log_alpha, 0.0)
            n_acc += int(accept.sum())
            x = np.where(accept[:, None], y, x)
            gx = np.where(accept[:, None], gy, gx)
            lx = np.where(accept, ly, lx)
        else:
            x, gx = y, gy
            n_acc += x.shape[0]
        path[k] = x
    return path, n_acc


def _pi_log_values(target, x: np.ndarray, use_normalised: bool) -> np.ndarray:
    log_pi = _log_target(_view(target), x)
    if use_normalised:
        if target.log_norm is None:
            raise ValueError("use_normalised requires a target with a known log_norm")
        log_pi = log_pi - target.log_norm
    return log_pi


def _blob_velocity(
    ens: Ensemble, gen: BetaGenerator, target, kde: KdeEstimator, use_normalised: bool
) -> np.ndarray:
    x = ens.positions
    log_mu, score_mu = kde.log_density_and_grad_log(x)
    log_mu = np.maximum(np.asarray(log_mu), LOG_FLOOR)
    mu = np.exp(log_mu)
    grad_mu = mu[:, None] * np.asarray(score_mu).reshape(x.shape)
    log_pi = _pi_log_values(target, x, use_normalised)
    clamped = (log_pi < LOG_FLOOR) | (log_mu <= LOG_FLOOR)
    if gen.beta != 1.0 and np.any(clamped):
        warnings.warn(
            f"{int(clamped.sum())} density values clamped at {DENSITY_FLOOR:g}", RuntimeWarning
        )
    pi_x = np.maximum(np.exp(log_pi), DENSITY_FLOOR)
    grad_log_pi = _scores(_view(target), x)
    return -first_variation_gradient(gen, mu, grad_mu, pi_x, grad_log_pi)


def wasserstein_blob_step(
    ens: Ensemble,
    gen: BetaGenerator,
    target,
    gamma: float,
    kde: KdeEstimator | None = None,
    use_normalised: bool = False,
    bandwidth: Bandwidth = "silverman",
) -> Ensemble:
    """Deterministic transport along ``-grad_x`` of the first variation.

    ``mu`` is replaced by a KDE of the ensemble; ``pi`` is the unnormalised
    target unless ``use_normalised`` (verification only).  Weights are kept.
    """
    if kde is None:
        kde = kde_fit(ens, bandwidth)
    v = _blob_velocity(ens, gen, target, kde, use_normalised)
    x = _finite_positions(ens.positions + gamma * v, "blob step")
    return ens.replace(positions=x).advance(gamma)


# Fisher-Rao ---------------------------------------------------------------


def _fr_kl_log_weights(ens: Ensemble, view: SamplerView, gamma: float, kde: KdeEstimator):
    x = ens.positions
    incr = -math.expm1(-gamma) * (_log_target(view, x) - np.asarray(kde.log_density(x)))
    return normalise_log_weights(_finite_weights(ens.log_weights + incr, "FR-KL reweight"))


def fr_kl_reweight_step(
    ens: Ensemble,
    target,
    gamma: float,
    kde: KdeEstimator | None = None,
    bandwidth: Bandwidth = "silverman",
) -> Ensemble:
    """Multiply weights by ``(gamma(x) / mu_hat(x)) ** (1 - exp(-gamma))`` and renormalise.

    Renormalisation removes any constant factor, so the unnormalised target
    suffices.
    """
    if kde is None:
        kde = kde_fit(ens, bandwidth)
    lw = _fr_kl_log_weights(ens, _view(target), gamma, kde)
    return ens.replace(log_weights=lw).advance(gamma)


def fr_bregman_potential(
    ens: Ensemble, gen: BetaGenerator, target, kde: KdeEstimator, use_normalised: bool = False
) -> np.ndarray:
    """``V(x) = Phi'(mu_hat(x)) - Phi'(pi(x))`` at the particles."""
    x = ens.positions
    log_mu = np.maximum(np.asarray(kde.log_density(x)), LOG_FLOOR)
    log_pi = np.maximum(_pi_log_values(target, x, use_normalised), LOG_FLOOR)
    return np.asarray(phi_prime_from_log(gen, log_mu)) - np.asarray(phi_prime_from_log(gen, log_pi))


def _fr_bregman_log_weights(ens, gen, target, gamma, kde, use_normalised):
    v = fr_bregman_potential(ens, gen, target, kde, use_normalised)
    v_centred = v - ens.weights @ v
    lw = ens.log_weights - gamma * v_centred
    return normalise_log_weights(_finite_weights(lw, "FR-Bregman reweight"))


def fr_bregman_reweight_step(
    ens: Ensemble,
    gen: BetaGenerator,
    target,
    gamma: float,
    kde: KdeEstimator | None = None,
    use_normalised: bool = False,
    bandwidth: Bandwidth = "silverman",
) -> Ensemble:
    """Explicit Euler step of the Fisher-Rao flow for a beta-divergence.

    ``log w <- log w - gamma (V - E_w[V])``; the centring is the mass
    conserving expectation term.
    """
    if kde is None:
        kde = kde_fit(ens, bandwidth)
    lw = _fr_bregman_log_weights(ens, gen, target, gamma, kde, use_normalised)
    return ens.replace(log_weights=lw).advance(gamma)


# Resampling ----------------------------------------------------------------


def ess(ens: Ensemble) -> float:
    """Effective sample size ``1 / sum w_i^2``."""
    w = ens.weights
    return float(1.0 / np.sum(w * w))


def resample_systematic(ens: Ensemble) -> Ensemble:
    """Systematic resampling to ``N`` equally weighted particles.

    The single uniform is drawn from the resampling stream of the current
    step.
    """
    n = ens.n
    u = rng.uniforms(ens.seed, ens.step_index, 1, rng.Purpose.RESAMPLE)[0]
    cdf = np.cumsum(ens.weights)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, (u + np.arange(n)) / n, side="right")
    idx = np.minimum(idx, n - 1)
    return ens.replace(positions=ens.positions[idx], log_weights=np.full(n, -math.log(n)))


def maybe_resample(ens: Ensemble, threshold: float) -> tuple[Ensemble, bool]:
    if ess(ens) < threshold * ens.n:
        return resample_systematic(ens), True
    return ens, False


# Combined / Stein ------------------------------------------------------------


def wfr_step(
    ens: Ensemble, gen: BetaGenerator, target, gamma: float, config: FlowConfig
) -> tuple[Ensemble, bool]:
    """Wasserstein move, Fisher-Rao reweight, then conditional resampling.

    The KDE is refitted before each sub-step that needs it.  Returns the new
    ensemble and whether it was resampled.
    """
    ens, _, resampled = _wfr(ens, gen, target, gamma, config)
    return ens, resampled


def _wfr(ens, gen, target, gamma, config):
    view = _view(target)
    n_acc = None
    if gen.is_kl:
        if config.metropolis:
            x, n_acc = _mala_move(ens, view, gamma)
        else:
            x = _ula_move(ens, view, gamma)
        moved = ens.replace(positions=x)
        lw = _fr_kl_log_weights(moved, view, gamma, kde_fit(moved, config.bandwidth))
    else:
        kde = kde_fit(ens, config.bandwidth)
        v = _blob_velocity(ens, gen, target, kde, config.use_normalised)
        moved = ens.replace(positions=_finite_positions(ens.positions + gamma * v, "blob step"))
        lw = _fr_bregman_log_weights(
            moved, gen, target, gamma, kde_fit(moved, config.bandwidth), config.use_normalised
        )
    out, resampled = maybe_resample(moved.replace(log_weights=lw), config.resample_threshold)
    return out.advance(gamma), n_acc, resampled


def svgd_direction(x: np.ndarray, scores: np.ndarray, lengthscale: float) -> np.ndarray:
    """``(1/N) sum_j [k(x_i, x_j) s_j + grad_1 k(x_j, x_i)]`` for the RBF kernel."""
    n = x.shape[0]
    diff = x[:, None, :] - x[None, :, :]  # x_i - x_j
    k = np.exp(-np.einsum("ijd,ijd->ij", diff, diff) / (2.0 * lengthscale**2))
    drift = k @ scores
    repulsion = np.einsum("ij,ijd->id", k, diff) / lengthscale**2
    return (drift + repulsion) / n


def svgd_step(ens: Ensemble, target, gamma: float, lengthscale: float = 1.0) -> Ensemble:
    """Explicit Euler step of the SVGD particle ODE with ``k = exp(-|x-y|^2 / (2 l^2))``."""
    x = ens.positions
    phi = svgd_direction(x, _scores(_view(target), x), lengthscale)
    return ens.replace(positions=_finite_positions(x + gamma * phi, "SVGD")).advance(gamma)


# Exact oracle ----------------------------------------------------------------


def exact_fr_gaussian(mu0: GaussianLaw, pi: GaussianLaw, t: float) -> GaussianLaw:
    """Law at time ``t`` of the Fisher-Rao KL flow, ``mu_t ~ pi^lam mu0^(1-lam)``.

    ``lam = 1 - exp(-t)``; precisions and precision-weighted means
    interpolate linearly.  Covariances must be diagonal.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    for law in (mu0, pi):
        if np.any(law.cov != np.diag(np.diag(law.cov))):
            raise ValueError("exact_fr_gaussian supports diagonal covariances only")
    lam = -math.expm1(-t)
    tau0 = 1.0 / np.diag(mu0.cov)
    taup = 1.0 / np.diag(pi.cov)
    tau = lam * taup + (1.0 - lam) * tau0
    mean = (lam * taup * pi.mean + (1.0 - lam) * tau0 * mu0.mean) / tau
    return GaussianLaw(mean, np.diag(1.0 / tau))


# Driver ------------------------------------------------------------------------


@dataclass
class StepRecord:
    step: int
    time: float
    ess: float
    mean: np.ndarray
    var: np.ndarray
    acceptance_rate: float | None = None
    resampled: bool = False


def record(ens: Ensemble, acceptance_rate=None, resampled=False) -> StepRecord:
    return StepRecord(
        ens.step_index, ens.time, ess(ens), ens.mean(), ens.var(), acceptance_rate, resampled
    )


def flow_step(ens: Ensemble, target, config: FlowConfig) -> tuple[Ensemble, StepRecord]:
    """Advance one step of the flow selected by ``config``."""
    gen = config.generator
    gamma = config.gamma
    acc = None
    resampled = False
    if config.metric == "wasserstein":
        if gen.is_kl:
            if config.metropolis:
                ens, n_acc = mala_step(ens, target, gamma)
                acc = n_acc / ens.n
            else:
                ens = ula_step(ens, target, gamma)
        else:
            ens = wasserstein_blob_step(
                ens, gen, target, gamma, use_normalised=config.use_normalised,
                bandwidth=config.bandwidth,
            )
    elif config.metric == "fisher_rao":
        kde = kde_fit(ens, config.bandwidth)
        view = _view(target)
        if gen.is_kl:
            lw = _fr_kl_log_weights(ens, view, gamma, kde)
        else:
            lw = _fr_bregman_log_weights(ens, gen, target, gamma, kde, config.use_normalised)
        ens, resampled = maybe_resample(ens.replace(log_weights=lw), config.resample_threshold)
        ens = ens.advance(gamma)
    elif config.metric == "wfr":
        ens, n_acc, resampled = _wfr(ens, gen, target, gamma, config)
        if n_acc is not None:
            acc = n_acc / ens.n
    else:
        ens = svgd_step(ens, target, gamma, config.kernel_lengthscale)
    return ens, record(ens, acc, resampled)


def run_flow(
    target: Target,
    config: FlowConfig,
    init: GaussianLaw | Ensemble,
    callback: Callable[[Ensemble, StepRecord], None] | None = None,
) -> tuple[Ensemble, list[StepRecord]]:
    """Run ``config.n_steps`` steps; returns the final ensemble and per-step records.

    Record 0 describes the initial ensemble.
    """
    if isinstance(init, Ensemble):
        ens = init
    else:
        ens = Ensemble.from_positions(init.sample(config.n_particles, config.seed), config.seed)
    records = [record(ens)]
    if callback is not None:
        callback(ens, records[0])
    for _ in range(config.n_steps):
        ens, rec = flow_step(ens, target, config)
        records.append(rec)
        if callback is not None:
            callback(ens, rec)
    return ens, records
