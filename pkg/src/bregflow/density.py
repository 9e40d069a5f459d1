"""
Weighted Gaussian kernel density estimates of a particle ensemble.

The estimate is ``mu_hat(x) = sum_i w_i N(x; c_i, h^2 I)``.  Evaluation is
exact and O(N M) in the number of centres and query points; queries are
processed in blocks to bound memory.  Everything is computed in log space
so that ``mu_hat`` stays strictly positive far from the particles.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

_BLOCK_ELEMS = 2_000_000


@dataclass(frozen=True)
class KdeEstimator:
    centers: np.ndarray
    weights: np.ndarray
    bandwidth: float

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        weights = np.asarray(self.weights, dtype=float)
        if centers.shape[0] == 0:
            raise ValueError("KDE needs at least one centre")
        if weights.shape != (centers.shape[0],):
            raise ValueError("one weight per centre required")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def log_density(self, x):
        return kde_log_density(self, x)

    def density(self, x):
        return kde_density(self, x)

    def grad(self, x):
        return kde_grad(self, x)

    def grad_log(self, x):
        return kde_grad_log(self, x)

    def log_density_and_grad_log(self, x):
        return kde_log_density_and_grad_log(self, x)


def silverman_bandwidth(positions: np.ndarray, weights: np.ndarray) -> float:
    """``sigma * (4 / ((d + 2) N)) ** (1 / (d + 4))``.

    ``sigma`` is the weighted per-coordinate standard deviation averaged over
    coordinates.  Returns 0 for a degenerate ensemble.
    """
    n, d = positions.shape
    mean = weights @ positions
    var = weights @ (positions - mean) ** 2
    sigma = float(np.mean(np.sqrt(np.maximum(var, 0.0))))
    return sigma * (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))


def kde_fit(ens, bandwidth="silverman") -> KdeEstimator:
    """Fit a Gaussian KDE to a weighted ensemble.

    Parameters
    ----------
    ens : Ensemble
        Anything with ``positions`` (N, d) and normalised ``log_weights`` (N,).
    bandwidth : "silverman" or float
        Bandwidth rule, or a fixed bandwidth ``h``.
    """
    positions = np.atleast_2d(np.asarray(ens.positions, dtype=float))
    if positions.shape[0] == 0:
        raise ValueError("cannot fit a KDE to an empty ensemble")
    weights = np.exp(np.asarray(ens.log_weights, dtype=float))
    weights = weights / weights.sum()
    if isinstance(bandwidth, str):
        if bandwidth != "silverman":
            raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
        h = silverman_bandwidth(positions, weights)
        if not h > 0:
            warnings.warn("zero ensemble spread; Silverman rule falls back to h = 1", RuntimeWarning)
            h = 1.0
    else:
        h = float(bandwidth)
    return KdeEstimator(positions, weights, h)


def _query(est: KdeEstimator, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    if single:
        x = x.reshape(1, -1) if est.dim > 1 or x.size == 1 else x.reshape(-1, 1)
        single = x.shape[0] == 1
    if x.shape[1] != est.dim:
        raise ValueError(f"query dimension {x.shape[1]} != estimator dimension {est.dim}")
    return x, single


def _blocks(m: int, n: int, d: int):
    size = max(1, _BLOCK_ELEMS // max(1, n * d))
    for start in range(0, m, size):
        yield slice(start, min(m, start + size))


def _evaluate(est: KdeEstimator, pts: np.ndarray, want_grad: bool):
    """Log-density and (optionally) score at ``pts`` of shape (M, d)."""
    n, d = est.centers.shape
    inv_2h2 = 0.5 / est.bandwidth**2
    with np.errstate(divide="ignore"):
        log_w = np.log(est.weights)
    log_dens = np.empty(pts.shape[0])
    score = np.empty_like(pts) if want_grad else None
    for sl in _blocks(pts.shape[0], n, d):
        # diff[m, i, :] = c_i - x_m
        diff = est.centers[None, :, :] - pts[sl, None, :]
        sq = np.square(diff[..., 0]) if d == 1 else np.square(diff).sum(axis=-1)
        terms = log_w - sq * inv_2h2
        top = terms.max(axis=1)
        terms -= top[:, None]
        np.exp(terms, out=terms)
        total = terms.sum(axis=1)
        log_dens[sl] = np.log(total) + top
        if want_grad:
            score[sl] = np.einsum("mi,mid->md", terms, diff) / total[:, None]
    log_dens += -0.5 * d * math.log(2.0 * math.pi * est.bandwidth**2)
    if want_grad:
        score /= est.bandwidth**2
    return log_dens, score


def kde_log_density(est: KdeEstimator, x):
    pts, single = _query(est, x)
    out, _ = _evaluate(est, pts, False)
    return float(out[0]) if single else out


def kde_density(est: KdeEstimator, x):
    """Density value(s) ``sum_i w_i N(x; c_i, h^2 I)``."""
    return np.exp(kde_log_density(est, x))


def kde_grad_log(est: KdeEstimator, x):
    """Score of the estimate: kernel-responsibility weighted ``(c_i - x) / h^2``."""
    pts, single = _query(est, x)
    _, out = _evaluate(est, pts, True)
    return out[0] if single else out


def kde_log_density_and_grad_log(est: KdeEstimator, x):
    """Both quantities from a single pass over the centres."""
    pts, single = _query(est, x)
    log_dens, score = _evaluate(est, pts, True)
    return (float(log_dens[0]), score[0]) if single else (log_dens, score)


def kde_grad(est: KdeEstimator, x):
    log_dens, g = kde_log_density_and_grad_log(est, x)
    return np.exp(log_dens)[..., None] * g
