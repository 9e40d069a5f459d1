"""
Target distributions known up to a normalising constant.

A target exposes the unnormalised log-density ``log gamma(x)`` and the
score ``grad log pi(x) = grad log gamma(x)``.  Analytic test targets also
carry ``log_norm = log Z`` with ``pi = gamma / Z``; samplers never read it.
They are handed a :class:`SamplerView` that only has the two functions.

All density functions are vectorised: ``x`` has shape ``(M, dim)`` (or
``(dim,)`` for a single point) and the returned arrays have shape ``(M,)``
and ``(M, dim)``.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import logsumexp, softmax

from .bregman import GridDensity, trapezoid

LOG_2PI = math.log(2.0 * math.pi)


def _as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    x = np.atleast_1d(x)
    if single:
        x = x.reshape(1, -1) if dim > 1 or x.size == dim else x.reshape(-1, 1)
    if x.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x, single and x.shape[0] == 1


class Target:
    """Base class: subclasses implement ``_log_gamma`` and ``_score`` on (M, dim) arrays."""

    dim: int
    log_norm: float | None = None

    def _log_gamma(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _score(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_density_unnorm(self, x):
        pts, single = _as_points(x, self.dim)
        out = self._log_gamma(pts)
        return float(out[0]) if single else out

    def grad_log_density(self, x):
        pts, single = _as_points(x, self.dim)
        out = self._score(pts)
        return out[0] if single else out

    def log_density(self, x):
        """Normalised log-density.  Verification code only."""
        if self.log_norm is None:
            raise ValueError("target has no known normalising constant")
        return np.asarray(self.log_density_unnorm(x)) - self.log_norm

    def view(self) -> "SamplerView":
        return SamplerView(self)


class SamplerView:
    """What a sampler is allowed to see of a target."""

    __slots__ = ("_target",)

    def __init__(self, target: Target):
        self._target = target

    @property
    def dim(self) -> int:
        return self._target.dim

    def log_density_unnorm(self, x):
        return self._target.log_density_unnorm(x)

    def grad_log_density(self, x):
        return self._target.grad_log_density(x)


def _check_spd(cov: np.ndarray) -> np.ndarray:
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
        raise ValueError("covariance must be symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance is not positive definite") from None


class GaussianTarget(Target):
    """``gamma(x) = exp(-(x - m)^T S^{-1} (x - m) / 2)``; the Gaussian normaliser is dropped."""

    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        self.dim = self.mean.size
        if self.cov.shape != (self.dim, self.dim):
            raise ValueError(f"mean has dim {self.dim} but cov has shape {self.cov.shape}")
        chol = _check_spd(self.cov)
        self.precision = np.linalg.inv(self.cov)
        logdet = 2.0 * np.log(np.diag(chol)).sum()
        self.log_norm = 0.5 * self.dim * LOG_2PI + 0.5 * logdet

    def _log_gamma(self, x):
        r = x - self.mean
        return -0.5 * np.einsum("mi,ij,mj->m", r, self.precision, r)

    def _score(self, x):
        return -(x - self.mean) @ self.precision

    def __repr__(self):
        return f"GaussianTarget(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


def gaussian_target(mean, cov) -> GaussianTarget:
    return GaussianTarget(mean, cov)


class MixtureTarget(Target):
    """Gaussian mixture whose exposed ``gamma`` is ``exp(kappa)`` times the normalised mixture.

    ``kappa`` defaults to the log-normaliser of the first component, so a
    one-component mixture coincides with :class:`GaussianTarget`.
    """

    def __init__(self, weights, components: Sequence, kappa: float | None = None):
        if len(components) == 0:
            raise ValueError("mixture needs at least one component")
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(components),):
            raise ValueError(
                f"{weights.size} weights for {len(components)} components"
            )
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-10:
            raise ValueError("mixture weights must be positive and sum to 1")
        self.weights = weights
        self.components = [
            c if isinstance(c, GaussianTarget) else GaussianTarget(*c) for c in components
        ]
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise ValueError(f"components have differing dimensions {sorted(dims)}")
        self.dim = dims.pop()
        self.kappa = self.components[0].log_norm if kappa is None else float(kappa)
        self.log_norm = self.kappa
        self._log_coef = np.log(weights) - np.array([c.log_norm for c in self.components])

    def _component_logs(self, x):
        return np.stack([c._log_gamma(x) for c in self.components], axis=1) + self._log_coef

    def _log_gamma(self, x):
        return logsumexp(self._component_logs(x), axis=1) + self.kappa

    def _score(self, x):
        resp = softmax(self._component_logs(x), axis=1)
        scores = np.stack([c._score(x) for c in self.components], axis=1)
        return np.einsum("mk,mkd->md", resp, scores)


def mixture_target(weights, components, kappa=None) -> MixtureTarget:
    """Gaussian mixture target; ``components`` is a list of ``(mean, cov)`` pairs."""
    return MixtureTarget(weights, components, kappa)


class ScaledTarget(Target):
    """``c * gamma`` for a base target; the score is the base's, untouched."""

    def __init__(self, base: Target, log_c: float):
        self.base = base
        self.log_c = float(log_c)
        self.dim = base.dim
        self.log_norm = None if base.log_norm is None else base.log_norm + self.log_c

    @property
    def c(self) -> float:
        return math.exp(self.log_c)

    def _log_gamma(self, x):
        return self.base._log_gamma(x) + self.log_c

    def _score(self, x):
        return self.base._score(x)

    def __repr__(self):
        return f"ScaledTarget({self.base!r}, log_c={self.log_c})"


def scaled(target: Target, c: float) -> ScaledTarget:
    if not c > 0:
        raise ValueError("scale c must be positive")
    return ScaledTarget(target, math.log(c))


def to_grid(
    target: Target,
    lo: float,
    hi: float,
    n: int,
    normalised: bool = False,
    numerical: bool = False,
) -> GridDensity:
    """Tabulate ``gamma`` (or ``pi`` if ``normalised``) of a 1D target.

    Normalisation uses ``target.log_norm``; with ``numerical=True`` and no
    ``log_norm`` the trapezoidal mass on the grid is used instead.
    """
    if target.dim != 1:
        raise ValueError("to_grid needs a one-dimensional target")
    if not lo < hi or n < 2:
        raise ValueError("need lo < hi and n >= 2")
    x = np.linspace(lo, hi, n)
    log_vals = np.asarray(target.log_density_unnorm(x[:, None]))
    if not normalised:
        mass = None if target.log_norm is None else math.exp(target.log_norm)
        return GridDensity(lo, hi, np.exp(log_vals), mass=mass)
    if target.log_norm is not None:
        return GridDensity(lo, hi, np.exp(log_vals - target.log_norm), mass=1.0)
    if not numerical:
        raise ValueError("target has no log_norm; pass numerical=True to normalise on the grid")
    vals = np.exp(log_vals - log_vals.max())
    return GridDensity(lo, hi, vals / trapezoid(vals, (hi - lo) / (n - 1)), mass=1.0)
