"""
The beta-divergence family of Bregman generators.

A generator ``Phi`` is a strictly convex scalar function on (0, inf),
normalised so that ``Phi(1) = Phi'(1) = 0``.  For densities ``mu`` and
``pi`` the Bregman divergence is

    B(mu | pi) = int Phi(mu) - Phi(pi) - (mu - pi) Phi'(pi) dx,

which is evaluated here by trapezoidal quadrature on a uniform 1D grid.
``beta = 1`` recovers the Kullback-Leibler divergence, ``beta = 2`` half
the squared L2 distance and ``beta = 0`` the Itakura-Saito divergence.

All functions accept scalars or numpy arrays and are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Densities are clamped at this value before ``log`` / ``Phi'`` in
#: quadrature paths.
DENSITY_FLOOR = 1e-300


@dataclass(frozen=True)
class BetaGenerator:
    """Convex generator of the beta-divergence with parameter ``beta``.

    The cases ``beta == 0`` and ``beta == 1`` are selected by exact
    floating-point comparison.
    """

    beta: float

    def __post_init__(self):
        if not math.isfinite(self.beta):
            raise ValueError(f"beta must be finite, got {self.beta!r}")
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def is_kl(self) -> bool:
        return self.beta == 1.0

    def phi(self, t):
        return phi(self, t)

    def phi_prime(self, t):
        return phi_prime(self, t)

    def phi_second(self, t):
        return phi_second(self, t)


def _as_float_array(t):
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)):
        raise ValueError("NaN passed to a generator function")
    return arr


def _unwrap(arr):
    return arr.item() if arr.ndim == 0 else arr


def phi(gen: BetaGenerator, t):
    """Evaluate the generator ``Phi(t)``.

    At ``t = 0`` the right limit is returned; it is ``+inf`` for
    ``beta <= 0``.  Negative arguments raise ``ValueError``.
    """
    t = _as_float_array(t)
    if np.any(t < 0):
        raise ValueError("Phi is defined on t >= 0 only")
    b = gen.beta
    with np.errstate(divide="ignore", invalid="ignore"):
        if b == 1.0:
            # t log t -> 0 as t -> 0
            tlogt = np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)), 0.0)
            out = tlogt - t + 1.0
        elif b == 0.0:
            out = np.where(t > 0, t - np.log(t) - 1.0, np.inf)
        else:
            tb = np.power(t, b)
            out = (b - 1.0 + tb - b * t) / (b * (b - 1.0))
            if b < 0:
                out = np.where(t > 0, out, np.inf)
    return _unwrap(out)


def phi_prime(gen: BetaGenerator, t):
    """Evaluate ``Phi'(t)``.

    ``t = 0`` is allowed only for ``beta > 1`` where the limit
    ``-1 / (beta - 1)`` is finite.
    """
    t = _as_float_array(t)
    b = gen.beta
    if b > 1.0:
        if np.any(t < 0):
            raise ValueError("Phi' is defined on t >= 0 only")
    elif np.any(t <= 0):
        raise ValueError(f"Phi' requires t > 0 for beta={b}")
    if b == 1.0:
        out = np.log(t)
    elif b == 0.0:
        out = 1.0 - 1.0 / t
    else:
        out = (np.power(t, b - 1.0) - 1.0) / (b - 1.0)
    return _unwrap(out)


def phi_prime_from_log(gen: BetaGenerator, log_t):
    """``Phi'(exp(log_t))`` computed without leaving log space where possible.

    For KL this is the identity, which keeps additive shifts of ``log_t``
    exact.
    """
    log_t = np.asarray(log_t, dtype=float)
    b = gen.beta
    if b == 1.0:
        out = log_t
    elif b == 0.0:
        out = 1.0 - np.exp(-log_t)
    else:
        out = np.expm1((b - 1.0) * log_t) / (b - 1.0)
    return _unwrap(out)


def phi_second(gen: BetaGenerator, t):
    """``Phi''(t) = t**(beta - 2)``, positive for ``t > 0``."""
    t = _as_float_array(t)
    if np.any(t <= 0):
        raise ValueError("Phi'' requires t > 0")
    return _unwrap(np.power(t, gen.beta - 2.0))


def first_variation(gen: BetaGenerator, mu_x, pi_x):
    """First variation ``Phi'(mu(x)) - Phi'(pi(x))`` of ``mu -> B(mu | pi)``."""
    mu_x = _as_float_array(mu_x)
    pi_x = _as_float_array(pi_x)
    if np.any(mu_x <= 0) or np.any(pi_x <= 0):
        raise ValueError("densities must be strictly positive")
    return _unwrap(np.asarray(phi_prime(gen, mu_x)) - np.asarray(phi_prime(gen, pi_x)))


def first_variation_gradient(gen: BetaGenerator, mu_x, grad_mu, pi_x, grad_log_pi):
    """Spatial gradient of the first variation.

    Returns ``Phi''(mu) grad_mu - Phi''(pi) pi grad_log_pi``.  Only the
    score of ``pi`` is needed, so for KL (``Phi''(t) pi = 1``) the result
    ``grad log mu - grad log pi`` does not involve the scale of ``pi``.

    Parameters
    ----------
    mu_x, pi_x : float or array of shape (M,)
        Density values, strictly positive.
    grad_mu, grad_log_pi : array of shape (d,) or (M, d)
    """
    mu_x = _as_float_array(mu_x)
    pi_x = _as_float_array(pi_x)
    if np.any(mu_x <= 0) or np.any(pi_x <= 0):
        raise ValueError("densities must be strictly positive")
    grad_mu = np.asarray(grad_mu, dtype=float)
    grad_log_pi = np.asarray(grad_log_pi, dtype=float)
    b = gen.beta
    # Phi''(pi) * pi == pi**(beta - 1); for KL this is exactly 1.0
    mu_coef = np.power(mu_x, b - 2.0)
    pi_coef = np.power(pi_x, b - 1.0)
    return mu_coef[..., None] * grad_mu - pi_coef[..., None] * grad_log_pi


class GridFunction:
    """Values of a function tabulated on ``n`` uniform points of ``[lo, hi]``."""

    def __init__(self, lo: float, hi: float, values):
        values = np.array(values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("values must be a 1D array with at least 2 points")
        if not hi > lo:
            raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
        self.lo = float(lo)
        self.hi = float(hi)
        self.values = values
        self.values.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    def integral(self) -> float:
        return trapezoid(self.values, self.dx)

    def same_grid(self, other: "GridFunction") -> bool:
        return (self.lo, self.hi, self.n) == (other.lo, other.hi, other.n)

    def __repr__(self):
        return f"{type(self).__name__}(lo={self.lo}, hi={self.hi}, n={self.n})"


class GridDensity(GridFunction):
    """Non-negative density on a uniform grid.

    ``mass`` is the declared total mass (1 for normalised densities, ``c``
    for a density scaled by ``c``), or None when unknown.
    """

    def __init__(self, lo: float, hi: float, values, mass: float | None = None):
        super().__init__(lo, hi, values)
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("density values must be finite and non-negative")
        self.mass = None if mass is None else float(mass)

    @classmethod
    def from_function(cls, f, lo: float, hi: float, n: int, mass=None):
        x = np.linspace(lo, hi, n)
        return cls(lo, hi, f(x), mass=mass)

    def scaled(self, c: float) -> "GridDensity":
        if not c > 0:
            raise ValueError("scale must be positive")
        mass = None if self.mass is None else c * self.mass
        return GridDensity(self.lo, self.hi, c * self.values, mass=mass)

    def check_mass(self, atol: float) -> bool:
        if self.mass is None:
            raise ValueError("no declared mass")
        return abs(self.integral() - self.mass) <= atol


def trapezoid(values, dx: float) -> float:
    values = np.asarray(values, dtype=float)
    return float(dx * (values.sum() - 0.5 * (values[0] + values[-1])))


def bregman_integrand(gen: BetaGenerator, mu_vals, pi_vals) -> np.ndarray:
    """Pointwise ``Phi(mu) - Phi(pi) - (mu - pi) Phi'(pi)`` with the density floor."""
    mu_vals = np.maximum(np.asarray(mu_vals, dtype=float), DENSITY_FLOOR)
    pi_vals = np.maximum(np.asarray(pi_vals, dtype=float), DENSITY_FLOOR)
    return (
        np.asarray(phi(gen, mu_vals))
        - np.asarray(phi(gen, pi_vals))
        - (mu_vals - pi_vals) * np.asarray(phi_prime(gen, pi_vals))
    )


def bregman_divergence(gen: BetaGenerator, mu: GridDensity, pi: GridDensity) -> float:
    """Bregman divergence ``B(mu | pi)`` by trapezoidal quadrature.

    Both densities must live on the same grid.  Values below
    ``DENSITY_FLOOR`` are clamped, so zeros in ``pi`` are tolerated but
    the result then reflects the floor.
    """
    if not mu.same_grid(pi):
        raise ValueError(f"grid mismatch: {mu!r} vs {pi!r}")
    if gen.beta <= 1.0 and np.any(pi.values == 0):
        raise ValueError(f"pi has zeros where Phi' diverges (beta={gen.beta})")
    return trapezoid(bregman_integrand(gen, mu.values, pi.values), mu.dx)


def kl_quadrature(mu: GridDensity, pi: GridDensity) -> float:
    """Direct ``int mu log(mu / pi)`` quadrature; an oracle for ``beta = 1``."""
    if not mu.same_grid(pi):
        raise ValueError("grid mismatch")
    m = np.maximum(mu.values, DENSITY_FLOOR)
    p = np.maximum(pi.values, DENSITY_FLOOR)
    return trapezoid(m * np.log(m / p), mu.dx)
