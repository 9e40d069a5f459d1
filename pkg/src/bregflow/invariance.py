"""
Scale dependence of beta-Bregman objectives.

Replacing a target ``pi`` by ``c * pi`` changes the first variation of
``mu -> B(mu | pi)`` by ``Delta(x) = Phi'(pi(x)) - Phi'(c pi(x))``.  A flow
is unaffected by the unknown scale exactly when ``Delta`` is constant in
``x``; within the beta family that happens only for KL, where
``Delta = -log c``.  Integrally, ``B(mu | c pi) - B(mu | pi)`` is then
``c - 1 - log c`` for every normalised ``mu``.

This module measures both quantities on 1D grids.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .bregman import BetaGenerator, GridDensity, GridFunction, bregman_divergence, phi_prime


@dataclass(frozen=True)
class InvarianceReport:
    beta: float
    c: float
    constancy_defect: float
    mean_shift: float
    divergence_shift: float
    divergence_shift_spread: float
    lo: float
    hi: float
    n: int

    def as_dict(self) -> dict:
        return asdict(self)


def first_variation_shift(gen: BetaGenerator, c: float, pi: GridDensity) -> GridFunction:
    """Tabulate ``Phi'(pi(x)) - Phi'(c pi(x))`` on the grid of ``pi``."""
    if not c > 0:
        raise ValueError("c must be positive")
    if np.any(pi.values <= 0):
        raise ValueError("pi must be strictly positive on the grid")
    vals = np.asarray(phi_prime(gen, pi.values)) - np.asarray(phi_prime(gen, c * pi.values))
    return GridFunction(pi.lo, pi.hi, vals)


def constancy_defect(delta: GridFunction) -> float:
    """``max - min`` of a tabulated shift; zero iff it is constant on the grid."""
    vals = np.asarray(delta.values if isinstance(delta, GridFunction) else delta)
    if vals.size == 0:
        raise ValueError("empty grid")
    return float(vals.max() - vals.min())


def divergence_shift(gen: BetaGenerator, c: float, mu: GridDensity, pi: GridDensity) -> float:
    """``B(mu | c pi) - B(mu | pi)`` by quadrature; ``pi`` should be normalised."""
    if not c > 0:
        raise ValueError("c must be positive")
    return bregman_divergence(gen, mu, pi.scaled(c)) - bregman_divergence(gen, mu, pi)


def report(
    beta: float, c: float, pi: GridDensity, mus: Sequence[GridDensity]
) -> InvarianceReport:
    gen = BetaGenerator(beta)
    delta = first_variation_shift(gen, c, pi)
    shifts = np.array([divergence_shift(gen, c, mu, pi) for mu in mus])
    return InvarianceReport(
        beta=float(beta),
        c=float(c),
        constancy_defect=constancy_defect(delta),
        mean_shift=float(np.mean(delta.values)),
        divergence_shift=float(shifts.mean()) if shifts.size else float("nan"),
        divergence_shift_spread=float(np.ptp(shifts)) if shifts.size else float("nan"),
        lo=pi.lo,
        hi=pi.hi,
        n=pi.n,
    )


def scan(
    betas: Sequence[float],
    cs: Sequence[float],
    pi: GridDensity,
    mus: Sequence[GridDensity],
) -> list[InvarianceReport]:
    """Reports for every ``(beta, c)`` pair, sorted by ``(beta, c)``.

    ``divergence_shift`` is averaged over ``mus`` and
    ``divergence_shift_spread`` is its range across them, the integral
    measure of ``mu``-dependence.
    """
    return [report(b, c, pi, mus) for b in sorted(betas) for c in sorted(cs)]
