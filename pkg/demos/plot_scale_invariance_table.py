"""
Which divergences ignore the normalising constant?
==================================================

Multiplying the target by a constant ``c`` shifts the first variation of
``mu -> B(mu | pi)`` by ``Delta(x) = Phi'(pi(x)) - Phi'(c pi(x))``.  A
gradient flow only sees the gradient of the first variation, so the flow is
blind to ``c`` exactly when ``Delta`` does not depend on ``x``.

This script tabulates the range of ``Delta`` over a grid for several
members of the beta family, and the change in the divergence value itself.
"""

import math
from pathlib import Path

import numpy as np

from bregflow import BetaGenerator, GridDensity, first_variation_shift, scan, to_grid
from bregflow.plotting import line_plot
from bregflow.targets import gaussian_target

out = Path("demo_out")
out.mkdir(exist_ok=True)

# %%
# The target is a standard normal tabulated on [-10, 10].  The two trial
# measures ``mu`` differ only in location.

lo, hi, n = -10.0, 10.0, 4001
pi = to_grid(gaussian_target([0.0], [[1.0]]), lo, hi, n, normalised=True)
x = pi.x
mus = [GridDensity(lo, hi, np.exp(-0.5 * (x - m) ** 2) / math.sqrt(2 * math.pi)) for m in (0.0, 1.0)]

# %%
# For KL (beta = 1) the defect is zero to rounding, the shift is ``-log c``
# and the divergence moves by ``c - 1 - log c`` whichever ``mu`` we use.
# Every other beta leaves a defect of order one.

print(f"{'beta':>5} {'c':>5} {'defect':>11} {'mean shift':>11} {'B shift':>11} {'mu spread':>10}")
for r in scan([0.0, 0.5, 1.0, 2.0, 3.0], [0.5, 2.0, 10.0], pi, mus):
    print(
        f"{r.beta:5g} {r.c:5g} {r.constancy_defect:11.3e} {r.mean_shift:11.3e} "
        f"{r.divergence_shift:11.4e} {r.divergence_shift_spread:10.2e}"
    )
print(f"\nc - 1 - log c at c = 2: {1 - math.log(2):.6f}")

# %%
# The shape of ``Delta`` itself: flat for KL, bell-shaped at beta = 2
# (where it equals ``-pi``) and exploding in the tails for beta < 1.

window = np.abs(x) <= 4
series = {}
for beta in (0.5, 1.0, 2.0):
    delta = first_variation_shift(BetaGenerator(beta), 2.0, pi)
    series[f"beta={beta:g}"] = delta.values[window]
svg = line_plot(x[window], series, "x", "shift of first variation", "Target scaled by c = 2")
(out / "first_variation_shift.svg").write_text(svg, encoding="utf-8")
print(f"wrote {out / 'first_variation_shift.svg'}")
