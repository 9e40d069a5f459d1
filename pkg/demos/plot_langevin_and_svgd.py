"""
Langevin chains and Stein particles on a standard normal
========================================================

Two ways of moving particles with the score ``grad log gamma``: a single
long Langevin chain (with and without the Metropolis correction) and a
small interacting SVGD ensemble.  Neither ever evaluates the normalising
constant.
"""

import numpy as np

from bregflow import FlowConfig, GaussianLaw, langevin_chain, run_flow
from bregflow.targets import gaussian_target

std = gaussian_target([0.0], [[1.0]])

# %%
# ULA has a step-size bias: its stationary variance on N(0, 1) is
# ``1 / (1 - gamma / 2)``.  MALA removes it; with a small step almost every
# proposal is accepted.

gamma, burn, keep = 0.05, 2_000, 40_000
for metropolis in (False, True):
    path, n_acc = langevin_chain(std, [[0.0]], gamma, burn + keep, seed=2, metropolis=metropolis)
    s = path[burn:, 0, 0]
    name = "MALA" if metropolis else "ULA"
    print(f"{name}: mean {s.mean():+.3f}  second moment {np.mean(s**2):.3f}  "
          f"acceptance {n_acc / (burn + keep):.4f}")
print(f"ULA stationary variance for gamma={gamma}: {1 / (1 - gamma / 2):.4f}")

# %%
# SVGD from a far-away, tight start.  The repulsive kernel term spreads the
# particles while the driving term pulls them to the mode.

cfg = FlowConfig(metric="stein", gamma=0.05, n_steps=500, n_particles=200, seed=0)
final, records = run_flow(std, cfg, GaussianLaw([-3.0], [[0.25]]))
for r in records[::100] + [records[-1]]:
    print(f"step {r.step:4d}  mean {r.mean[0]:+.4f}  var {r.var[0]:.4f}")
