"""
One stochastic path of the predator-prey-taxis system
=====================================================

Integrates a single trajectory from bump initial data and prints how the
spatial means and the L2 norms evolve.  Nothing here is random beyond the
seeded Wiener increments, so the printout is the same on every run.
"""

import numpy as np

from preytaxis import EnsembleConfig, SpectralState, StepConfig, integrate
from preytaxis.spectral import mean_value, norms

# %%
# Desk-scale setup: 16 cosine modes on [0, 1], dt well below the explicit
# diffusion ceiling.
cfg = EnsembleConfig(n_modes=16, step=StepConfig(dt=1e-4, t_end=0.5, record_every=500))
system = cfg.system()
print(f"dt ceiling {system.dt_ceiling():.3g}, using dt={cfg.step.dt:g}")

c1, c2 = cfg.initial()
traj = integrate(SpectralState(0.0, c1, c2), cfg.step, system, cfg.policy(), trajectory=0)

# %%
# Means and norms at the recorded times.
basis = cfg.basis()
print(" t      mean u1  mean u2  ||u1||   ||u2||")
for t, a, b in zip(traj.times, traj.c1, traj.c2):
    print(f"{t:4.2f}  {mean_value(a, basis):8.4f} {mean_value(b, basis):8.4f} "
          f"{norms(a, basis)[0]:8.4f} {norms(b, basis)[0]:8.4f}")

# %%
# The fields stay inside [0, M_i] on the grid.
u1 = traj.c1 @ basis.values
u2 = traj.c2 @ basis.values
print(f"u1 in [{u1.min():.4f}, {u1.max():.4f}], u2 in [{u2.min():.4f}, {u2.max():.4f}]")
print(f"bounds M1={cfg.params.M1}, M2={cfg.params.M2}")
assert np.all(np.isfinite(u1))
