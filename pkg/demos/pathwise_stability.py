"""
Paired runs driven by the same noise
====================================

Two ensembles start from initial data a distance ``eps`` apart and share
every Wiener increment.  The time-integrated squared gap divided by the
initial squared gap should not depend on ``eps``; at ``eps = 0`` the runs
are identical bit for bit.
"""

from preytaxis import EnsembleConfig, StepConfig
from preytaxis.ensemble import stability_sweep

cfg = EnsembleConfig(step=StepConfig(1e-4, 0.2, 20), n_traj=16)

# %%
for res in stability_sweep(cfg, [0.0, 1e-2, 5e-3, 2.5e-3], direction="constant"):
    print(f"eps={res.eps_ic:<7g} lhs={res.lhs:.4e} rhs={res.rhs:.4e} "
          f"ratio={res.ratio:.5f} +- {res.ratio_se:.1e} identical={res.bitwise_identical}")
