"""Conformal inversion, transported wave operators and the mass gap."""

import numpy as np

from carlemanlab.conformal import (
    decaying_coefficients,
    inversion_map,
    mass_gap_bounds,
    metric_in_UV,
    operator_residual,
    transport_operator,
)
from carlemanlab.fields import random_bumps
from carlemanlab.geometry import catalog
from carlemanlab.modes import PositiveMass, ZeroMass, f_sigma_grid

zm, pm = ZeroMass(1.0), PositiveMass(1.0)

# %% inverted Minkowski is -4 dU dV plus a shrinking sphere
cmap = inversion_map(catalog("Minkowski"), zm)
x = f_sigma_grid(zm, 3, [1e-2, 1e-3], [0.0], [[1.0], [0.3]])
print("g_UV in the inverted picture:", metric_in_UV(cmap, x)[0, 1])

# %% L_g phi = Omega^((n+3)/2) Lbar phibar for random bumps
rng = np.random.default_rng(1)
for family, mode in (("Minkowski", zm), ("Schwarzschild", pm)):
    cmap = inversion_map(catalog(family), mode)
    coeffs = decaying_coefficients(mode, 3)
    tr = transport_operator(cmap, coeffs)
    worst = 0.0
    for bump in random_bumps(rng, mode, 3, 5, (1e-3, 1e-1), (-2.0, 2.0)):
        pt = f_sigma_grid(mode, 3, [np.sqrt(np.prod(bump.f_range))], [np.mean(bump.sigma_range)], [[0.7], [0.3]])
        worst = max(worst, float(np.max(operator_residual(cmap, coeffs, bump, pt, transported=tr))))
    print(f"{family}: worst transport residual {worst:.2e}")

# %% r* - r grows like 2 m log r
x = f_sigma_grid(pm, 3, np.geomspace(1e-10, 1e-4, 30), [0.0], [[1.0], [0.3]])
rep = mass_gap_bounds(catalog("Schwarzschild"), x)
print(f"fitted log coefficient {rep.log_coefficient:.4f} (2m = 2)")
