"""Kerr minus Schwarzschild in comoving coordinates, and its decay orders."""

import numpy as np

from carlemanlab.kerr import KerrParams, kerr_class_certificate, kerr_minus_schwarzschild, to_comoving

params = KerrParams(1.0, 0.9)

# %% the comoving radius on the equator
print("r0 at r = 10, theta = pi/2:", to_comoving(params, np.array([0.0, 10.0, np.pi / 2, 0.0]))[1])

# %% component differences along theta0 = 1
radii = np.geomspace(1e2, 1e4, 5)
diff = kerr_minus_schwarzschild(params, np.array([radii, np.ones_like(radii)]))
for name, val in diff.items():
    print(f"{name:>14}", " ".join(f"{v: .3e}" for v in val))

# %% certificate for several rotations
for a in (0.0, 0.5, 0.9, 2.0):
    cert = kerr_class_certificate(KerrParams(1.0, a))
    fitted = {k: (None if v is None else round(v, 3)) for k, v in cert.fitted().items()}
    print(f"a = {a}: passed = {cert.passed}", fitted, cert.notes)
