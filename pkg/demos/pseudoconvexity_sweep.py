"""Pseudoconvexity of the foliation f = 1/(ut vt) on Minkowski and Schwarzschild.

Prints the smallest tangential eigenvalue of pi = h g - Hess f along the
spatial ray sigma = 0, the r* beyond which it stays positive, and the r*
beyond which the positive-mass eigenvalue dominates the zero-mass one.
"""

import numpy as np

from carlemanlab.foliation import mass_crossover, positivity_threshold, pseudoconvexity_tensor, spatial_ray
from carlemanlab.geometry import catalog
from carlemanlab.modes import PositiveMass, ZeroMass

zm, pm = ZeroMass(1.0), PositiveMass(1.0)
mink = catalog("Minkowski").with_picture("inverted", mode=zm)
schw = catalog("Schwarzschild").with_picture("inverted", mode=pm)

f_ray = np.geomspace(1e-6, 0.09, 40)

# %% Minkowski: the eigenvalue is eps / (2r) in the inverted picture
x = spatial_ray(zm, 3, f_ray)
eig = pseudoconvexity_tensor(mink, zm, x, "model").min_tangential_eigenvalue
r = x[1] - x[0]
print("Minkowski  max |eig - eps/(2r)| =", np.max(np.abs(eig - 0.5 / r)))

# %% Schwarzschild: negative near the horizon, positive far out
thr, rs, eig = positivity_threshold(schw, pm, "model", f_ray)
print(f"Schwarzschild positive for r* >= {thr:.2f}")
for k in range(0, rs.size, 8):
    print(f"  r* = {rs[k]:12.3f}   min eigenvalue = {eig[k]: .4e}")

# %% mass crossover
cross, rs, es, em = mass_crossover(schw, mink, 1.0, 1.0, f_ray)
print(f"positive-mass eigenvalue dominates for r* >= {cross:.2f}")
