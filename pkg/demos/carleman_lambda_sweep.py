"""Weighted Carleman integrals for a fixed bump as lambda grows.

The left side grows faster than every right-side term, so the ratio
LHS / RHS increases and the constant fitted at the smallest lambda holds
for all larger ones.
"""

from carlemanlab.carleman import default_bump, integral_carleman_check
from carlemanlab.foliation import F1, F2
from carlemanlab.geometry import catalog
from carlemanlab.modes import PositiveMass, ZeroMass

cases = [
    ("Minkowski, F1", catalog("Minkowski"), ZeroMass(1.0), F1(0.1)),
    ("Schwarzschild, F2", catalog("Schwarzschild"), PositiveMass(1.0), F2(2 / 3)),
]

for label, spec, mode, reparam in cases:
    inverted = spec.with_picture("inverted", mode=mode)
    sweep = integral_carleman_check(inverted, mode, reparam, default_bump(mode))
    print(label)
    print(f"  {'lambda':>7} {'LHS':>12} {'normal':>12} {'tangential':>12} {'zero':>12} {'ratio':>9}")
    for r in sweep.reports:
        print(f"  {r.lam:7.0f} {r.lhs:12.4e} {r.rhs_normal:12.4e} {r.rhs_tangential:12.4e} {r.rhs_zero:12.4e} {r.ratio:9.2f}")
    print("  fitted exponents:", {k: round(v, 3) for k, v in sweep.exponents.items()})
