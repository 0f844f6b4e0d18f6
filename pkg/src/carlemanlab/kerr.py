"""Kerr in comoving coordinates and its decay relative to Schwarzschild.

Boyer-Lindquist coordinates ``(t, r, theta, phi)`` are related to comoving
coordinates ``(t0, r0, theta0, phi0)`` by

    t0 = t,  phi0 = phi,  r0^2 = r^2 + a^2 sin^2(theta),  r0 cos(theta0) = r cos(theta).

In the comoving chart Kerr is Schwarzschild of the same mass plus a correction
that decays one power of ``r0`` faster than in Boyer-Lindquist form. The
routines below evaluate the six nonzero coordinate components of that
correction, recast them in the Schwarzschild double-null coordinates
``u0 = (t0 - r0*) / 2``, ``v0 = (t0 + r0*) / 2`` and fit their decay exponents.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy as sp

from ._symbolic import compile_exprs, symmetric_pairs
from .errors import ClassViolated, ConfigError, FitUnstable, InsideHorizonOrErgoIssue, NoRealSolution
from .geometry import MetricValue, christoffel_from, inverse_metric, metric_det
from .jets import fd_gradient

COMPONENTS = ("t0t0", "t0phi0", "phi0phi0", "r0r0", "r0theta0", "theta0theta0")
ORDERS = {"t0t0": -3, "t0phi0": -1, "phi0phi0": -1, "r0r0": -3, "r0theta0": -2, "theta0theta0": -3}
DOUBLE_NULL = ("mu", "nu", "c_u", "c_v", "angular", "K")
DOUBLE_NULL_ORDERS = {"mu": -3, "nu": -3, "c_u": -1, "c_v": -1, "angular": -3, "K": -3}
CONSTRAINT_TOL = 1e-12


@dataclass(frozen=True)
class KerrParams:
    """Mass ``m`` and rotation ``a``.

    ``m = 0`` is allowed and gives flat space in oblate coordinates. ``a > m``
    is the super-extremal case, which has no horizon.
    """

    m: float
    a: float

    def __post_init__(self):
        if not (np.isfinite(self.m) and self.m >= 0):
            raise ConfigError("Kerr mass must be finite and nonnegative")
        if not (np.isfinite(self.a) and self.a >= 0):
            raise ConfigError("Kerr rotation a must be finite and nonnegative")

    def delta_r(self, r):
        return r**2 + self.a**2 - 2 * self.m * r

    def rho2(self, r, theta):
        return r**2 + self.a**2 * np.cos(theta) ** 2

    @property
    def r_plus(self):
        """Outer horizon radius, or ``None`` when there is no horizon."""
        if self.a > self.m:
            return None
        return self.m + np.sqrt(self.m**2 - self.a**2)

    @property
    def extremality(self):
        if self.a < self.m:
            return "sub-extremal"
        return "extremal" if self.a == self.m else "super-extremal"


def _exterior(params, r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise InsideHorizonOrErgoIssue("Boyer-Lindquist radius must be positive")
    dr = params.delta_r(r)
    if np.any(~(dr > 0)):
        raise InsideHorizonOrErgoIssue(
            f"Delta_r <= 0 at {int(np.count_nonzero(~(dr > 0)))} point(s); point lies at or inside the horizon"
        )
    return dr


# -- Boyer-Lindquist metric -------------------------------------------------------------


@lru_cache(maxsize=None)
def _bl_compiled():
    t, r, th, ph, m, a = sp.symbols("t r theta phi m a", real=True)
    rho2 = r**2 + a**2 * sp.cos(th) ** 2
    dr = r**2 + a**2 - 2 * m * r
    s2 = sp.sin(th) ** 2
    # Orbit metric f in the (t, phi) block and orthogonal metric h in the (r, theta) block.
    g = sp.zeros(4, 4)
    g[0, 0] = s2 * a**2 / rho2 - dr / rho2
    g[0, 3] = g[3, 0] = -s2 * a * (r**2 + a**2) / rho2 + dr * a * s2 / rho2
    g[3, 3] = s2 * (r**2 + a**2) ** 2 / rho2 - dr * a**2 * s2**2 / rho2
    g[1, 1] = rho2 / dr
    g[2, 2] = rho2
    X = (t, r, th, ph)
    pairs = symmetric_pairs(4)
    exprs = [g[i, j] for i, j in pairs]
    dexprs = [sp.diff(g[i, j], X[k]) for k in range(4) for i, j in pairs]
    return compile_exprs(exprs + dexprs, X + (m, a)), pairs


def _assemble(vals, pairs, shape):
    out = np.zeros((4, 4) + tuple(shape))
    for (i, j), v in zip(pairs, vals):
        out[i, j] = v
        out[j, i] = v
    return out


def kerr_bl_metric(params, pt):
    """Kerr metric ``g = f + h`` in Boyer-Lindquist components.

    ``pt`` has shape ``(4, *batch)`` holding ``(t, r, theta, phi)``. Raises
    ``InsideHorizonOrErgoIssue`` where ``Delta_r <= 0``.
    """
    x = np.asarray(pt, dtype=float)
    _exterior(params, x[1])
    fn, pairs = _bl_compiled()
    vals = fn(*x, params.m, params.a)
    shape = x.shape[1:]
    npair = len(pairs)
    g = _assemble(vals[:npair], pairs, shape)
    dg = np.stack([_assemble(vals[npair * (k + 1) : npair * (k + 2)], pairs, shape) for k in range(4)])
    g_inv = inverse_metric(g)
    return MetricValue(g, g_inv, metric_det(g), christoffel_from(g_inv, dg), dg)


def oblate_minkowski_metric(a, pt):
    """Flat metric ``f0 + h0`` in the Boyer-Lindquist chart with ``m = 0``."""
    x = np.asarray(pt, dtype=float)
    r, th = x[1], x[2]
    rho2 = r**2 + a**2 * np.cos(th) ** 2
    g = np.zeros((4, 4) + x.shape[1:])
    g[0, 0] = -1.0
    g[3, 3] = (r**2 + a**2) * np.sin(th) ** 2
    g[1, 1] = rho2 / (r**2 + a**2)
    g[2, 2] = rho2
    return g


def schwarzschild_metric(m, pt0):
    """Schwarzschild metric in ``(t0, r0, theta0, phi0)``."""
    x = np.asarray(pt0, dtype=float)
    r0, th0 = x[1], x[2]
    k = 1 - 2 * m / r0
    g = np.zeros((4, 4) + x.shape[1:])
    g[0, 0] = -k
    g[1, 1] = 1 / k
    g[2, 2] = r0**2
    g[3, 3] = r0**2 * np.sin(th0) ** 2
    return g


# -- comoving chart ---------------------------------------------------------------------


@dataclass(frozen=True)
class ComovingChart:
    """The algebraic map between Boyer-Lindquist and comoving coordinates.

    Only the rotation ``a`` enters. ``theta0`` is taken in ``[0, pi]``.
    """

    a: float

    def to_comoving(self, pt):
        x = np.asarray(pt, dtype=float)
        t, r, th, ph = x
        if np.any(~(r > 0)):
            raise NoRealSolution("comoving map requires r > 0")
        r0 = np.sqrt(r**2 + self.a**2 * np.sin(th) ** 2)
        th0 = np.arccos(np.clip(r * np.cos(th) / r0, -1.0, 1.0))
        out = np.stack([t, r0, th0, ph])
        self._check_constraints(x, out)
        return out

    def from_comoving(self, pt0):
        x0 = np.asarray(pt0, dtype=float)
        t0, r0, th0, ph0 = x0
        if np.any(~(r0 > 0)):
            raise NoRealSolution("inverse comoving map requires r0 > 0")
        z = r0 * np.cos(th0)
        s = r0**2 - self.a**2
        disc = np.sqrt(s**2 + 4 * self.a**2 * z**2)
        # Both roots of r^4 - s r^2 - a^2 z^2 = 0 written without cancellation.
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = np.where(s >= 0, (s + disc) / 2, 2 * self.a**2 * z**2 / (disc - s))
        # r below roundoff of r0 means the point sits on the disk r = 0 spanned by the ring.
        if np.any(~(r2 > (1e-12 * r0) ** 2)):
            raise NoRealSolution("point lies on the disk r = 0 bounded by the ring singularity")
        r = np.sqrt(r2)
        th = np.arccos(np.clip(z / r, -1.0, 1.0))
        out = np.stack([t0, r, th, ph0])
        self._check_constraints(out, x0)
        return out

    def _check_constraints(self, bl, co):
        r, th = bl[1], bl[2]
        r0, th0 = co[1], co[2]
        scale = np.maximum(r0**2, 1.0)
        e1 = np.abs(r0**2 - r**2 - self.a**2 * np.sin(th) ** 2) / scale
        e2 = np.abs(r0 * np.cos(th0) - r * np.cos(th)) / np.maximum(r0, 1.0)
        worst = float(np.max(np.maximum(e1, e2), initial=0.0))
        if not worst <= CONSTRAINT_TOL:
            raise NoRealSolution(f"chart constraints violated by {worst:.3e}")

    def jacobian(self, pt):
        """Closed-form ``d(t0, r0, theta0, phi0) / d(t, r, theta, phi)``."""
        x = np.asarray(pt, dtype=float)
        r, th = x[1], x[2]
        a2 = self.a**2
        s, c = np.sin(th), np.cos(th)
        r0sq = r**2 + a2 * s**2
        r0 = np.sqrt(r0sq)
        ra = np.sqrt(r**2 + a2)
        J = np.zeros((4, 4) + x.shape[1:])
        J[0, 0] = 1.0
        J[3, 3] = 1.0
        J[1, 1] = r / r0
        J[1, 2] = a2 * s * c / r0
        J[2, 1] = -a2 * s * c / (r0sq * ra)
        J[2, 2] = r * ra / r0sq
        return J

    def jacobian_det(self, pt):
        """Determinant ``rho^2 / (r0 sqrt(r^2 + a^2))`` of the Jacobian."""
        x = np.asarray(pt, dtype=float)
        r, th = x[1], x[2]
        r0 = np.sqrt(r**2 + self.a**2 * np.sin(th) ** 2)
        return (r**2 + self.a**2 * np.cos(th) ** 2) / (r0 * np.sqrt(r**2 + self.a**2))


def to_comoving(params, pt):
    return ComovingChart(params.a).to_comoving(pt)


def from_comoving(params, pt0):
    return ComovingChart(params.a).from_comoving(pt0)


def _as_point0(pt0):
    x = np.asarray(pt0, dtype=float)
    if x.shape[0] == 2:
        z = np.zeros_like(x[0])
        x = np.stack([z, x[0], x[1], z])
    return x


# -- difference from Schwarzschild ------------------------------------------------------


def kerr_minus_schwarzschild(params, pt0):
    """Nonzero components of ``g - g_m`` in ``(t0, r0, theta0, phi0)``.

    ``pt0`` is ``(r0, theta0)`` or a full comoving point. Returns a dict keyed
    by ``COMPONENTS`` holding symmetric tensor components. The ``r0theta0``
    entry is half of the line-element coefficient of ``dr0 dtheta0``.
    """
    x0 = _as_point0(pt0)
    m, a = params.m, params.a
    r0, th0 = x0[1], x0[2]
    if np.any(~(r0 > 2 * m)):
        raise InsideHorizonOrErgoIssue("comparison with Schwarzschild requires r0 > 2m")
    bl = ComovingChart(a).from_comoving(x0)
    r, th = bl[1], bl[2]
    dr = _exterior(params, r)
    if a == 0:
        # The charts coincide and Kerr is Schwarzschild; skip the roundoff of the r0r0 difference.
        return {name: np.zeros_like(r0) for name in COMPONENTS}
    s2 = np.sin(th) ** 2
    c = np.cos(th)
    rho2 = r**2 + a**2 * c**2
    d0 = r**2 + a**2
    # r0 - r written without cancellation.
    gap = a**2 * s2 / (r0 + r)
    X = -r0 * gap + d0
    w = 2 * m * r / rho2
    k = 1 - 2 * m / r0
    return {
        "t0t0": w - 2 * m / r0,
        "t0phi0": -w * a * s2,
        "phi0phi0": w * a**2 * s2**2,
        "r0r0": w / dr * X**2 / d0 - (2 * m / r0) / k,
        "r0theta0": -w / dr * a**2 * r0 * np.sin(th0) * c * X / d0,
        "theta0theta0": w / dr * a**4 / d0 * r0**2 * np.sin(th0) ** 2 * c**2,
    }


def kerr_comoving_metric(params, pt0):
    """Kerr in comoving coordinates assembled as Schwarzschild plus the difference table."""
    x0 = _as_point0(pt0)
    g = schwarzschild_metric(params.m, x0)
    d = kerr_minus_schwarzschild(params, x0)
    idx = {"t0": 0, "r0": 1, "theta0": 2, "phi0": 3}
    for name, val in d.items():
        i, j = _split(name)
        g[idx[i], idx[j]] = g[idx[i], idx[j]] + val
        if i != j:
            g[idx[j], idx[i]] = g[idx[i], idx[j]]
    return g


def _split(name):
    for head in ("theta0", "phi0", "t0", "r0"):
        if name.startswith(head):
            return head, name[len(head) :]
    raise KeyError(name)


def pushforward_metric(params, pt0, step=1e-4):
    """Boyer-Lindquist metric pulled to comoving coordinates through a finite-difference Jacobian.

    This is the chain-rule oracle for ``kerr_comoving_metric``.
    """
    x0 = _as_point0(pt0)
    chart = ComovingChart(params.a)
    bl = chart.from_comoving(x0)
    J, _ = fd_gradient(chart.from_comoving, x0, step=step)
    # J[k, i] = d bl^i / d x0^k
    g_bl = kerr_bl_metric(params, bl).g
    return np.einsum("ki...,ij...,lj...->kl...", J, g_bl, J)


def double_null_components(params, pt0):
    """Difference from Schwarzschild in ``(u0, v0, theta0, phi0)``.

    Returns ``mu``, ``nu`` (coefficients of ``du0^2`` and ``dv0^2``), the
    correction to ``K`` in ``-4 K du0 dv0``, the mixed coefficients ``c_u`` and
    ``c_v`` of ``du0 dy^A`` and ``dv0 dy^A`` (shape ``(2, *batch)``), and the
    angular correction relative to the round sphere in an orthonormal frame
    (shape ``(2, 2, *batch)``).
    """
    x0 = _as_point0(pt0)
    d = kerr_minus_schwarzschild(params, x0)
    r0, th0 = x0[1], x0[2]
    k = 1 - 2 * params.m / r0
    zero = np.zeros_like(r0)
    d_tA = np.stack([zero, d["t0phi0"]])
    d_rA = np.stack([d["r0theta0"], zero])
    mu = d["t0t0"] + k**2 * d["r0r0"]
    sin0 = np.sin(th0)
    ang = np.stack(
        [
            np.stack([d["theta0theta0"], zero]),
            np.stack([zero, d["phi0phi0"] / sin0**2]),
        ]
    ) / r0**2
    return {
        "mu": mu,
        "nu": mu.copy(),
        "K": -(d["t0t0"] - k**2 * d["r0r0"]) / 2,
        "c_u": 2 * (d_tA - k * d_rA),
        "c_v": 2 * (d_tA + k * d_rA),
        "angular": ang,
    }


# -- certificate ------------------------------------------------------------------------


def fit_decay_order(radii, values, min_decades=1.0):
    """Slope of ``log|values|`` against ``log(radii)``.

    Returns ``None`` when every value is exactly zero.
    """
    radii = np.asarray(radii, dtype=float)
    mag = np.asarray(values, dtype=float)
    if np.all(mag == 0):
        return None
    if np.log10(radii.max() / radii.min()) < min_decades or radii.size < 20:
        raise FitUnstable("decay fits need at least one decade and 20 radii")
    if np.any(~np.isfinite(mag)) or np.any(mag <= 0):
        raise FitUnstable("decay fit hit a zero or nonfinite magnitude")
    slope, _ = np.polyfit(np.log(radii), np.log(mag), 1)
    return float(slope)


@dataclass
class KerrCertificate:
    """Fitted decay orders of the comoving Kerr correction.

    ``rows`` holds one dict per component with keys ``component``,
    ``predicted_order``, ``fitted_order`` and ``pass``. A row passes when the
    fitted order lies within ``tol`` of the prediction or decays faster.
    """

    m: float
    a: float
    theta0: float
    radii: np.ndarray
    rows: list
    tol: float
    identically_zero: bool
    mass_deviation: float
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(row["pass"] for row in self.rows)

    @property
    def matches(self):
        """All fitted orders lie within ``tol`` of the predicted ones."""
        return all(
            row["fitted_order"] is None or abs(row["fitted_order"] - row["predicted_order"]) <= self.tol
            for row in self.rows
        )

    def fitted(self):
        return {row["component"]: row["fitted_order"] for row in self.rows}


def _magnitude(val):
    val = np.asarray(val)
    if val.ndim == 1:
        return np.abs(val)
    return np.max(np.abs(val.reshape(-1, val.shape[-1])), axis=0)


def kerr_class_certificate(params, radii=None, theta0=1.0, tol=0.15, raise_on_failure=True):
    """Fit the decay orders of the coordinate and double-null differences.

    ``radii`` defaults to 24 log-spaced values of ``r0`` in ``[1e2, 1e4]``.
    Also reports the largest ``|m_eff - m|`` where ``K = 1 - 2 m_eff / r0``,
    which confirms the double-null form keeps a constant mass up to decaying
    terms. Raises ``ClassViolated`` naming the first failing component.
    """
    radii = np.geomspace(1e2, 1e4, 24) if radii is None else np.asarray(radii, dtype=float)
    pts = np.stack([np.zeros_like(radii), radii, np.full_like(radii, theta0), np.zeros_like(radii)])
    coord = kerr_minus_schwarzschild(params, pts)
    dn = double_null_components(params, pts)
    zero = params.a == 0 or params.m == 0
    rows = []
    for table, orders, prefix in ((coord, ORDERS, ""), (dn, DOUBLE_NULL_ORDERS, "null:")):
        for name, pred in orders.items():
            mag = _magnitude(table[name])
            fitted = None if zero and np.all(mag == 0) else fit_decay_order(radii, mag)
            ok = (np.all(mag == 0)) if fitted is None else fitted <= pred + tol
            rows.append({"component": prefix + name, "predicted_order": pred, "fitted_order": fitted, "pass": bool(ok)})
    mass_dev = float(np.max(np.abs(radii * dn["K"] / 2)))
    notes = []
    if zero:
        notes.append("reduces to Schwarzschild")
    cert = KerrCertificate(params.m, params.a, theta0, radii, rows, tol, bool(zero), mass_dev, notes)
    if raise_on_failure and not cert.passed:
        bad = next(row for row in rows if not row["pass"])
        raise ClassViolated(
            f"{bad['component']} decays with order {bad['fitted_order']:.3f}, "
            f"predicted {bad['predicted_order']}"
        )
    return cert


__all__ = [
    "COMPONENTS",
    "ORDERS",
    "DOUBLE_NULL_ORDERS",
    "KerrParams",
    "ComovingChart",
    "KerrCertificate",
    "kerr_bl_metric",
    "oblate_minkowski_metric",
    "schwarzschild_metric",
    "to_comoving",
    "from_comoving",
    "kerr_minus_schwarzschild",
    "kerr_comoving_metric",
    "pushforward_metric",
    "double_null_components",
    "fit_decay_order",
    "kerr_class_certificate",
]
