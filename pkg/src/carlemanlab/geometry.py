"""Backgrounds in double-null form and their differential geometry.

Every background is written in coordinates ``x = (u, v, y^1, ..., y^(n-1))`` as

    g = mu du^2 - 4K du dv + nu dv^2 + r^2 gamma_AB dy^A dy^B
        + c_Au dy^A du + c_Av dy^A dv,

so that the symmetric component ``g_uv`` equals ``-2K`` and ``g_uA`` equals
``c_Au / 2``. A ``MetricSpec`` names a catalog family and its parameters, plus
an optional conformal picture (sharp, inverted or Penrose). Catalog metrics are
built symbolically and compiled, which gives exact metric derivatives; the
finite-difference routines in this module are independent oracles for them.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy as sp

from ._symbolic import (
    WrightOmega,
    compile_exprs,
    coordinate_names,
    coordinate_symbols,
    param_symbol,
    polar_axes,
    round_sphere,
    symmetric_pairs,
)
from .errors import ConfigError, DegenerateMetric, PointOutsideDomain, StepTooLarge
from .jets import Jet2, fd_gradient
from .modes import PositiveMass, ZeroMass, f_expr, in_mode_domain, mode_param_values

FAMILIES = ("Minkowski", "PerturbedMinkowski", "Schwarzschild", "PositiveMassClass", "Kerr", "Custom")
PICTURES = ("physical", "sharp", "inverted", "penrose")
MASSIVE = ("Schwarzschild", "PositiveMassClass", "Kerr")

DEFAULT_PARAMS = {
    "Minkowski": {},
    "PerturbedMinkowski": {"delta": 0.01},
    "Schwarzschild": {"m": 1.0, "r0": 3.0},
    "PositiveMassClass": {"m": 1.0, "m1": 0.2, "delta": 0.01, "r0": 3.0},
    "Kerr": {"m": 1.0, "a": 0.5, "r0": 3.0},
    "Custom": {},
}

POLE_MARGIN = 0.1


@dataclass(frozen=True)
class Point:
    """A single coordinate point ``(u, v, y)``."""

    u: float
    v: float
    y: tuple

    @property
    def n(self):
        return len(self.y) + 1

    def array(self):
        return np.array([self.u, self.v, *self.y], dtype=float)

    @classmethod
    def from_array(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(float(x[0]), float(x[1]), tuple(float(t) for t in x[2:]))


def as_coords(pt):
    """Coordinate array ``(N, *batch)`` from a Point, sequence or array."""
    if isinstance(pt, Point):
        return pt.array()
    return np.asarray(pt, dtype=float)


@dataclass
class MetricValue:
    """Metric data at one or many points; tensor indices lead, batch axes trail."""

    g: np.ndarray
    g_inv: np.ndarray
    det: np.ndarray
    christoffel: np.ndarray
    dg: np.ndarray | None = None


@dataclass
class SymbolicBackground:
    coords: tuple
    params: tuple
    g: sp.Matrix
    scalars: dict


@dataclass(frozen=True)
class MetricSpec:
    """A catalog background with parameters and a conformal picture.

    ``picture`` is one of ``physical``, ``sharp`` (``g / K``), ``inverted``
    (``f^2 g / K`` with ``warp="K"``, or ``f^2 g`` with ``warp="plain"``) and
    ``penrose`` (Minkowski only). The inverted picture needs a ``mode``.
    ``Custom`` backgrounds carry a numeric metric callable instead of a formula.
    """

    family: str
    n: int = 3
    params: tuple = ()
    picture: str = "physical"
    warp: str = "K"
    mode: object = None
    custom: object = field(default=None)

    @classmethod
    def create(cls, family, n=3, picture="physical", warp="K", mode=None, custom=None, **params):
        if family not in FAMILIES:
            raise ConfigError(f"unknown family {family!r}; choose from {FAMILIES}")
        if picture not in PICTURES:
            raise ConfigError(f"unknown picture {picture!r}")
        if n not in (2, 3, 4):
            raise ConfigError(f"dimension n={n} not supported")
        if family in MASSIVE and n != 3:
            raise ConfigError(f"{family} is only available for n=3")
        if picture == "inverted" and mode is None:
            raise ConfigError("inverted picture requires a mode")
        if picture == "penrose" and family != "Minkowski":
            raise ConfigError("penrose picture is defined for Minkowski only")
        if family == "Custom" and (custom is None or picture != "physical"):
            raise ConfigError("Custom needs a metric callable and the physical picture")
        if warp not in ("K", "plain"):
            raise ConfigError(f"unknown warp {warp!r}")
        merged = dict(DEFAULT_PARAMS[family])
        unknown = set(params) - set(merged)
        if unknown:
            raise ConfigError(f"unknown parameters {sorted(unknown)} for {family}")
        merged.update({k: float(v) for k, v in params.items()})
        _validate_params(family, merged)
        return cls(family, n, tuple(sorted(merged.items())), picture, warp, mode, custom)

    @property
    def param_dict(self):
        return dict(self.params)

    @property
    def dim(self):
        return self.n + 1

    @property
    def coordinate_names(self):
        return coordinate_names(self.n)

    def with_picture(self, picture, mode=None, warp="K"):
        return MetricSpec.create(
            self.family, self.n, picture=picture, warp=warp, mode=mode, custom=self.custom, **self.param_dict
        )

    @property
    def physical(self):
        return self.with_picture("physical")

    # -- symbolic and compiled data -------------------------------------------------

    def symbolic(self):
        if self.family == "Custom":
            raise ConfigError("Custom backgrounds have no symbolic form")
        return _symbolic_background(self.family, self.n, self.picture, self.warp, self.mode)

    def _compiled(self):
        return _compiled_background(self.family, self.n, self.picture, self.warp, self.mode)

    def _values(self):
        bg = self.symbolic()
        vals = dict(self.params)
        if self.mode is not None:
            vals.update(mode_param_values(self.mode))
        return [vals[p] for p in bg.params]

    def metric(self, x):
        x = as_coords(x)
        if self.family == "Custom":
            return np.asarray(self.custom(x), dtype=float)
        comp = self._compiled()
        vals = comp.g(*x, *self._values())
        return _assemble_sym(vals, comp.pairs, self.dim, vals[0].shape)

    def metric_derivatives(self, x):
        """Exact coordinate partials ``dg[k, i, j] = d_k g_ij``."""
        x = as_coords(x)
        if self.family == "Custom":
            dg, _ = fd_gradient(self.metric, x, step=1e-4)
            return dg
        comp = self._compiled()
        vals = comp.dg(*x, *self._values())
        N = self.dim
        npair = len(comp.pairs)
        out = np.zeros((N, N, N) + vals[0].shape)
        for k in range(N):
            out[k] = _assemble_sym(vals[k * npair : (k + 1) * npair], comp.pairs, N, vals[0].shape)
        return out

    def scalar(self, name, x):
        """Evaluate a named background scalar (``r``, ``K``, ``m``, ``rstar``, ``f``, ``Omega``)."""
        x = as_coords(x)
        comp = self._compiled()
        if name not in comp.scalars:
            raise KeyError(f"{self.family}/{self.picture} has no scalar {name!r}")
        return np.array(comp.scalars[name](*x, *self._values())[0])

    def scalar_expr(self, name):
        return self.symbolic().scalars[name]

    def scalar_params(self):
        """Parameter values keyed by name, as consumed by ``ScalarField``."""
        bg = self.symbolic()
        return dict(zip(bg.params, self._values()))

    # -- domain ---------------------------------------------------------------------

    def in_domain(self, x, pole_margin=POLE_MARGIN):
        x = as_coords(x)
        u, v = x[0], x[1]
        ok = np.isfinite(x).all(axis=0)
        if self.family in MASSIVE:
            ok &= (u < 0) & (v > 0)
        else:
            ok &= v - u > 0
        for k in polar_axes(self.n):
            ok &= (x[k] > pole_margin) & (x[k] < np.pi - pole_margin)
        if self.picture == "inverted":
            ok &= in_mode_domain(self.mode, x)
        return ok

    def check_domain(self, x, pole_margin=POLE_MARGIN):
        ok = self.in_domain(x, pole_margin)
        if not np.all(ok):
            bad = int(np.size(ok) - np.count_nonzero(ok))
            raise PointOutsideDomain(f"{bad} point(s) outside the {self.family} domain")


def catalog(name, n=3, **params):
    """Physical-picture MetricSpec for a catalog family."""
    return MetricSpec.create(name, n=n, **params)


def _validate_params(family, p):
    if family in MASSIVE:
        if not p["m"] > 0:
            raise ConfigError("mass must be positive")
        if family == "Kerr":
            if not p["a"] >= 0:
                raise ConfigError("Kerr requires a >= 0")
            # Super-extremal members have no horizon; the tortoise chart still needs r0 > 2m.
            r_plus = p["m"] + np.sqrt(max(p["m"] ** 2 - p["a"] ** 2, 0.0))
            if not p["r0"] > max(r_plus, 2 * p["m"]):
                raise ConfigError("reference radius r0 must lie outside the outer horizon and exceed 2m")
        elif not p["r0"] > 2 * p["m"]:
            raise ConfigError("reference radius r0 must exceed 2m")
    if "delta" in p and not 0 <= p["delta"] < 0.5:
        raise ConfigError("perturbation amplitude delta must lie in [0, 0.5)")
    if "m1" in p and not 0 <= p["m1"] < p["m"]:
        raise ConfigError("mass modulation m1 must lie in [0, m)")


def _assemble_sym(vals, pairs, N, shape):
    out = np.zeros((N, N) + tuple(shape))
    for (i, j), val in zip(pairs, vals):
        out[i, j] = val
        out[j, i] = val
    return out


# -- symbolic construction --------------------------------------------------------------


def _profile(X, phase):
    """Bounded angular-time profile with values in [7/16, 9/16].

    Its u and v derivatives are bounded by ``1 / (8 r*)``, so ``r^-k`` times it
    lies in the decay class of order ``k`` with constant 1.
    """
    u, v = X[:2]
    return (1 + sp.cos(X[2] + phase) * sp.tanh((u + v) / (v - u)) / 8) / 2


def tortoise_radius_expr(rstar, m, r0):
    """Area radius solving ``r + 2m log(r - 2m) = r* + r0 + 2m log(r0 - 2m)``."""
    c0 = r0 + 2 * m * sp.log(r0 - 2 * m)
    z = (rstar + c0 - 2 * m) / (2 * m) - sp.log(2 * m)
    return 2 * m * (1 + WrightOmega(z))


def _double_null(n, K, r, gamma, cu, cv, mu, nu):
    X = coordinate_symbols(n)
    N = n + 1
    g = sp.zeros(N, N)
    g[0, 0] = mu
    g[1, 1] = nu
    g[0, 1] = g[1, 0] = -2 * K
    for A in range(n - 1):
        g[0, 2 + A] = g[2 + A, 0] = cu[A] / 2
        g[1, 2 + A] = g[2 + A, 1] = cv[A] / 2
        for B in range(n - 1):
            g[2 + A, 2 + B] = r**2 * gamma[A, B]
    return g, X


def _perturbations(X, n, d):
    """Decay-class perturbation terms shared by the perturbed families."""
    u, v = X[:2]
    rs = v - u
    A = [_profile(X, k) for k in range(6)]
    zero = [sp.Integer(0)] * (n - 1)
    cu = list(zero)
    cv = list(zero)
    cu[0] = d * A[2] / rs
    cv[0] = d * A[3] / rs
    return {
        "k": d * A[0] / rs**2,
        "gamma": round_sphere(n) * (1 + d * A[1] / rs),
        "cu": cu,
        "cv": cv,
        "mu": d * A[4] / rs**3,
        "nu": d * A[5] / rs**3,
    }


def kerr_comoving_symbolic():
    """Kerr in comoving double-null coordinates ``(u0, v0, theta0, phi0)``.

    Returns the metric matrix, the comoving radius and the Boyer-Lindquist
    radius and polar angle as expressions.
    """
    X = coordinate_symbols(3)
    u, v, th0, _ = X
    m, a, r0 = param_symbol("m"), param_symbol("a"), param_symbol("r0")
    R = tortoise_radius_expr(v - u, m, r0)
    s = R**2 - a**2
    rbl = sp.sqrt((s + sp.sqrt(s**2 + 4 * a**2 * R**2 * sp.cos(th0) ** 2)) / 2)
    cth = R * sp.cos(th0) / rbl
    sth2 = 1 - cth**2
    Sig = rbl**2 + a**2 * cth**2
    Del = rbl**2 - 2 * m * rbl + a**2
    G = sp.zeros(4, 4)
    G[0, 0] = -(1 - 2 * m * rbl / Sig)
    G[0, 3] = G[3, 0] = -2 * m * a * rbl * sth2 / Sig
    G[1, 1] = Sig / Del
    G[2, 2] = Sig
    G[3, 3] = (rbl**2 + a**2 + 2 * m * a**2 * rbl * sth2 / Sig) * sth2
    theta_bl = sp.acos(cth)
    bl = [u + v, rbl, theta_bl, X[3]]
    J = sp.Matrix(4, 4, lambda i, j: sp.diff(bl[i], X[j]))
    g = J.T * G * J
    return g, R, rbl, theta_bl


@lru_cache(maxsize=None)
def _symbolic_background(family, n, picture, warp, mode):
    X = coordinate_symbols(n)
    u, v = X[:2]
    rs = v - u
    scalars = {"rstar": rs}
    if family == "Minkowski":
        g, _ = _double_null(n, 1, rs, round_sphere(n), [0] * (n - 1), [0] * (n - 1), 0, 0)
        scalars.update(r=rs, m=sp.Integer(0))
    elif family == "PerturbedMinkowski":
        p = _perturbations(X, n, param_symbol("delta"))
        K = 1 + p["k"]
        g, _ = _double_null(n, K, rs, p["gamma"], p["cu"], p["cv"], p["mu"], p["nu"])
        scalars.update(r=rs, m=(1 - K) * rs / 2)
    elif family in ("Schwarzschild", "PositiveMassClass"):
        m0, r0 = param_symbol("m"), param_symbol("r0")
        r = tortoise_radius_expr(rs, m0, r0)
        if family == "Schwarzschild":
            mass = m0
            g, _ = _double_null(n, 1 - 2 * mass / r, r, round_sphere(n), [0, 0], [0, 0], 0, 0)
        else:
            mass = m0 + param_symbol("m1") * _profile(X, 7) / r
            p = _perturbations(X, n, param_symbol("delta"))
            g, _ = _double_null(n, 1 - 2 * mass / r, r, p["gamma"], p["cu"], p["cv"], p["mu"], p["nu"])
        scalars.update(r=r, m=mass)
    elif family == "Kerr":
        g, R, _, _ = kerr_comoving_symbolic()
        scalars.update(r=R, m=param_symbol("m"))
    else:
        raise ConfigError(f"no symbolic form for {family}")
    K = -g[0, 1] / 2
    scalars["K"] = K
    if mode is not None:
        scalars["f"] = f_expr(mode, n)
    if picture == "sharp":
        omega2 = 1 / K
    elif picture == "inverted":
        omega2 = scalars["f"] ** 2 / K if warp == "K" else scalars["f"] ** 2
    elif picture == "penrose":
        omega2 = 1 / ((1 + u**2) * (1 + v**2))
    else:
        omega2 = None
    if omega2 is not None:
        g = g * omega2
        scalars["Omega"] = sp.sqrt(omega2)
    names = set()
    for expr in list(g) + list(scalars.values()):
        names |= {s.name for s in sp.sympify(expr).free_symbols}
    params = tuple(sorted(names - set(coordinate_names(n))))
    return SymbolicBackground(X, params, g, scalars)


class _CompiledBackground:
    def __init__(self, bg):
        self.bg = bg
        self.syms = list(bg.coords) + [param_symbol(p) for p in bg.params]
        self.pairs = symmetric_pairs(len(bg.coords))
        self._g = None
        self._dg = None
        self._scalars = {}

    @property
    def g(self):
        if self._g is None:
            self._g = compile_exprs([self.bg.g[i, j] for i, j in self.pairs], self.syms)
        return self._g

    @property
    def dg(self):
        if self._dg is None:
            comps = [self.bg.g[i, j] for i, j in self.pairs]
            self._dg = compile_exprs([sp.diff(e, c) for c in self.bg.coords for e in comps], self.syms)
        return self._dg

    @property
    def scalars(self):
        return _ScalarTable(self)


class _ScalarTable:
    def __init__(self, comp):
        self.comp = comp

    def __contains__(self, name):
        return name in self.comp.bg.scalars

    def __getitem__(self, name):
        cache = self.comp._scalars
        if name not in cache:
            cache[name] = compile_exprs([self.comp.bg.scalars[name]], self.comp.syms)
        return cache[name]


@lru_cache(maxsize=None)
def _compiled_background(family, n, picture, warp, mode):
    return _CompiledBackground(_symbolic_background(family, n, picture, warp, mode))


# -- tensor algebra ---------------------------------------------------------------------


def _batch_last_to_matrix(a):
    return np.moveaxis(a, (0, 1), (-2, -1))


def inverse_metric(g):
    return np.moveaxis(np.linalg.inv(_batch_last_to_matrix(g)), (-2, -1), (0, 1))


def metric_det(g):
    return np.linalg.det(_batch_last_to_matrix(g))


def christoffel_from(g_inv, dg):
    """``Gamma^l_mn = 1/2 g^ls (d_m g_sn + d_n g_sm - d_s g_mn)`` from ``dg[k, i, j]``."""
    a = np.einsum("msn...->smn...", dg)
    b = np.einsum("nsm...->smn...", dg)
    low = 0.5 * (a + b - dg)
    return np.einsum("ls...,smn...->lmn...", g_inv, low)


def _check_nondegenerate(g, det):
    # Hadamard's inequality bounds |det| by the product of row norms.
    scale = np.prod(np.sqrt(np.sum(g**2, axis=1)), axis=0)
    bad = ~np.isfinite(det) | (np.abs(det) <= 1e-13 * scale)
    if np.any(bad):
        raise DegenerateMetric(f"degenerate metric at {int(np.count_nonzero(bad))} point(s)")


def eval_metric(spec, pt, check=True, pole_margin=POLE_MARGIN):
    """Metric, inverse, determinant and closed-form Christoffel symbols."""
    x = as_coords(pt)
    if check:
        spec.check_domain(x, pole_margin)
    g = spec.metric(x)
    det = metric_det(g)
    _check_nondegenerate(g, det)
    g_inv = inverse_metric(g)
    dg = spec.metric_derivatives(x)
    return MetricValue(g, g_inv, det, christoffel_from(g_inv, dg), dg)


def christoffel_closed(spec, x):
    """Closed-form Christoffel symbols without domain checks (used inside stencils)."""
    g = spec.metric(x)
    return christoffel_from(inverse_metric(g), spec.metric_derivatives(x))


def christoffel_fd_oracle(spec, pt, step=1e-4, richardson=True, tol=None):
    """Christoffel symbols from finite differences of the metric.

    Returns ``(Gamma, error_estimate)``. Raises ``StepTooLarge`` when a
    stencil point leaves the chart, or when ``tol`` is given and the error
    estimate exceeds ``tol`` times the largest symbol at that point.
    """
    x = as_coords(pt)
    spec.check_domain(x)
    g = spec.metric(x)
    g_inv = inverse_metric(g)
    valid = lambda y: spec.in_domain(y, pole_margin=0.0)
    dg, err = fd_gradient(spec.metric, x, step=step, richardson=richardson, valid=valid)
    gam = christoffel_from(g_inv, dg)
    # Each symbol combines three metric derivatives through one row of g^-1.
    gam_err = 1.5 * np.max(err, axis=(0, 1, 2)) * np.max(np.sum(np.abs(g_inv), axis=1), axis=0)
    if tol is not None:
        scale = np.max(np.abs(gam), axis=(0, 1, 2))
        worst = gam_err
        bad = worst > tol * np.maximum(scale, 1e-300)
        if np.any(bad):
            raise StepTooLarge(
                f"finite-difference error estimate {float(np.max(worst)):.3e} exceeds "
                f"tolerance {tol:g} at {int(np.count_nonzero(bad))} point(s) with step {step:g}"
            )
    return gam, gam_err


def _jet_of(field, x):
    if isinstance(field, Jet2):
        return field
    return field.jet(x)


def hessian_scalar(spec, field, pt, metric=None):
    """Covariant Hessian ``d_i d_j phi - Gamma^k_ij d_k phi``."""
    x = as_coords(pt)
    if metric is None:
        metric = eval_metric(spec, x)
    jet = _jet_of(field, x)
    return jet.d2 - np.einsum("kij...,k...->ij...", metric.christoffel, jet.d1)


def box_scalar(spec, field, pt, metric=None):
    """Wave operator ``g^ij nabla_i nabla_j phi``."""
    x = as_coords(pt)
    if metric is None:
        metric = eval_metric(spec, x)
    hess = hessian_scalar(spec, field, x, metric)
    return np.einsum("ij...,ij...->...", metric.g_inv, hess)


def gradient_sharp(metric, d1):
    """Raise the index of a covector: ``g^ij d_j phi``."""
    return np.einsum("ij...,j...->i...", metric.g_inv, d1)


def hessian_fd_oracle(spec, func, pt, step=1e-3):
    """Covariant Hessian from finite-difference jets and finite-difference Christoffels."""
    from .jets import fd_jet

    x = as_coords(pt)
    valid = lambda y: spec.in_domain(y, pole_margin=0.0)
    jet = fd_jet(func, x, step=step, valid=valid)
    gam, _ = christoffel_fd_oracle(spec, x, step=min(step, 1e-4))
    return jet.d2 - np.einsum("kij...,k...->ij...", gam, jet.d1)


def ricci_tensor(spec, pt, step=1e-3):
    """Ricci tensor from closed-form Christoffels and their finite-difference derivatives."""
    x = as_coords(pt)
    spec.check_domain(x)
    valid = lambda y: spec.in_domain(y, pole_margin=0.0)
    gam = christoffel_closed(spec, x)
    dgam, _ = fd_gradient(lambda y: christoffel_closed(spec, y), x, step=step, valid=valid)
    # dgam[k, l, m, n] = d_k Gamma^l_mn
    term1 = np.einsum("llmn...->mn...", dgam)
    term2 = np.einsum("nlml...->mn...", dgam)
    term3 = np.einsum("llk...,kmn...->mn...", gam, gam)
    term4 = np.einsum("lnk...,kml...->mn...", gam, gam)
    return term1 - term2 + term3 - term4


def scalar_curvature(spec, pt, step=1e-3):
    """Scalar curvature ``g^mn R_mn``."""
    x = as_coords(pt)
    ric = ricci_tensor(spec, x, step)
    return np.einsum("mn...,mn...->...", inverse_metric(spec.metric(x)), ric)


def relative_error(a, b, tensor_ndim):
    """Normwise relative difference per point: ``max|a - b| / max|b|`` over the tensor axes."""
    axes = tuple(range(tensor_ndim))
    num = np.max(np.abs(np.asarray(a) - np.asarray(b)), axis=axes)
    den = np.max(np.abs(np.asarray(b)), axis=axes)
    return num / np.maximum(den, 1e-300)


__all__ = [
    "Point",
    "MetricSpec",
    "MetricValue",
    "ZeroMass",
    "PositiveMass",
    "catalog",
    "eval_metric",
    "christoffel_fd_oracle",
    "christoffel_closed",
    "hessian_scalar",
    "hessian_fd_oracle",
    "box_scalar",
    "ricci_tensor",
    "scalar_curvature",
    "inverse_metric",
    "metric_det",
    "christoffel_from",
    "gradient_sharp",
    "relative_error",
]
