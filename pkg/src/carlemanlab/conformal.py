"""Conformal rescalings and the transport of wave operators.

A ``ConformalMap`` pairs a source background ``g`` with ``gbar = Omega^2 g``.
The warped inversion ``gbar = f^2 g / K`` sends null infinity to a finite
double null cone; the Penrose factor sends Minkowski to the Einstein cylinder.
Scalar curvature is always computed directly from Christoffel symbols, so the
Yamabe relation is an independent cross-check rather than an input.
"""

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .errors import BoundViolated, ConfigError, DomainViolation
from .fields import ScalarField
from .geometry import (
    MetricSpec,
    as_coords,
    box_scalar,
    eval_metric,
    hessian_scalar,
    scalar_curvature,
)
from .modes import PositiveMass, ZeroMass, tilde_uv


@dataclass
class ConformalMap:
    """``target = omega^2 * source``; ``factors`` optionally splits ``omega = Omega1 * Omega2``."""

    source: MetricSpec
    target: MetricSpec
    omega: ScalarField
    factors: tuple | None = None

    @property
    def n(self):
        return self.source.n


@dataclass
class OperatorCoefficients:
    """Lower-order coefficients of ``L = Box + a^alpha d_alpha + V``.

    ``a`` maps a coordinate array to the vector components ``(N, *batch)``;
    ``V`` maps it to the potential. ``decay`` records declared bounds as
    callables of the point, keyed by component name.
    """

    a: object
    V: object
    decay: dict = field(default_factory=dict)
    name: str = "coefficients"


def _omega_field(target, name="Omega"):
    return ScalarField(target.scalar_expr(name), target.n, target.scalar_params(), name=name)


def invert_metric(spec, mode, warp="K"):
    """Inverted background ``f^2 g / K`` (or ``f^2 g`` with ``warp='plain'``)."""
    if spec.picture != "physical":
        raise ConfigError("inversion applies to a physical-picture background")
    return spec.with_picture("inverted", mode=mode, warp=warp)


def inversion_map(spec, mode, warp="K"):
    target = invert_metric(spec, mode, warp)
    omega = _omega_field(target)
    factors = None
    if warp == "K":
        params = target.scalar_params()
        o1 = ScalarField(1 / sp.sqrt(target.scalar_expr("K")), spec.n, params, name="Omega1")
        o2 = ScalarField(target.scalar_expr("f"), spec.n, params, name="Omega2")
        factors = (o1, o2)
    return ConformalMap(spec, target, omega, factors)


def sharp_map(spec):
    """``g_sharp = g / K``."""
    target = spec.with_picture("sharp")
    return ConformalMap(spec, target, _omega_field(target))


def penrose_map(n=3):
    """Minkowski to the Einstein cylinder with ``Omega^2 = 1 / ((1 + u^2)(1 + v^2))``."""
    source = MetricSpec.create("Minkowski", n)
    target = source.with_picture("penrose")
    return ConformalMap(source, target, _omega_field(target))


def identity_map(spec):
    return ConformalMap(spec, spec, ScalarField(sp.Integer(1), spec.n, name="one"))


def uv_inversion(mode, u, v):
    """``(U, V) = (-1/ut, 1/vt)``; in positive-mass mode this is ``(1/u, 1/v)``."""
    ut, vt = tilde_uv(mode, np.array([u, v], dtype=float))
    if np.any(ut <= 0) or np.any(vt <= 0):
        raise DomainViolation("null coordinates outside the inversion domain")
    return -1.0 / ut, 1.0 / vt


def uv_from_inverted(mode, U, V):
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if np.any(U >= 0) or np.any(V <= 0):
        raise DomainViolation("inverted coordinates need U < 0 < V")
    ut, vt = -1.0 / U, 1.0 / V
    if isinstance(mode, ZeroMass):
        return mode.eps - ut, vt - mode.eps
    return -ut, vt


def metric_in_UV(cmap, pt):
    """Target metric pulled back to ``(U, V, y)``.

    Uses ``du = -ut^2 dU`` and ``dv = -vt^2 dV``, which follow from
    ``U = -1/ut`` and ``V = 1/vt``.
    """
    x = as_coords(pt)
    mode = cmap.target.mode
    ut, vt = tilde_uv(mode, x)
    J = np.zeros((cmap.target.dim, cmap.target.dim) + ut.shape)
    J[0, 0] = -(ut**2)
    J[1, 1] = -(vt**2)
    for k in range(2, cmap.target.dim):
        J[k, k] = 1.0
    g = cmap.target.metric(x)
    return np.einsum("ia...,ij...,jb...->ab...", J, g, J)


def hessian_transform(cmap, field, pt):
    """Target Hessian of ``field`` from source data via the conformal law.

    For ``gbar = Omega^2 g``:
    ``Hbar_ij = H_ij - (d_i Omega d_j phi + d_j Omega d_i phi) / Omega
    + g_ij g^kl d_k Omega d_l phi / Omega``.
    """
    x = as_coords(pt)
    src = eval_metric(cmap.source, x)
    H = hessian_scalar(cmap.source, field, x, src)
    oj = cmap.omega.jet(x)
    pj = field if hasattr(field, "d1") else field.jet(x)
    dlog = oj.d1 / oj.value
    cross = np.einsum("i...,j...->ij...", dlog, pj.d1)
    trace = np.einsum("kl...,k...,l...->...", src.g_inv, dlog, pj.d1)
    return H - cross - np.swapaxes(cross, 0, 1) + src.g * trace


def conformal_factor_field(cmap, power):
    """``Omega^power`` as a closed-form field."""
    return ScalarField(cmap.omega.expr**power, cmap.n, cmap.omega.params, name=f"Omega^{power}")


def rescaled_field(cmap, field):
    """``phibar = Omega^(-(n-1)/2) phi``."""
    k = -sp.Rational(cmap.n - 1, 2)
    om = cmap.omega
    merged = dict(field.params)
    merged.update(om.params)
    return ScalarField(om.expr**k * field.expr, cmap.n, merged, field.support, name=f"{field.name}_bar")


def conformal_laplacian(spec, field, x, step=1e-3, metric=None, curvature=None):
    """``P_g phi = Box_g phi - (n-1)/(4n) R_g phi``."""
    n = spec.n
    if curvature is None:
        curvature = scalar_curvature(spec, x, step)
    return box_scalar(spec, field, x, metric) - (n - 1) / (4.0 * n) * curvature * field.value(x)


def conformal_laplacian_transport(cmap, field, pt, step=1e-3):
    """Residual ``P_gbar(phibar) - Omega^(-(n+3)/2) P_g phi`` at each point."""
    x = as_coords(pt)
    n = cmap.n
    lhs = conformal_laplacian(cmap.target, rescaled_field(cmap, field), x, step)
    rhs = cmap.omega.value(x) ** (-(n + 3) / 2.0) * conformal_laplacian(cmap.source, field, x, step)
    return lhs - rhs


def yamabe_residual(cmap, pt, step=1e-3):
    """Compare ``Omega^-2 R_g - R_gbar`` with both forms of the Yamabe identity.

    Returns ``(difference, form1, form2)`` where ``form1`` is
    ``4n/(n-1) Omega^(-(n+3)/2) Box_g Omega^((n-1)/2)`` and ``form2`` is
    ``2n Omega^-3 Box_g Omega + n(n-3) Omega^-4 |dOmega|^2``.
    """
    x = as_coords(pt)
    n = cmap.n
    om = cmap.omega.value(x)
    diff = om**-2 * scalar_curvature(cmap.source, x, step) - scalar_curvature(cmap.target, x, step)
    src = eval_metric(cmap.source, x)
    pw = conformal_factor_field(cmap, sp.Rational(n - 1, 2))
    form1 = 4.0 * n / (n - 1) * om ** (-(n + 3) / 2.0) * box_scalar(cmap.source, pw, x, src)
    oj = cmap.omega.jet(x)
    grad_sq = np.einsum("ij...,i...,j...->...", src.g_inv, oj.d1, oj.d1)
    form2 = 2.0 * n * om**-3 * box_scalar(cmap.source, oj, x, src) + n * (n - 3) * om**-4 * grad_sq
    return diff, form1, form2


def transport_operator(cmap, coeffs, step=1e-3):
    """Coefficients of the rescaled operator ``Lbar`` with ``L_g phi = Omega^((n+3)/2) Lbar phibar``.

    ``abar = Omega^-2 a`` and
    ``Vbar = Omega^-2 V + (n-1)/4 Omega^-4 a^alpha d_alpha(Omega^2)
    + (n-1)/(4n) (Omega^-2 R_g - R_gbar)``.
    """
    n = cmap.n
    c = (n - 1) / (4.0 * n)

    def a_bar(x):
        return cmap.omega.value(x) ** -2 * coeffs.a(x)

    def V_bar(x):
        oj = cmap.omega.jet(x)
        om = oj.value
        d_om2 = 2.0 * om * oj.d1
        adot = np.einsum("a...,a...->...", coeffs.a(x), d_om2)
        curv = om**-2 * scalar_curvature(cmap.source, x, step) - scalar_curvature(cmap.target, x, step)
        return om**-2 * coeffs.V(x) + (n - 1) / 4.0 * om**-4 * adot + c * curv

    return OperatorCoefficients(a_bar, V_bar, {}, name=f"{coeffs.name}_bar")


def flat_source_transport(cmap):
    """Transported wave operator of a flat source: ``abar = 0`` and ``Vbar = -(n-1)/(4n) R_gbar``.

    ``R_gbar`` comes from the Yamabe form ``-2n Omega^-3 Box Omega - n(n-3) Omega^-4 |dOmega|^2``
    with closed-form jets of ``Omega``, so no curvature finite differences are needed.
    """
    n = cmap.n
    N = n + 1
    c = (n - 1) / (4.0 * n)

    def a_bar(x):
        return np.zeros((N,) + np.shape(x)[1:])

    def V_bar(x):
        src = eval_metric(cmap.source, x, check=False)
        oj = cmap.omega.jet(x)
        grad_sq = np.einsum("ij...,i...,j...->...", src.g_inv, oj.d1, oj.d1)
        R_bar = -2.0 * n * oj.value**-3 * box_scalar(cmap.source, oj, x, src) - n * (n - 3) * oj.value**-4 * grad_sq
        return -c * R_bar

    return OperatorCoefficients(a_bar, V_bar, {}, name="flat_source_yamabe")


def apply_operator(spec, coeffs, field, x, metric=None):
    """``L phi = Box phi + a^alpha d_alpha phi + V phi``."""
    jet = field.jet(x)
    return box_scalar(spec, jet, x, metric) + np.einsum("a...,a...->...", coeffs.a(x), jet.d1) + coeffs.V(x) * jet.value


def operator_residual(cmap, coeffs, field, pt, step=1e-3, transported=None):
    """``|L_g phi - Omega^((n+3)/2) Lbar phibar|`` at each point."""
    x = as_coords(pt)
    n = cmap.n
    if transported is None:
        transported = transport_operator(cmap, coeffs, step)
    lhs = apply_operator(cmap.source, coeffs, field, x)
    rhs = cmap.omega.value(x) ** ((n + 3) / 2.0) * apply_operator(cmap.target, transported, rescaled_field(cmap, field), x)
    return np.abs(lhs - rhs)


def zero_coefficients(n):
    N = n + 1
    return OperatorCoefficients(lambda x: np.zeros((N,) + np.shape(x)[1:]), lambda x: np.zeros(np.shape(x)[1:]), name="zero")


def decaying_coefficients(mode, n, eta=0.25, amp=1.0):
    """Built-in coefficients in the decaying-potential class.

    ``a^u ~ vt^-1 r^-1/2``, ``a^v ~ ut^-1 r^-1/2``, ``a^I ~ f^(1/2) r^(-3/2)`` and
    ``V ~ f^(1+eta)``, each modulated by a bounded angular factor. ``r`` is
    ``v - u``. The declared bounds are stored in ``decay``.
    """
    N = n + 1

    def parts(x):
        ut, vt = tilde_uv(mode, x)
        r = x[1] - x[0]
        f = 1.0 / (ut * vt)
        mod = 1.0 + 0.5 * np.cos(x[2])
        return ut, vt, r, f, mod

    def a(x):
        ut, vt, r, f, mod = parts(x)
        out = np.zeros((N,) + ut.shape)
        out[0] = amp * mod / (vt * np.sqrt(r))
        out[1] = amp * mod / (ut * np.sqrt(r))
        for k in range(2, N):
            out[k] = amp * mod * np.sqrt(f) * r**-1.5
        return out

    def V(x):
        _, _, _, f, mod = parts(x)
        return amp * mod * f ** (1 + eta)

    def bound_abar_u(x):
        ut, _, r, f, _ = parts(x)
        return ut / f / np.sqrt(r)

    def bound_abar_v(x):
        _, vt, r, f, _ = parts(x)
        return vt / f / np.sqrt(r)

    def bound_vbar(x):
        _, _, _, f, _ = parts(x)
        return f ** (-1 + eta)

    decay = {"abar_u": bound_abar_u, "abar_v": bound_abar_v, "Vbar": bound_vbar}
    return OperatorCoefficients(a, V, decay, name=f"decaying(eta={eta})")


def fit_exponent(values, variable):
    """Least-squares slope of ``log|values|`` against ``log(variable)``."""
    slope, _ = np.polyfit(np.log(np.asarray(variable, float)), np.log(np.abs(np.asarray(values, float))), 1)
    return float(slope)


def check_transported_decay(cmap, coeffs, ray, variable, step=1e-3, tol=0.1):
    """Fit exponents of ``abar^u``, ``abar^v`` and ``Vbar`` against their declared bounds along a ray.

    Returns a dict ``{name: (fitted, declared)}`` and raises ``BoundViolated``
    when a fitted exponent is off by more than ``tol``.
    """
    x = as_coords(ray)
    tr = transport_operator(cmap, coeffs, step)
    ab = tr.a(x)
    vals = {"abar_u": ab[0], "abar_v": ab[1], "Vbar": tr.V(x)}
    out = {}
    for name, val in vals.items():
        fitted = fit_exponent(val, variable)
        declared = fit_exponent(coeffs.decay[name](x), variable)
        out[name] = (fitted, declared)
        if abs(fitted - declared) > tol:
            raise BoundViolated(f"{name}: fitted exponent {fitted:.3f} vs declared {declared:.3f}")
    return out


@dataclass
class MassGapReport:
    log_coefficient: float
    intercept: float
    lower_constant: float
    upper_constant: float
    r_over_rstar: tuple
    u_over_r: float
    inv_r_over_sqrt_f: float
    zero_mass: bool
    max_abs_gap: float


def mass_gap_bounds(spec, pt, m_min=None, mode=None):
    """Quantify ``r* - r`` against ``2 m_min log r`` on a grid.

    Fits ``r* - r = a log r + b``; reports the constant ``C`` in
    ``r* - r >= 2 m_min log r - C``, the constant in ``r* - r <= C_m log r``,
    the range of ``r / r*`` and the inversion bounds ``-u / r`` and
    ``1 / (r sqrt f)``. Zero-mass families have ``r* = r`` identically.
    """
    x = as_coords(pt).reshape(spec.dim, -1)
    rs = x[1] - x[0]
    r = spec.scalar("r", x)
    gap = rs - r
    zero_mass = spec.family in ("Minkowski", "PerturbedMinkowski")
    if zero_mass:
        coef, icpt, low, up = 0.0, 0.0, 0.0, 0.0
    else:
        if m_min is None:
            m_min = spec.param_dict["m"]
        lr = np.log(r)
        coef, icpt = np.polyfit(lr, gap, 1)
        low_terms = 2 * m_min * lr - gap
        low = float(np.max(low_terms))
        up = float(np.max(gap / lr))
        # The lower bound is meaningful only if the excess over 2 m_min log r does not drift to -inf.
        trend = np.polyfit(lr, gap - 2 * m_min * lr, 1)[0]
        if trend < -0.05 * m_min:
            i = int(np.argmax(low_terms))
            raise BoundViolated(f"r* - r falls below 2 m_min log r without bound; worst at {x[:, i].tolist()}")
    if mode is None:
        mode = ZeroMass(1.0) if zero_mass else PositiveMass(m_min)
    ut, vt = tilde_uv(mode, x)
    f = 1.0 / (ut * vt)
    ratio = r / rs
    return MassGapReport(
        float(coef),
        float(icpt),
        float(low),
        float(up),
        (float(np.min(ratio)), float(np.max(ratio))),
        float(np.max(-x[0] / r)),
        float(np.max(1.0 / (r * np.sqrt(f)))),
        zero_mass,
        float(np.max(np.abs(gap))),
    )


def null_tangent_vectors(spec, mode, pt, metric=None):
    """Null vectors tangent to the level set of ``f``: ``T +/- E_1`` in the adapted frame."""
    from .foliation import adapted_frame

    x = as_coords(pt)
    fr = adapted_frame(spec, mode, x, metric)
    return fr.T + fr.E[0], fr.T - fr.E[0]


__all__ = [
    "ConformalMap",
    "OperatorCoefficients",
    "invert_metric",
    "inversion_map",
    "sharp_map",
    "penrose_map",
    "identity_map",
    "uv_inversion",
    "uv_from_inverted",
    "hessian_transform",
    "conformal_laplacian_transport",
    "yamabe_residual",
    "transport_operator",
    "operator_residual",
    "decaying_coefficients",
    "mass_gap_bounds",
]
