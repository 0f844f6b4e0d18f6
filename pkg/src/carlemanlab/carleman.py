"""Conjugated wave operator, energy current and weighted Carleman integrals.

For a reparametrization ``F(f)`` and ``lambda > 0`` the conjugated operator is
``L psi = e^(-lambda F) Box(e^(lambda F) psi)``. Multiplying it by
``S_w psi = grad f . grad psi - w' psi`` produces a pointwise identity whose
only non-signed term is a divergence. This module evaluates every piece of
that identity in closed form, checks it against finite-difference
divergences, and integrates the weighted estimates by Gauss-Legendre
quadrature for compactly supported test functions.

Test functions are held fixed in the conjugated variable ``psi``; then
``phi = e^(lambda F) psi`` and each weighted ``phi`` integral reduces to an
unweighted ``psi`` integral with a power of ``f``.
"""

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from ._symbolic import polar_axes
from .errors import (
    AbsorptionFailed,
    BoundViolated,
    ConfigError,
    ConstantViolated,
    FitUnstable,
    QuadratureUnderresolved,
)
from .fields import foliation_field, weight_field
from .foliation import F1, F2, adapted_frame, reparam_eval
from .geometry import MetricSpec, as_coords, eval_metric, hessian_scalar
from .jets import Jet2, convergence_order, fd_gradient, fd_jet
from .modes import check_mode_domain, f_expr, mode_param_values, uv_from_f_sigma

DEFAULT_LAMBDAS = (20.0, 40.0, 80.0, 160.0)


# -- reparametrization helpers ----------------------------------------------------------


def reparam_expr(reparam, f):
    """Sympy expression of ``F(f)``."""
    if isinstance(reparam, F1):
        return sp.log(f) - f ** sp.Float(reparam.p)
    if isinstance(reparam, F2):
        return -(f ** (-sp.Float(reparam.q)))
    raise ConfigError(f"unknown reparametrization {reparam!r}")


def conjugate_field(phi, mode, reparam, lam):
    """Closed-form ``psi = e^(-lambda F) phi`` for a closed-form ``phi``."""
    fe = f_expr(mode, phi.n)
    params = mode_param_values(mode) if mode.kind == "zero-mass" else {}
    F = reparam_expr(reparam, fe)
    return phi.transformed(lambda e: sp.exp(-sp.Float(lam) * F) * e, params, name=f"{phi.name}_conj")


def carleman_weights(reparam, f):
    """Weights of the estimate in the conjugated variable.

    Returns ``(lhs, normal, zero)`` such that the estimate reads
    ``int lhs |L psi|^2 >~ lambda int normal |E_n psi|^2
    + lambda int Psi sum_i |E_i psi|^2 + lambda^3 int zero psi^2``.
    """
    f = np.asarray(f, dtype=float)
    if isinstance(reparam, F1):
        p = reparam.p
        return f, f**p, f ** (p - 1)
    q = reparam.q
    return f ** (q + 1), np.ones_like(f), f ** (-2 * q - 1)


def log_weight(reparam, lam, f):
    """``log W_lambda``: ``(1 - 2 lambda) log f + 2 lambda f^p`` or ``(q + 1) log f + 2 lambda f^-q``."""
    f = np.asarray(f, dtype=float)
    if isinstance(reparam, F1):
        return (1 - 2 * lam) * np.log(f) + 2 * lam * f**reparam.p
    q = reparam.q
    return (q + 1) * np.log(f) + 2 * lam * f ** (-q)


# -- pointwise state --------------------------------------------------------------------


@dataclass
class ConjugationState:
    """All pointwise quantities entering the conjugated identity.

    Covariant tensors carry leading indices; ``P``, ``P_flat``, ``P_sharp``
    and ``P_Q`` are one-forms with ``P = P_Q + P_flat + P_sharp``.
    """

    lam: float
    x: np.ndarray
    f: np.ndarray
    df: np.ndarray
    grad_f: np.ndarray
    hess_f: np.ndarray
    box_f: np.ndarray
    ell: np.ndarray
    ell_bar: np.ndarray
    F: np.ndarray
    Fp: np.ndarray
    Fpp: np.ndarray
    G: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    box_psi: np.ndarray
    w: np.ndarray
    dw: np.ndarray
    box_w: np.ndarray
    w_prime: np.ndarray
    h: np.ndarray
    S_psi: np.ndarray
    Sw_psi: np.ndarray
    Q: np.ndarray
    pi: np.ndarray
    Lambda: np.ndarray
    Ecal: np.ndarray
    P_Q: np.ndarray
    P_flat: np.ndarray
    P_sharp: np.ndarray
    metric: object = field(repr=False, default=None)

    @property
    def P(self):
        return self.P_Q + self.P_flat + self.P_sharp


def _jet(obj, x):
    if isinstance(obj, Jet2):
        return obj
    return obj.jet(x)


def _zero_jet(x):
    shape = x.shape[1:]
    N = x.shape[0]
    return Jet2(np.zeros(shape), np.zeros((N,) + shape), np.zeros((N, N) + shape))


def conjugation_state(spec, mode, reparam, psi, lam, pt, w=None, metric=None, check=True):
    """Evaluate the conjugation state at points ``pt``.

    ``psi`` is a field (or a ``Jet2``) in the conjugated variable. ``w`` is
    the current weight; the default is ``-Psi / 2`` for the mode, and the
    string ``"zero"`` selects ``w = 0``. ``h = w - (n-1)/4 + Box f / 2``.
    """
    x = as_coords(pt)
    n = spec.n
    if check:
        check_mode_domain(mode, x)
    if metric is None:
        metric = eval_metric(spec, x, check=check, pole_margin=0.0)
    g, g_inv = metric.g, metric.g_inv
    fj = foliation_field(mode, n).jet(x)
    pj = _jet(psi, x)
    if isinstance(w, str) and w == "zero":
        wj = _zero_jet(x)
    else:
        wj = _jet(weight_field(mode, n) if w is None else w, x)

    hess_f = hessian_scalar(spec, fj, x, metric)
    box_f = np.einsum("ij...,ij...->...", g_inv, hess_f)
    grad_f = np.einsum("ij...,j...->i...", g_inv, fj.d1)
    ell = np.einsum("i...,i...->...", grad_f, fj.d1)
    ell_bar = np.einsum("i...,j...,ij...->...", grad_f, grad_f, hess_f)
    F, Fp, Fpp, G = reparam_eval(reparam, fj.value)

    hess_psi = hessian_scalar(spec, pj, x, metric)
    box_psi = np.einsum("ij...,ij...->...", g_inv, hess_psi)
    hess_w = hessian_scalar(spec, wj, x, metric)
    box_w = np.einsum("ij...,ij...->...", g_inv, hess_w)

    w_prime = wj.value - (n - 1) / 4.0
    h = w_prime + 0.5 * box_f
    S = np.einsum("i...,i...->...", grad_f, pj.d1)
    Sw = S - w_prime * pj.value

    dpsi_sq = np.einsum("ij...,i...,j...->...", g_inv, pj.d1, pj.d1)
    Q = np.einsum("i...,j...->ij...", pj.d1, pj.d1) - 0.5 * g * dpsi_sq
    pi = h * g - hess_f

    Lam = -(Fp**2) * ell_bar - Fp * Fpp * ell**2 - Fp**2 * ell * h
    Ecal = 2 * Fp * h + Fpp * ell

    P_Q = np.einsum("ij...,i...->j...", Q, grad_f)
    P_flat = 0.5 * lam**2 * ell * Fp**2 * fj.d1 * pj.value**2
    P_sharp = -w_prime * pj.value * pj.d1 + 0.5 * wj.d1 * pj.value**2

    return ConjugationState(
        lam, x, fj.value, fj.d1, grad_f, hess_f, box_f, ell, ell_bar, F, Fp, Fpp, G,
        pj.value, pj.d1, box_psi, wj.value, wj.d1, box_w, w_prime, h, S, Sw, Q, pi,
        Lam, Ecal, P_Q, P_flat, P_sharp, metric,
    )


def conjugated_operator(state):
    """Expansion form ``Box psi + 2 lambda F' S_w psi + lambda^2 F'^2 ell psi + lambda E psi``."""
    s = state
    lam = s.lam
    return s.box_psi + 2 * lam * s.Fp * s.Sw_psi + lam**2 * s.Fp**2 * s.ell * s.psi + lam * s.Ecal * s.psi


def conjugated_operator_terms(state):
    """The expansion split by powers of lambda: ``(A, B, C)`` with ``L psi = A + lambda B + lambda^2 C``."""
    s = state
    A = s.box_psi
    B = 2 * s.Fp * s.S_psi + s.Fpp * s.ell * s.psi + s.Fp * s.box_f * s.psi
    C = s.Fp**2 * s.ell * s.psi
    return A, B, C


def conjugated_operator_direct(spec, mode, reparam, psi, lam, pt, step=1e-3, richardson=True):
    """``e^(-lambda F) Box(e^(lambda F) psi)`` with finite-difference jets of ``e^(lambda F) psi``."""
    x = as_coords(pt)
    check_mode_domain(mode, x)
    fval = foliation_field(mode, spec.n)
    metric = eval_metric(spec, x, pole_margin=0.0)

    def phi(y):
        F, _, _, _ = reparam_eval(reparam, fval.value(y))
        return np.exp(lam * F) * psi.value(y)

    valid = lambda y: spec.in_domain(y, pole_margin=0.0)
    jet = fd_jet(phi, x, step=step, richardson=richardson, valid=valid)
    hess = jet.d2 - np.einsum("kij...,k...->ij...", metric.christoffel, jet.d1)
    box = np.einsum("ij...,ij...->...", metric.g_inv, hess)
    F, _, _, _ = reparam_eval(reparam, fval.value(x))
    return np.exp(-lam * F) * box


# -- the identity -----------------------------------------------------------------------


def identity_terms(state):
    """Right-hand side of the identity for ``L psi S_w psi`` without the divergence.

    Returns a dict with keys ``lhs`` and one entry per term.
    """
    s = state
    lam = s.lam
    dpsi_up = np.einsum("ij...,j...->i...", s.metric.g_inv, s.dpsi)
    terms = {
        "energy": 2 * lam * s.Fp * s.Sw_psi**2,
        "pi": np.einsum("ij...,i...,j...->...", s.pi, dpsi_up, dpsi_up),
        "zero": lam**2 * s.Lambda * s.psi**2,
        "cross": lam * s.Ecal * s.psi * s.Sw_psi,
        "box_w": -0.5 * s.box_w * s.psi**2,
    }
    return conjugated_operator(s) * s.Sw_psi, terms


def divergence_integrands(state):
    """Closed-form divergences ``(div(P_Q + P_sharp), div(P_flat) / lambda^2)``.

    They follow from the identity itself and are exact whenever it holds;
    integrating them over a region where ``psi`` vanishes at the boundary
    must give zero, which is how quadrature checks the current.
    """
    s = state
    A, _, C = conjugated_operator_terms(s)
    dpsi_up = np.einsum("ij...,j...->i...", s.metric.g_inv, s.dpsi)
    pi_term = np.einsum("ij...,i...,j...->...", s.pi, dpsi_up, dpsi_up)
    r0 = A * s.Sw_psi - pi_term + 0.5 * s.box_w * s.psi**2
    r2 = C * s.Sw_psi - s.Lambda * s.psi**2
    return r0, r2


def current_density(spec, mode, reparam, psi, lam, w=None, parts="all"):
    """Callable ``y -> sqrt|g| g^(ij) P_j``; ``parts`` is ``all``, ``flat`` or ``rest``."""

    def density(y):
        st = conjugation_state(spec, mode, reparam, psi, lam, y, w=w, check=False,
                               metric=eval_metric(spec, y, check=False))
        if parts == "flat":
            P = st.P_flat
        elif parts == "rest":
            P = st.P_Q + st.P_sharp
        else:
            P = st.P
        up = np.einsum("ij...,j...->i...", st.metric.g_inv, P)
        return np.sqrt(np.abs(st.metric.det)) * up

    return density


def fd_divergence(spec, density, x, step=1e-3, richardson=False):
    """``(1/sqrt|g|) d_i (sqrt|g| P^i)`` by finite differences."""
    valid = lambda y: spec.in_domain(y, pole_margin=0.0)
    d, err = fd_gradient(density, x, step=step, richardson=richardson, valid=valid)
    vol = np.sqrt(np.abs(eval_metric(spec, x, check=False).det))
    div = np.einsum("ii...->...", d) / vol
    return div, np.einsum("ii...->...", err) / vol


@dataclass
class IdentityResidual:
    residual: np.ndarray
    relative: np.ndarray
    lhs: np.ndarray
    terms: dict
    divergence: np.ndarray
    divergence_error: np.ndarray
    scale: np.ndarray


def algebraic_identity_residual(spec, mode, reparam, psi, lam, pt, step=1e-3, richardson=False, w=None):
    """Residual of ``L psi S_w psi = sum of terms + div P`` with ``div P`` by finite differences.

    ``relative`` divides by the sum of absolute values of all terms.
    """
    x = as_coords(pt)
    st = conjugation_state(spec, mode, reparam, psi, lam, x, w=w)
    lhs, terms = identity_terms(st)
    div, derr = fd_divergence(spec, current_density(spec, mode, reparam, psi, lam, w), x, step, richardson)
    rhs = sum(terms.values()) + div
    res = lhs - rhs
    scale = np.abs(lhs) + sum(np.abs(t) for t in terms.values()) + np.abs(div)
    rel = np.abs(res) / np.maximum(scale, 1e-300)
    return IdentityResidual(res, rel, lhs, terms, div, derr, scale)


def identity_convergence(spec, mode, reparam, psi, lam, pt, steps=(5e-3, 2.5e-3, 1.25e-3, 6.25e-4), w=None):
    """Residuals of the identity for a sequence of plain fourth-order steps and the fitted order."""
    res = []
    for h in steps:
        r = algebraic_identity_residual(spec, mode, reparam, psi, lam, pt, step=h, richardson=False, w=w)
        res.append(float(np.max(np.abs(r.residual))))
    return np.asarray(steps, float), np.asarray(res), convergence_order(steps, res)


def algebraic_inequality_gap(state):
    """Gap in the pointwise inequality and the square it must equal.

    The gap is ``F'^-1 |L psi|^2 - (3 lambda^2 F' S_w^2 + 2 lambda pi(grad psi, grad psi)
    + 2 lambda^3 Lambda psi^2 + 2 lambda^2 E psi S_w - lambda Box w psi^2 + 2 lambda div P)``,
    with ``div P`` taken from the identity. It equals
    ``F'^-1 (L psi - lambda F' S_w psi)^2``, which is nonnegative.
    """
    s = state
    lam = s.lam
    Lpsi = conjugated_operator(s)
    r0, r2 = divergence_integrands(s)
    divP = r0 + lam**2 * r2
    dpsi_up = np.einsum("ij...,j...->i...", s.metric.g_inv, s.dpsi)
    pi_term = np.einsum("ij...,i...,j...->...", s.pi, dpsi_up, dpsi_up)
    rhs = (
        3 * lam**2 * s.Fp * s.Sw_psi**2
        + 2 * lam * pi_term
        + 2 * lam**3 * s.Lambda * s.psi**2
        + 2 * lam**2 * s.Ecal * s.psi * s.Sw_psi
        - lam * s.box_w * s.psi**2
        + 2 * lam * divP
    )
    gap = Lpsi**2 / s.Fp - rhs
    square = (Lpsi - lam * s.Fp * s.Sw_psi) ** 2 / s.Fp
    return gap, square


# -- coefficient bounds -----------------------------------------------------------------


@dataclass
class LambdaEReport:
    ratio_min: float
    ratio_max: float
    E_constant: float
    argmin: list
    passed: bool


def lambda_e_bounds(spec, mode, reparam, pt, w=None):
    """Containment ``Lambda / (f F' G) in [c1, c2]`` with ``c1 > 0`` and the constant in ``|E| <= C G``.

    Raises ``BoundViolated`` with the worst point when ``Lambda`` is not positive.
    """
    x = as_coords(pt)
    zero = _zero_jet(x)
    st = conjugation_state(spec, mode, reparam, zero, 0.0, x, w=w)
    ratio = np.ravel(st.Lambda / (st.f * st.Fp * st.G))
    econst = float(np.max(np.abs(st.Ecal) / st.G))
    i = int(np.argmin(ratio))
    where = [float(t) for t in x.reshape(x.shape[0], -1)[:, i]]
    if not np.all(np.isfinite(ratio)) or ratio[i] <= 0:
        raise BoundViolated(f"Lambda / (f F' G) = {ratio[i]:.3e} is not positive at {where}")
    return LambdaEReport(float(ratio[i]), float(np.max(ratio)), econst, where, True)


# -- quadrature -------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureDomain:
    """Truncated region ``f in [tau, omega']``, ``u + v in [sigma-, sigma+]`` times the sphere.

    ``active_f`` and ``active_sigma`` restrict integration to the support box
    of the test function; the region outside it contributes exactly zero.
    The support must lie strictly inside the truncation, so the test function
    vanishes on a collar of cells next to the boundary and the boundary flux
    of the current is exactly zero.
    ``rule`` is ``gauss-legendre`` (``order`` nodes per cell) or ``midpoint``.
    ``f_spacing`` is ``linear`` or ``log``.
    """

    f_range: tuple
    sigma_range: tuple
    cells: tuple = (8, 8, 6)
    order: int = 4
    n_azimuth: int = 4
    rule: str = "gauss-legendre"
    active_f: tuple | None = None
    active_sigma: tuple | None = None
    f_spacing: str = "linear"
    require_collar: bool = True

    def __post_init__(self):
        if self.rule not in ("gauss-legendre", "midpoint"):
            raise ConfigError(f"unknown quadrature rule {self.rule!r}")
        if self.f_spacing not in ("linear", "log"):
            raise ConfigError(f"unknown f spacing {self.f_spacing!r}")
        tau, om = self.f_range
        if not 0 < tau < om < 1:
            raise ConfigError("need 0 < tau < omega' < 1")
        if not self.sigma_range[0] < self.sigma_range[1]:
            raise ConfigError("empty sigma range")
        if self.require_collar:
            af, asg = self.f_box, self.sigma_box
            if not (tau < af[0] < af[1] < om and self.sigma_range[0] < asg[0] < asg[1] < self.sigma_range[1]):
                raise ConfigError("test function support must lie strictly inside the truncated domain")

    @property
    def f_box(self):
        return tuple(self.active_f) if self.active_f is not None else tuple(self.f_range)

    @property
    def sigma_box(self):
        return tuple(self.active_sigma) if self.active_sigma is not None else tuple(self.sigma_range)

    @classmethod
    def around(cls, bump, f_range=None, sigma_range=None, omega_prime=None, **kw):
        """Domain whose active box is the support of a Carleman bump."""
        af, asg = bump.f_range, bump.sigma_range
        if f_range is None:
            f_range = (af[0] / 2.0, omega_prime if omega_prime is not None else min(0.99, 2.0 * af[1]))
        if sigma_range is None:
            pad = asg[1] - asg[0]
            sigma_range = (asg[0] - pad, asg[1] + pad)
        return cls(tuple(f_range), tuple(sigma_range), active_f=tuple(af), active_sigma=tuple(asg), **kw)

    def refined(self):
        return QuadratureDomain(
            self.f_range, self.sigma_range, tuple(2 * c for c in self.cells), self.order,
            2 * self.n_azimuth, self.rule, self.active_f, self.active_sigma, self.f_spacing,
            self.require_collar,
        )

    def _rule_1d(self, a, b, cells):
        if self.rule == "midpoint":
            t, wt = np.array([0.0]), np.array([2.0])
        else:
            t, wt = np.polynomial.legendre.leggauss(self.order)
        edges = np.linspace(a, b, cells + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
        weights = (half[:, None] * wt[None, :]).ravel()
        return nodes, weights

    def nodes(self, mode, n):
        """Coordinates ``(N, M)`` and weights ``(M,)`` for ``du dv dy``.

        The weights include the Jacobian ``1 / (f^2 D)`` of ``(f, sigma)`` with
        ``D = sqrt(sigma^2 + 4/f)``; the metric volume factor is applied by
        the caller.
        """
        fa, fb = self.f_box
        if self.f_spacing == "log":
            s, ws = self._rule_1d(np.log(fa), np.log(fb), self.cells[0])
            fn, fw = np.exp(s), ws * np.exp(s)
        else:
            fn, fw = self._rule_1d(fa, fb, self.cells[0])
        sn, sw = self._rule_1d(*self.sigma_box, self.cells[1])
        axes_nodes = [fn, sn]
        axes_w = [fw, sw]
        polar = polar_axes(n)
        for k in range(2, n + 1):
            if k in polar:
                a_n, a_w = self._rule_1d(0.0, np.pi, self.cells[2])
            else:
                a_n = np.arange(self.n_azimuth) * (2 * np.pi / self.n_azimuth)
                a_w = np.full(self.n_azimuth, 2 * np.pi / self.n_azimuth)
            axes_nodes.append(a_n)
            axes_w.append(a_w)
        mesh = np.meshgrid(*axes_nodes, indexing="ij")
        wmesh = np.meshgrid(*axes_w, indexing="ij")
        f, sigma = mesh[0].ravel(), mesh[1].ravel()
        u, v = uv_from_f_sigma(mode, f, sigma)
        x = np.stack([u, v, *[m.ravel() for m in mesh[2:]]])
        D = np.sqrt(sigma**2 + 4.0 / f)
        wt = np.prod([m.ravel() for m in wmesh], axis=0) / (f**2 * D)
        return x, wt


def default_bump(mode, n=3, omega_prime=1e-2, sigma_range=(-10.0, 10.0), amp=0.3):
    """Reference test function: support ``f in [0.4, 0.6] omega'`` and ``u + v`` in ``sigma_range``."""
    from .fields import carleman_bump

    return carleman_bump(mode, n, (0.4 * omega_prime, 0.6 * omega_prime), sigma_range, amp=amp)


def _chunks(M, size):
    for start in range(0, M, size):
        yield slice(start, min(M, start + size))


# -- integral check ---------------------------------------------------------------------


@dataclass
class CarlemanReport:
    lam: float
    reparam: str
    lhs: float
    rhs_normal: float
    rhs_tangential: float
    rhs_zero: float
    ratio: float
    divergence_residual: float
    rhs_normal_unconjugated: float

    @property
    def rhs(self):
        return self.rhs_normal + self.rhs_tangential + self.rhs_zero

    def as_dict(self):
        return {
            "lambda": self.lam,
            "reparam": self.reparam,
            "lhs": self.lhs,
            "rhs_normal": self.rhs_normal,
            "rhs_tangential": self.rhs_tangential,
            "rhs_zero": self.rhs_zero,
            "ratio": self.ratio,
            "divergence_residual": self.divergence_residual,
            "rhs_normal_unconjugated": self.rhs_normal_unconjugated,
        }


@dataclass
class CarlemanSweep:
    reports: list
    constant: float
    exponents: dict
    refinement_change: float
    passed: bool


def reparam_label(reparam):
    if isinstance(reparam, F1):
        return f"F1(p={reparam.p:g})"
    return f"F2(q={reparam.q:g})"


_MOMENT_KEYS = (
    "AA", "AB", "AC", "BB", "BC", "CC",
    "normal", "normal_cross", "normal_sq", "tangential", "zero",
    "div0", "div2", "absA", "absB", "absC",
)


def carleman_moments(spec, mode, reparam, psi, domain, w=None, chunk=20000):
    """Integrals from which every report quantity follows for any ``lambda``.

    ``L psi = A + lambda B + lambda^2 C``, so the left side is a quartic in
    lambda with coefficients ``AA, AB, ...``. The unconjugated normal
    derivative ``e^(-lambda F) E_n phi = E_n psi + lambda F' (E_n f) psi``
    gives the three ``normal*`` moments.
    """
    x_all, wt_all = domain.nodes(mode, spec.n)
    acc = dict.fromkeys(_MOMENT_KEYS, 0.0)
    for sl in _chunks(x_all.shape[1], chunk):
        x, wq = x_all[:, sl], wt_all[sl]
        keep = np.ones(x.shape[1], bool) if psi.support is None else np.asarray(psi.support(x), bool)
        if not np.any(keep):
            continue
        x, wq = x[:, keep], wq[keep]
        metric = eval_metric(spec, x, pole_margin=0.0)
        st = conjugation_state(spec, mode, reparam, psi, 1.0, x, w=w, metric=metric)
        frame = adapted_frame(spec, mode, x, metric)
        wv = wq * np.sqrt(np.abs(metric.det))
        A, B, C = conjugated_operator_terms(st)
        lw, nw, zw = carleman_weights(reparam, st.f)
        Ed = np.einsum("ai...,i...->a...", frame.vectors, st.dpsi)
        En = Ed[-1]
        EnF = st.Fp * frame.normal_derivative * st.psi
        tang = np.sum(Ed[:-1] ** 2, axis=0)
        r0, r2 = divergence_integrands(st)
        Psi = _psi_weight(mode, x)
        vals = {
            "AA": lw * A * A, "AB": 2 * lw * A * B, "AC": 2 * lw * A * C,
            "BB": lw * B * B, "BC": 2 * lw * B * C, "CC": lw * C * C,
            "normal": nw * En**2, "normal_cross": 2 * nw * En * EnF, "normal_sq": nw * EnF**2,
            "tangential": Psi * tang, "zero": zw * st.psi**2,
            "div0": r0, "div2": r2,
            "absA": np.abs(A * st.Sw_psi), "absB": np.abs(B * st.Sw_psi), "absC": np.abs(C * st.Sw_psi),
        }
        for k, v in vals.items():
            acc[k] += float(np.sum(wv * v))
    return acc


def _psi_weight(mode, x):
    from .foliation import psi_weight

    return psi_weight(mode, x)


def reports_from_moments(moments, reparam, lambdas):
    m = moments
    out = []
    for lam in lambdas:
        lhs = m["AA"] + lam * m["AB"] + lam**2 * (m["AC"] + m["BB"]) + lam**3 * m["BC"] + lam**4 * m["CC"]
        nrm = lam * m["normal"]
        nrm_phi = lam * (m["normal"] + lam * m["normal_cross"] + lam**2 * m["normal_sq"])
        tan = lam * m["tangential"]
        zero = lam**3 * m["zero"]
        rhs = nrm + tan + zero
        div = abs(m["div0"] + lam**2 * m["div2"])
        scale = m["absA"] + lam * m["absB"] + lam**2 * m["absC"]
        out.append(
            CarlemanReport(float(lam), reparam_label(reparam), lhs, nrm, tan, zero,
                           lhs / rhs if rhs > 0 else np.inf, div / scale if scale > 0 else 0.0, nrm_phi)
        )
    return out


def fit_lambda_exponent(lambdas, values):
    lambdas = np.asarray(lambdas, float)
    values = np.asarray(values, float)
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise FitUnstable("lambda fit needs positive finite values")
    return convergence_order(lambdas, values)


def integral_carleman_check(spec, mode, reparam, psi, lambdas=DEFAULT_LAMBDAS, domain=None, w=None,
                            refine_tol=0.01, check_refinement=True, raise_on_violation=True):
    """Weighted Carleman integrals for a fixed conjugated test function over a lambda sweep.

    The constant ``c`` is the ratio at the smallest lambda; the sweep passes
    when ``LHS >= c RHS`` at every larger lambda, otherwise ``ConstantViolated``
    is raised (or ``passed`` is False when ``raise_on_violation`` is off). A second pass with every
    cell count doubled must change each integral by at most ``refine_tol``.
    """
    lambdas = sorted(float(t) for t in lambdas)
    if domain is None:
        domain = QuadratureDomain.around(psi)
    m = carleman_moments(spec, mode, reparam, psi, domain, w=w)
    reports = reports_from_moments(m, reparam, lambdas)
    change = 0.0
    if check_refinement:
        fine = reports_from_moments(carleman_moments(spec, mode, reparam, psi, domain.refined(), w=w), reparam, lambdas)
        for a, b in zip(reports, fine):
            for key in ("lhs", "rhs_normal", "rhs_tangential", "rhs_zero"):
                va, vb = getattr(a, key), getattr(b, key)
                if vb != 0:
                    change = max(change, abs(va - vb) / abs(vb))
        if change > refine_tol:
            raise QuadratureUnderresolved(f"cell doubling changed an integral by {change:.2%}")
        reports = fine
    if all(r.lhs == 0 and r.rhs == 0 for r in reports):
        return CarlemanSweep(reports, 0.0, {}, change, True)
    c = reports[0].ratio
    failed = [r.lam for r in reports[1:] if r.lhs < c * r.rhs]
    if failed and raise_on_violation:
        raise ConstantViolated(f"LHS < c RHS at lambda={failed} with c={c:.4e} fitted at lambda={lambdas[0]:g}")
    exps = {
        key: fit_lambda_exponent(lambdas, [getattr(r, key) for r in reports])
        for key in ("rhs_normal", "rhs_tangential", "rhs_zero", "lhs")
    }
    return CarlemanSweep(reports, c, exps, change, not failed)


# -- vanishing orders -------------------------------------------------------------------


@dataclass
class VanishingFit:
    N: int
    order: float
    radii: np.ndarray
    values: np.ndarray
    box_residual: float


def vanishing_order_fit(N, n=3, radii=None, angle=0.7, t=0.0):
    """Decay order of the exterior harmonic ``phi_N`` along a ray, by a log-log fit.

    Radii default to a dyadic ladder from 16 to 16384. Also returns the
    largest ``|Box phi_N|`` over ``r in [1, 10]`` on Minkowski.
    """
    from .fields import harmonic_field

    phi = harmonic_field(N, n)
    if radii is None:
        radii = 2.0 ** np.arange(4, 15)
    radii = np.asarray(radii, float)
    ang = [np.full_like(radii, angle)] + [np.full_like(radii, 0.3)] * (n - 2)
    x = np.stack([(t - radii) / 2, (t + radii) / 2, *ang])
    vals = phi.value(x)
    if np.any(vals == 0) or not np.all(np.isfinite(vals)):
        raise FitUnstable(f"phi_{N} vanishes or is nonfinite on the ray; pick another angle")
    slope, intercept = np.polyfit(np.log(radii), np.log(np.abs(vals)), 1)
    resid = np.log(np.abs(vals)) - (slope * np.log(radii) + intercept)
    if np.max(np.abs(resid)) > 0.05:
        raise FitUnstable(f"log-log fit residual {np.max(np.abs(resid)):.3e} too large")
    mink = MetricSpec.create("Minkowski", n)
    rr = np.linspace(1.0, 10.0, 12)
    th = np.linspace(0.3, 2.8, 12)
    R, TH = np.meshgrid(rr, th, indexing="ij")
    T = np.linspace(-2.0, 2.0, R.size).reshape(R.shape)
    xs = np.stack([(T - R) / 2, (T + R) / 2, TH] + [np.full_like(R, 0.4)] * (n - 2)).reshape(n + 1, -1)
    from .geometry import box_scalar

    box = box_scalar(mink, phi, xs, eval_metric(mink, xs, pole_margin=0.0))
    return VanishingFit(N, float(-slope), radii, vals, float(np.max(np.abs(box))))


# -- unique continuation ----------------------------------------------------------------


def smooth_cutoff(s, kappa):
    """``chi(s)``: 1 for ``s <= 1 - kappa``, 0 for ``s >= 1 - kappa/5``, quintic smoothstep between.

    Returns ``(chi, chi', chi'')``.
    """
    a, b = 1 - kappa, 1 - kappa / 5.0
    t = np.clip((np.asarray(s, float) - a) / (b - a), 0.0, 1.0)
    inside = (t > 0) & (t < 1)
    S = t**3 * (10 - 15 * t + 6 * t**2)
    dS = 30 * t**2 * (1 - t) ** 2 / (b - a)
    d2S = 60 * t * (1 - t) * (1 - 2 * t) / (b - a) ** 2
    return 1 - S, np.where(inside, -dS, 0.0), np.where(inside, -d2S, 0.0)


@dataclass
class UniqueContinuationReport:
    lambdas: list
    interior: float
    collar_J: float
    bound: list
    log_carl2_lhs: list
    log_carl2_rhs: list
    absorbed: list
    ratio: list
    bound_exponent: float
    ratio_exponent: float
    solution_residual: float


def _log_integral(logw, vals):
    """``log int e^logw vals`` for nonnegative ``vals``; ``-inf`` for a zero integral."""
    pos = vals > 0
    if not np.any(pos):
        return -np.inf
    m = np.max(logw[pos])
    return float(m + np.log(np.sum(np.exp(logw[pos] - m) * vals[pos])))


def unique_continuation_driver(spec, mode, reparam, phi, kappa=0.3, lambdas=DEFAULT_LAMBDAS, domain=None,
                               coeffs=None, omega_prime=1e-2, absorb_fraction=0.5, raise_on_failure=False):
    """Quantitative form of the absorption argument behind unique continuation.

    ``phi`` is the solution in the working picture. With the cutoff
    ``chi(f / omega')`` and ``phit = chi phi``, the commutator
    ``J = L phit - chi L phi`` lives in the collar
    ``(1 - kappa) omega' <= f < omega'``. For each lambda the report holds:

    * ``interior``: ``int_{f < (1-kappa) omega'} f^(p-2) phit^2`` (lambda independent),
    * ``bound``: ``lambda^-3 int_collar J^2``, the bound obtained after dropping the weight,
    * ``log_carl2_lhs`` and ``log_carl2_rhs``: logs of the weighted inequality before the weight is dropped,
    * ``absorbed``: whether the lower-order terms are at most ``absorb_fraction`` of the weighted left side,
    * ``ratio``: ``interior / bound``; it stays bounded only if the argument closes.

    Raises ``AbsorptionFailed`` when ``raise_on_failure`` and some lambda fails to absorb.
    """
    from .conformal import zero_coefficients

    n = spec.n
    if coeffs is None:
        coeffs = zero_coefficients(n)
    lambdas = sorted(float(t) for t in lambdas)
    if domain is None:
        domain = QuadratureDomain((omega_prime / 100.0, omega_prime), (-2.0, 2.0), cells=(24, 6, 6),
                                  f_spacing="log", require_collar=False)
    omega_prime = domain.f_range[1]
    x_all, wt_all = domain.nodes(mode, n)
    metric = eval_metric(spec, x_all, pole_margin=0.0)
    vol = wt_all * np.sqrt(np.abs(metric.det))
    fj = foliation_field(mode, n).jet(x_all)
    pj = _jet(phi, x_all)
    chi, c1, c2 = smooth_cutoff(fj.value / omega_prime, kappa)
    dchi = c1 / omega_prime * fj.d1
    d2chi = (c2 / omega_prime**2) * np.einsum("i...,j...->ij...", fj.d1, fj.d1) + (c1 / omega_prime) * fj.d2
    tj = Jet2(
        chi * pj.value,
        chi * pj.d1 + pj.value * dchi,
        chi * pj.d2 + np.einsum("i...,j...->ij...", dchi, pj.d1) + np.einsum("i...,j...->ij...", pj.d1, dchi)
        + pj.value * d2chi,
    )
    a = coeffs.a(x_all)
    V = coeffs.V(x_all)

    def L(jet):
        hess = hessian_scalar(spec, jet, x_all, metric)
        return np.einsum("ij...,ij...->...", metric.g_inv, hess) + np.einsum("a...,a...->...", a, jet.d1) + V * jet.value

    Lphi = L(pj)
    J = L(tj) - chi * Lphi
    lower = np.einsum("a...,a...->...", a, tj.d1) ** 2 + (V * tj.value) ** 2
    f = fj.value
    p = reparam.p if isinstance(reparam, F1) else None
    zero_w = f ** (p - 2) if p is not None else f ** (-3 * reparam.q - 2)
    inner = f < (1 - kappa) * omega_prime
    collar = ~inner
    interior = float(np.sum(vol[inner] * zero_w[inner] * tj.value[inner] ** 2))
    collar_J = float(np.sum(vol[collar] * J[collar] ** 2))
    solution_residual = float(np.max(np.abs(Lphi)))

    frame = adapted_frame(spec, mode, x_all, metric)
    Ed = np.einsum("ai...,i...->a...", frame.vectors, tj.d1)
    Psi = _psi_weight(mode, x_all)
    grad_sq = Psi * np.sum(Ed[:-1] ** 2, axis=0) / (f if p is not None else f ** (reparam.q + 1))

    bound, lhs_l, rhs_l, absorbed, ratio = [], [], [], [], []
    for lam in lambdas:
        lw = log_weight(reparam, lam, f) + np.log(vol)
        carl1 = np.logaddexp(
            _log_integral(lw, lam * grad_sq),
            _log_integral(lw, lam**3 * zero_w * tj.value**2),
        )
        low = _log_integral(lw, lower)
        ok = low == -np.inf or low <= carl1 + np.log(absorb_fraction)
        absorbed.append(bool(ok))
        lhs_l.append(_log_integral(lw[inner], lam**3 * zero_w[inner] * tj.value[inner] ** 2))
        rhs_l.append(_log_integral(lw[collar], J[collar] ** 2))
        b = collar_J / lam**3
        bound.append(b)
        ratio.append(interior / b if b > 0 else (0.0 if interior == 0 else np.inf))
    if raise_on_failure and not all(absorbed):
        bad = [lam for lam, ok in zip(lambdas, absorbed) if not ok]
        raise AbsorptionFailed(f"lower-order terms not absorbed at lambda = {bad}")
    b_exp = fit_lambda_exponent(lambdas, bound) if all(b > 0 for b in bound) else float("nan")
    r_exp = fit_lambda_exponent(lambdas, ratio) if all(0 < r < np.inf for r in ratio) else float("nan")
    return UniqueContinuationReport(lambdas, interior, collar_J, bound, lhs_l, rhs_l, absorbed, ratio,
                                    b_exp, r_exp, solution_residual)


__all__ = [
    "ConjugationState",
    "CarlemanReport",
    "CarlemanSweep",
    "QuadratureDomain",
    "conjugation_state",
    "conjugated_operator",
    "conjugated_operator_direct",
    "conjugate_field",
    "algebraic_identity_residual",
    "identity_convergence",
    "algebraic_inequality_gap",
    "lambda_e_bounds",
    "integral_carleman_check",
    "default_bump",
    "vanishing_order_fit",
    "unique_continuation_driver",
]
