"""Pseudoconvex foliations, reparametrizations, adapted frames and positivity.

The foliation function is ``f = 1 / (ut vt)``. Its level sets are timelike
hyperboloids that shrink toward null infinity. A reparametrization ``F(f)``
(logarithmic ``F1`` or power ``F2``) sets the Carleman weight, and the
pseudoconvexity tensor ``pi = h g - Hess f`` restricted to a level set decides
whether the estimate can hold.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FOutOfRange, GapViolated, NullLevelSet
from .fields import foliation_field
from .geometry import as_coords, box_scalar, eval_metric, hessian_scalar
from .modes import PositiveMass, ZeroMass, check_mode_domain, tilde_uv, uv_from_f_sigma
from ._symbolic import round_sphere_numeric


@dataclass(frozen=True)
class F1:
    """Logarithmic reparametrization ``F = log f - f^p``."""

    p: float = 0.1

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ConfigError(f"p must lie in (0, 1), got {self.p}")


@dataclass(frozen=True)
class F2:
    """Power reparametrization ``F = -f^(-q)``."""

    q: float = 2.0 / 3.0

    def __post_init__(self):
        if not self.q > 0:
            raise ConfigError(f"q must be positive, got {self.q}")


@dataclass
class FoliationContext:
    f: np.ndarray
    grad_f: np.ndarray
    mode: object
    reparam: object
    F: np.ndarray
    Fprime: np.ndarray
    Fsecond: np.ndarray
    G: np.ndarray
    w: np.ndarray
    h: np.ndarray
    Psi: np.ndarray


@dataclass
class AdaptedFrame:
    """Orthonormal frame ``(T, E_1, ..., E_{n-1}, N)`` adapted to the level sets of ``f``.

    ``vectors[a]`` holds the coordinate components of the a-th frame vector,
    so the array has shape ``(n+1, n+1, *batch)``. ``pre_gram_residual`` is the
    orthonormality defect of the seed frame before Gram-Schmidt.
    """

    vectors: np.ndarray
    tangency_residual: float
    gram_residual: float
    pre_gram_residual: float
    normal_derivative: np.ndarray

    @property
    def T(self):
        return self.vectors[0]

    @property
    def N(self):
        return self.vectors[-1]

    @property
    def E(self):
        return self.vectors[1:-1]


@dataclass
class PseudoconvexityResult:
    pi: np.ndarray
    min_tangential_eigenvalue: np.ndarray
    h: np.ndarray
    frame: AdaptedFrame


# -- scalar building blocks -------------------------------------------------------------


def eval_f(mode, pt):
    """Foliation value and its coordinate gradient.

    ``d_u f = f / ut`` and ``d_v f = -f / vt``; angular partials vanish.
    """
    x = as_coords(pt)
    check_mode_domain(mode, x)
    ut, vt = tilde_uv(mode, x)
    f = 1.0 / (ut * vt)
    grad = np.zeros_like(x)
    grad[0] = f / ut
    grad[1] = -f / vt
    return f, grad


def reparam_eval(reparam, f):
    """``(F, F', F'', G)`` with ``G = -(f F')'``."""
    f = np.asarray(f, dtype=float)
    if not np.all((f > 0) & (f < 1)):
        raise FOutOfRange("reparametrizations need 0 < f < 1")
    if isinstance(reparam, F1):
        p = reparam.p
        F = np.log(f) - f**p
        Fp = 1.0 / f - p * f ** (p - 1)
        Fpp = -1.0 / f**2 - p * (p - 1) * f ** (p - 2)
        G = p**2 * f ** (p - 1)
    elif isinstance(reparam, F2):
        q = reparam.q
        F = -(f ** (-q))
        Fp = q * f ** (-q - 1)
        Fpp = -q * (q + 1) * f ** (-q - 2)
        G = q**2 * f ** (-q - 1)
    else:
        raise ConfigError(f"unknown reparametrization {reparam!r}")
    return F, Fp, Fpp, G


def psi_weight(mode, pt):
    """Smallness weight ``Psi``: ``eps / r*`` or ``m_min log(r*) / r*``."""
    x = as_coords(pt)
    rs = x[1] - x[0]
    if isinstance(mode, ZeroMass):
        return mode.eps / rs
    return mode.m_min * np.log(rs) / rs


def weight_w(mode, pt):
    """Current weight ``w = -Psi / 2``."""
    return -0.5 * psi_weight(mode, pt)


def h_of_w(w, box_f, n):
    """``h = w + Box f / 2 - (n - 1) / 4``."""
    return np.asarray(w) + 0.5 * np.asarray(box_f) - (n - 1) / 4.0


def w_of_h(h, box_f, n):
    """Inverse of ``h_of_w``."""
    return np.asarray(h) - 0.5 * np.asarray(box_f) + (n - 1) / 4.0


def model_h(spec, mode, pt):
    """Explicit ``h`` for the model backgrounds.

    Physical Minkowski: ``-f^2/2 - (eps/r) f^2/2``. Inverted Minkowski:
    ``1/2 - eps/(2r)``. Inverted Schwarzschild:
    ``1/2 - (r*/r - 1)/4 + (3/8)(2m/r)(r*/r)``.
    """
    x = as_coords(pt)
    if spec.family == "Minkowski" and isinstance(mode, ZeroMass):
        r = x[1] - x[0]
        if spec.picture == "physical":
            f, _ = eval_f(mode, x)
            return -0.5 * f**2 - 0.5 * (mode.eps / r) * f**2
        if spec.picture == "inverted":
            return 0.5 - 0.5 * mode.eps / r
    if spec.family == "Schwarzschild" and spec.picture == "inverted":
        r = spec.scalar("r", x)
        rs = x[1] - x[0]
        m = spec.param_dict["m"]
        return 0.5 - 0.25 * (rs / r - 1) + 0.375 * (2 * m / r) * (rs / r)
    raise ConfigError(f"no explicit h for {spec.family}/{spec.picture}")


def select_h(spec, mode, x, choice, metric=None):
    """``h`` by name: ``model``, ``psf`` (``w + Box f / 2 - (n-1)/4``) or ``shifted`` (``w + 1/2``)."""
    if not isinstance(choice, str):
        return np.asarray(choice, dtype=float)
    if choice == "model":
        return model_h(spec, mode, x)
    w = weight_w(mode, x)
    if choice == "shifted":
        return w + 0.5
    if choice == "psf":
        if metric is None:
            metric = eval_metric(spec, x)
        return h_of_w(w, box_scalar(spec, foliation_field(mode, spec.n), x, metric), spec.n)
    raise ConfigError(f"unknown h choice {choice!r}")


def foliation_context(spec, mode, reparam, pt, h="shifted"):
    x = as_coords(pt)
    f, grad = eval_f(mode, x)
    F, Fp, Fpp, G = reparam_eval(reparam, f)
    hv = select_h(spec, mode, x, h)
    return FoliationContext(f, grad, mode, reparam, F, Fp, Fpp, G, weight_w(mode, x), hv, psi_weight(mode, x))


# -- frames -----------------------------------------------------------------------------


def _inner(g, a, b):
    return np.einsum("ij...,i...,j...->...", g, a, b)


def _sphere_orthonormal(n, x):
    """Coordinate components of the orthonormal frame of the round sphere."""
    N = n + 1
    gam = round_sphere_numeric(n, x[2:])
    out = []
    for A in range(n - 1):
        e = np.zeros((N,) + x.shape[1:])
        e[2 + A] = 1.0 / np.sqrt(gam[A, A])
        out.append(e)
    return out


def seed_frame(spec, mode, x):
    """Seed frame before orthonormalization.

    ``T = c (ut d_u + vt d_v)`` and ``N = c (ut d_u - vt d_v)`` with
    ``c = sqrt(f) / (2 Omega sqrt(K))``; angular vectors are the unit-sphere
    frame divided by ``Omega r``. Here ``Omega`` is the conformal factor of the
    picture (1 for the physical metric). For the exact models this seed is
    already orthonormal.
    """
    N = spec.dim
    ut, vt = tilde_uv(mode, x)
    f = 1.0 / (ut * vt)
    omega = spec.scalar("Omega", x) if spec.picture != "physical" else 1.0
    # The background scalar K always refers to the physical metric.
    K = spec.scalar("K", x) if spec.family != "Custom" else 1.0
    c = np.sqrt(f) / (2.0 * omega * np.sqrt(np.abs(K)))
    T = np.zeros((N,) + x.shape[1:])
    Nv = np.zeros_like(T)
    T[0], T[1] = c * ut, c * vt
    Nv[0], Nv[1] = c * ut, -c * vt
    r = spec.scalar("r", x) if spec.family != "Custom" else x[1] - x[0]
    E = [e / (omega * r) for e in _sphere_orthonormal(spec.n, x)]
    return T, E, Nv


def gram_schmidt(g, vectors, signs):
    """Orthonormalize ``vectors`` in order with respect to ``g``; ``signs`` gives each norm's sign."""
    out = []
    for vec, sgn in zip(vectors, signs):
        w = np.array(vec, copy=True)
        for e, s in out:
            w = w - s * _inner(g, w, e) * e
        nrm = sgn * _inner(g, w, w)
        if np.any(nrm <= 0):
            raise NullLevelSet("Gram-Schmidt met a null or wrongly signed direction")
        out.append((w / np.sqrt(nrm), sgn))
    return [e for e, _ in out]


def adapted_frame(spec, mode, pt, metric=None):
    """Orthonormal frame adapted to ``f``: Gram-Schmidt on angular, then ``T``, then ``N``."""
    x = as_coords(pt)
    check_mode_domain(mode, x)
    if metric is None:
        metric = eval_metric(spec, x)
    g = metric.g
    _, df = eval_f(mode, x)
    grad_sq = np.einsum("ij...,i...,j...->...", metric.g_inv, df, df)
    if np.any(grad_sq <= 0):
        raise NullLevelSet("level sets of f are not timelike at some point")
    T, E, Nv = seed_frame(spec, mode, x)
    seed = [T, *E, Nv]
    eta = np.diag([-1.0] + [1.0] * (spec.n - 1) + [1.0])
    gram0 = np.einsum("ij...,ai...,bj...->ab...", g, np.array(seed), np.array(seed))
    pre = float(np.max(np.abs(gram0 - eta.reshape(eta.shape + (1,) * (gram0.ndim - 2)))))
    ortho = gram_schmidt(g, [*E, T, Nv], [1.0] * len(E) + [-1.0, 1.0])
    vectors = np.array([ortho[len(E)], *ortho[: len(E)], ortho[-1]])
    gram = np.einsum("ij...,ai...,bj...->ab...", g, vectors, vectors)
    post = float(np.max(np.abs(gram - eta.reshape(eta.shape + (1,) * (gram.ndim - 2)))))
    deriv = np.einsum("ai...,i...->a...", vectors, df)
    f = 1.0 / np.prod(tilde_uv(mode, x), axis=0)
    tang = float(np.max(np.abs(deriv[:-1]) / f)) if deriv.shape[0] > 1 else 0.0
    if np.any(deriv[-1] <= 0):
        raise NullLevelSet("normal derivative of f is not positive")
    return AdaptedFrame(vectors, tang, post, pre, deriv[-1])


def frame_components(tensor, frame):
    """Frame components ``T(E_a, E_b)`` of a covariant 2-tensor."""
    return np.einsum("ij...,ai...,bj...->ab...", tensor, frame.vectors, frame.vectors)


def pseudoconvexity_tensor(spec, mode, pt, h="shifted", metric=None):
    """``pi = h g - Hess f`` in the adapted frame and its tangential minimum eigenvalue."""
    x = as_coords(pt)
    if metric is None:
        metric = eval_metric(spec, x)
    frame = adapted_frame(spec, mode, x, metric)
    hv = select_h(spec, mode, x, h, metric)
    hess = hessian_scalar(spec, foliation_field(mode, spec.n), x, metric)
    pi_coord = hv * metric.g - hess
    pi = frame_components(pi_coord, frame)
    tang = pi[:-1, :-1]
    eig = np.linalg.eigvalsh(np.moveaxis(tang, (0, 1), (-2, -1)))
    return PseudoconvexityResult(pi, eig[..., 0], np.broadcast_to(hv, eig[..., 0].shape), frame)


def hessian_in_frame(spec, mode, pt, metric=None):
    x = as_coords(pt)
    if metric is None:
        metric = eval_metric(spec, x)
    frame = adapted_frame(spec, mode, x, metric)
    hess = hessian_scalar(spec, foliation_field(mode, spec.n), x, metric)
    return frame_components(hess, frame), frame


# -- closed forms -----------------------------------------------------------------------


def minkowski_pi_closed(mode, r, f, picture="physical"):
    """Tangential eigenvalue of ``pi`` on Minkowski: ``(eps/r) f^2 / 2`` or ``eps / (2r)``."""
    if picture == "physical":
        return 0.5 * (mode.eps / r) * f**2
    return 0.5 * mode.eps / r


def tortoise_constant(m, r0):
    """``c0 = r0 + 2m log(r0 - 2m)`` so that ``r* = r + 2m log(r - 2m) - c0``."""
    return r0 + 2 * m * np.log(r0 - 2 * m)


def schwarzschild_pi_closed(m, r, rstar, c0):
    """Displayed closed form of the tangential components of ``pi`` on inverted Schwarzschild.

    ``(1/4)(2m/r) log|r - 2m| - (3/8)(1/r)((2m/r) r* + (2/3) c0)`` for both the
    ``TT`` and angular components.
    """
    return 0.25 * (2 * m / r) * np.log(np.abs(r - 2 * m)) - 0.375 / r * ((2 * m / r) * rstar + 2.0 / 3.0 * c0)


def schwarzschild_angular_hessian_closed(m, r, rstar):
    """Angular frame component of ``Hess f`` on inverted Schwarzschild.

    ``1 - (1/2)(r*/r) + (3/4)(2m/r)(r*/r)``.
    """
    return 1 - 0.5 * (rstar / r) + 0.75 * (2 * m / r) * (rstar / r)


# -- sweeps -----------------------------------------------------------------------------


@dataclass
class GapReport:
    ratios: dict
    argmax: dict
    smallness: float | None
    passed: bool


def psi_gap_check(mode, reparam, pt, smallness=None, psi=None):
    """Maximum smallness ratios ``Psi/f^p`` (F1), ``F' Psi / G`` and ``Psi / (f G)`` on a grid.

    ``psi`` overrides the weight (for example zeros for a degenerate check).
    Raises ``GapViolated`` with the worst point when ``smallness`` is given and exceeded.
    """
    x = as_coords(pt)
    f, _ = eval_f(mode, x)
    _, Fp, _, G = reparam_eval(reparam, f)
    Psi = psi_weight(mode, x) if psi is None else np.broadcast_to(np.asarray(psi, float), f.shape)
    named = {"F'Psi/G": Fp * Psi / G, "Psi/(fG)": Psi / (f * G), "Psi": Psi}
    if isinstance(reparam, F1):
        named["Psi/f^p"] = Psi / f**reparam.p
    ratios, where = {}, {}
    for key, val in named.items():
        flat = np.ravel(val)
        i = int(np.argmax(flat))
        ratios[key] = float(flat[i])
        where[key] = [float(t) for t in x.reshape(x.shape[0], -1)[:, i]]
    passed = smallness is None or all(v <= smallness for k, v in ratios.items() if k != "Psi")
    if not passed:
        worst = max((k for k in ratios if k != "Psi"), key=lambda k: ratios[k])
        raise GapViolated(f"ratio {worst} = {ratios[worst]:.3e} exceeds {smallness:g} at {where[worst]}")
    return GapReport(ratios, where, smallness, passed)


def spatial_ray(mode, n, f_values, angles=None):
    """Points with ``sigma = 0`` (toward spatial infinity) at the given ``f`` values."""
    f_values = np.asarray(f_values, float)
    u, v = uv_from_f_sigma(mode, f_values, np.zeros_like(f_values))
    if angles is None:
        angles = [1.0] * (n - 2) + [0.5]
    ang = [np.full_like(f_values, a) for a in angles]
    return np.stack([u, v, *ang])


def positivity_threshold(spec, mode, h, f_values, angles=None):
    """Smallest sampled ``r*`` beyond which the tangential minimum eigenvalue stays positive.

    Returns ``(threshold, rstar, min_eig)``; threshold is ``inf`` if the last
    sample is not positive.
    """
    x = spatial_ray(mode, spec.n, f_values, angles)
    res = pseudoconvexity_tensor(spec, mode, x, h)
    rs = x[1] - x[0]
    order = np.argsort(rs)
    rs, eig = rs[order], res.min_tangential_eigenvalue[order]
    if eig[-1] <= 0:
        return np.inf, rs, eig
    bad = np.nonzero(eig <= 0)[0]
    threshold = rs[0] if bad.size == 0 else rs[bad[-1] + 1]
    return float(threshold), rs, eig


def mass_crossover(schwarzschild_spec, minkowski_spec, m_min, eps, f_values, angles=None):
    """Smallest sampled ``r*`` beyond which the Schwarzschild eigenvalue dominates Minkowski's.

    Both are evaluated with their explicit ``h`` on matched ``(f, sigma=0)`` rays.
    """
    pm, zm = PositiveMass(m_min), ZeroMass(eps)
    xs = spatial_ray(pm, 3, f_values, angles)
    xm = spatial_ray(zm, 3, f_values, angles)
    es = pseudoconvexity_tensor(schwarzschild_spec, pm, xs, "model").min_tangential_eigenvalue
    em = pseudoconvexity_tensor(minkowski_spec, zm, xm, "model").min_tangential_eigenvalue
    rs = xs[1] - xs[0]
    order = np.argsort(rs)
    rs, es, em = rs[order], es[order], em[order]
    worse = np.nonzero(es <= em)[0]
    if worse.size and worse[-1] == rs.size - 1:
        return np.inf, rs, es, em
    cross = rs[0] if worse.size == 0 else rs[worse[-1] + 1]
    return float(cross), rs, es, em


def normal_tangential_hessian_ratio(spec, mode, pt):
    """Constant ``C`` in ``|Hess f(N, E_i)| <= C Psi`` on a sample."""
    x = as_coords(pt)
    H, _ = hessian_in_frame(spec, mode, x)
    cross = np.max(np.abs(H[-1, :-1]), axis=0)
    return float(np.max(cross / psi_weight(mode, x)))


__all__ = [
    "F1",
    "F2",
    "ZeroMass",
    "PositiveMass",
    "FoliationContext",
    "AdaptedFrame",
    "eval_f",
    "reparam_eval",
    "weight_w",
    "h_of_w",
    "psi_weight",
    "model_h",
    "adapted_frame",
    "pseudoconvexity_tensor",
    "psi_gap_check",
]
