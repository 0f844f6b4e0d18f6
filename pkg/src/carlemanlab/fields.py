"""Scalar test functions with closed-form jets.

A ``ScalarField`` wraps a sympy expression in the coordinates ``(u, v, y)``
and named parameters. Value, gradient and coordinate Hessian are compiled
once per expression. An optional support mask zeroes the field outside a
region, which is how compactly supported bumps are represented: the
expression is the polynomial piece and the mask cuts it off.
"""

from functools import lru_cache

import numpy as np
import sympy as sp

from ._symbolic import compile_exprs, coordinate_symbols, param_symbol, symmetric_pairs
from .jets import Jet2, fd_jet
from .modes import f_expr, mode_param_values, psi_expr, tilde_exprs


@lru_cache(maxsize=256)
def _compile_field(expr, n, param_names):
    X = coordinate_symbols(n)
    syms = list(X) + [param_symbol(p) for p in param_names]
    N = len(X)
    grad = [sp.diff(expr, c) for c in X]
    pairs = symmetric_pairs(N)
    hess = [sp.diff(grad[i], X[j]) for i, j in pairs]
    return compile_exprs([expr], syms), compile_exprs(grad, syms), compile_exprs(hess, syms), pairs


class ScalarField:
    """Closed-form scalar field on an ``(n+1)``-dimensional chart."""

    def __init__(self, expr, n, params=None, support=None, name="field"):
        self.expr = sp.sympify(expr)
        self.n = int(n)
        self.params = {k: float(v) for k, v in (params or {}).items()}
        self.support = support
        self.name = name
        free = {s.name for s in self.expr.free_symbols}
        coords = {s.name for s in coordinate_symbols(self.n)}
        missing = free - coords - set(self.params)
        if missing:
            raise ValueError(f"field {name!r} has unbound symbols {sorted(missing)}")

    def _names(self):
        return tuple(sorted(self.params))

    def _args(self, x):
        x = np.asarray(x, dtype=float)
        return list(x) + [self.params[p] for p in self._names()]

    def _mask(self, x):
        if self.support is None:
            return None
        return np.asarray(self.support(np.asarray(x, dtype=float)), dtype=float)

    def value(self, x):
        val, _, _, _ = _compile_field(self.expr, self.n, self._names())
        out = np.array(val(*self._args(x))[0])
        mask = self._mask(x)
        return out if mask is None else np.where(mask > 0, out, 0.0)

    __call__ = value

    def jet(self, x):
        val, grad, hess, pairs = _compile_field(self.expr, self.n, self._names())
        args = self._args(x)
        N = self.n + 1
        v0 = np.array(val(*args)[0])
        d1 = np.array(grad(*args))
        hv = hess(*args)
        d2 = np.zeros((N, N) + v0.shape)
        for (i, j), h in zip(pairs, hv):
            d2[i, j] = h
            d2[j, i] = h
        mask = self._mask(x)
        if mask is not None:
            keep = mask > 0
            v0 = np.where(keep, v0, 0.0)
            d1 = np.where(keep, d1, 0.0)
            d2 = np.where(keep, d2, 0.0)
        return Jet2(v0, d1, d2, "closed-form")

    def transformed(self, build, params=None, name=None):
        """New field with expression ``build(self.expr)`` and merged parameters."""
        merged = dict(self.params)
        merged.update(params or {})
        return ScalarField(build(self.expr), self.n, merged, self.support, name or self.name)


class NumericField:
    """Scalar field given only as a numeric callable; jets come from finite differences."""

    def __init__(self, func, n, step=1e-3, valid=None, name="numeric"):
        self.func = func
        self.n = int(n)
        self.step = step
        self.valid = valid
        self.name = name

    def value(self, x):
        return self.func(np.asarray(x, dtype=float))

    __call__ = value

    def jet(self, x):
        return fd_jet(self.func, x, step=self.step, valid=self.valid)


def polynomial_bump(s, a, b, power=3):
    """Piece ``(4 (s-a)(b-s) / (b-a)^2)^power`` of a C^(power-1) bump on ``(a, b)``."""
    return (4 * (s - a) * (b - s) / (b - a) ** 2) ** power


def foliation_field(mode, n):
    """The foliation function ``f = 1 / (ut vt)`` as a field."""
    return ScalarField(f_expr(mode, n), n, mode_param_values(mode) if mode.kind == "zero-mass" else {}, name="f")


def psi_field(mode, n):
    """Smallness weight ``Psi`` (``eps / r*`` or ``m_min log(r*) / r*``)."""
    return ScalarField(psi_expr(mode, n), n, mode_param_values(mode), name="Psi")


def weight_field(mode, n):
    """Current weight ``w = -Psi / 2`` in closed form."""
    return ScalarField(-psi_expr(mode, n) / 2, n, mode_param_values(mode), name="w")


def constant_field(c, n):
    return ScalarField(sp.Float(c), n, name="constant")


def carleman_bump(mode, n, f_range, sigma_range, amp=0.3, power=3):
    """Bump in ``(f, sigma)`` with ``sigma = u + v``, modulated by the first angle.

    ``psi = B(f) B(sigma) (1 + amp cos(y1))`` where ``B`` is the polynomial
    bump. Support is the product of the two open intervals.
    """
    X = coordinate_symbols(n)
    u, v = X[:2]
    f1, f2 = (float(t) for t in f_range)
    s1, s2 = (float(t) for t in sigma_range)
    fe = f_expr(mode, n)
    expr = polynomial_bump(fe, f1, f2, power) * polynomial_bump(u + v, s1, s2, power) * (1 + amp * sp.cos(X[2]))
    params = mode_param_values(mode) if mode.kind == "zero-mass" else {}

    def support(x):
        from .modes import tilde_uv

        ut, vt = tilde_uv(mode, x)
        with np.errstate(all="ignore"):
            fv = 1.0 / (ut * vt)
        sig = x[0] + x[1]
        return (ut > 0) & (vt > 0) & (fv > f1) & (fv < f2) & (sig > s1) & (sig < s2)

    field = ScalarField(expr, n, params, support, name="carleman_bump")
    field.f_range = (f1, f2)
    field.sigma_range = (s1, s2)
    return field


def uv_bump(n, r_range, t_range, amp=0.3, power=3):
    """Bump in ``(r* = v - u, t = u + v)`` modulated by the first angle."""
    X = coordinate_symbols(n)
    u, v = X[:2]
    r1, r2 = (float(t) for t in r_range)
    t1, t2 = (float(t) for t in t_range)
    expr = polynomial_bump(v - u, r1, r2, power) * polynomial_bump(u + v, t1, t2, power) * (1 + amp * sp.cos(X[2]))

    def support(x):
        rs, tt = x[1] - x[0], x[0] + x[1]
        return (rs > r1) & (rs < r2) & (tt > t1) & (tt < t2)

    return ScalarField(expr, n, {}, support, name="uv_bump")


def harmonic_field(order, n=3):
    """Exterior harmonic ``phi_N``: the ``N``-th axial derivative of the fundamental solution.

    For ``n >= 3`` this is ``d^N/dz^N r^(2-n)``; for ``n = 2`` it is
    ``d^N/dz^N log r``. The axis is the pole of the first angular coordinate.
    It decays like ``r^(2-n-N)`` and solves the flat wave equation.
    """
    Z, R = sp.symbols("Z R", positive=True)
    expr = sp.log(R) if n == 2 else R ** (2 - n)
    for _ in range(order):
        expr = sp.diff(expr, Z) + (Z / R) * sp.diff(expr, R)
    X = coordinate_symbols(n)
    u, v = X[:2]
    c = sp.cos(X[2])
    expr = sp.expand(expr).subs(Z, R * c).subs(R, v - u)
    return ScalarField(expr, n, name=f"phi_{order}")


def random_bumps(rng, mode, n, count, f_box, sigma_box, amp_max=0.5):
    """Reproducible family of random Carleman bumps inside a box."""
    out = []
    flo, fhi = f_box
    slo, shi = sigma_box
    for _ in range(count):
        a, b = np.sort(rng.uniform(np.log(flo), np.log(fhi), size=2))
        if b - a < 0.2:
            b = a + 0.2
        s = np.sort(rng.uniform(slo, shi, size=2))
        if s[1] - s[0] < 0.5:
            s[1] = s[0] + 0.5
        amp = float(rng.uniform(-amp_max, amp_max))
        out.append(carleman_bump(mode, n, (np.exp(a), np.exp(b)), tuple(s), amp=amp))
    return out


def random_power_field(rng, mode, n):
    """Reproducible smooth field ``(1 + a cos(y1 + c)) ut^(-alpha) vt^(-beta)`` without support cutoff."""
    X = coordinate_symbols(n)
    ut, vt = tilde_exprs(mode, n)
    alpha, beta = (float(t) for t in rng.uniform(0.5, 2.0, size=2))
    amp, phase = float(rng.uniform(-0.5, 0.5)), float(rng.uniform(0, 2 * np.pi))
    expr = (1 + amp * sp.cos(X[2] + phase)) * ut ** (-alpha) * vt ** (-beta)
    params = mode_param_values(mode) if mode.kind == "zero-mass" else {}
    return ScalarField(expr, n, params, name="random_power")


def tilde_fields(mode, n):
    ut, vt = tilde_exprs(mode, n)
    params = mode_param_values(mode) if mode.kind == "zero-mass" else {}
    return ScalarField(ut, n, params, name="ut"), ScalarField(vt, n, params, name="vt")
