"""Symbolic helpers: coordinate symbols, the Wright omega function, compilation.

Closed-form metrics and test functions are written as sympy expressions once
and compiled to vectorized numpy callables with common-subexpression
elimination. Derivatives are taken symbolically, so every "closed-form" jet in
the package is exact up to floating-point evaluation.
"""

from functools import lru_cache

import numpy as np
import scipy.special as ss
import sympy as sp


class WrightOmega(sp.Function):
    """Wright omega function: the solution ``w`` of ``w + log(w) = z``.

    It inverts the tortoise relation ``r* = r + 2m log(r - 2m)`` in closed
    form, ``r = 2m (1 + omega(z))``.
    """

    def fdiff(self, argindex=1):
        w = self.func(*self.args)
        return w / (1 + w)


def _wrightomega_real(z):
    return np.real(ss.wrightomega(np.asarray(z, dtype=float)))


_MODULES = [{"WrightOmega": _wrightomega_real}, "numpy"]


def sphere_coordinate_names(n):
    """Names of the ``n - 1`` angular coordinates for spatial dimension ``n``."""
    if n == 2:
        return ("phi",)
    if n == 3:
        return ("theta", "phi")
    if n == 4:
        return ("theta1", "theta2", "phi")
    raise ValueError(f"unsupported dimension n={n}")


def coordinate_names(n):
    return ("u", "v") + sphere_coordinate_names(n)


def polar_axes(n):
    """Indices (in the full coordinate tuple) of polar angles living in (0, pi)."""
    return tuple(i + 2 for i, name in enumerate(sphere_coordinate_names(n)) if name.startswith("theta"))


def azimuth_axis(n):
    return n


@lru_cache(maxsize=None)
def coordinate_symbols(n):
    return tuple(sp.Symbol(name, real=True) for name in coordinate_names(n))


@lru_cache(maxsize=None)
def param_symbol(name):
    return sp.Symbol(name, real=True)


@lru_cache(maxsize=None)
def round_sphere(n):
    """Round metric on the unit ``(n-1)``-sphere as a sympy Matrix."""
    ang = coordinate_symbols(n)[2:]
    k = len(ang)
    gam = sp.zeros(k, k)
    scale = sp.Integer(1)
    for i, a in enumerate(ang):
        gam[i, i] = scale
        scale = scale * sp.sin(a) ** 2
    return gam


def round_sphere_numeric(n, ang):
    """Round sphere metric evaluated on angle arrays; shape ``(n-1, n-1, *batch)``."""
    k = n - 1
    shape = np.shape(ang[0])
    gam = np.zeros((k, k) + shape)
    scale = np.ones(shape)
    for i in range(k):
        gam[i, i] = scale
        scale = scale * np.sin(ang[i]) ** 2
    return gam


def compile_exprs(exprs, symbols):
    """Compile a list of expressions into a callable returning a list of arrays.

    The returned callable broadcasts every output to the common shape of its
    inputs, so constant entries come back as full arrays.
    """
    exprs = list(exprs)
    fn = sp.lambdify(list(symbols), exprs, modules=_MODULES, cse=True)

    def evaluate(*args):
        args = [np.asarray(a, dtype=float) for a in args]
        shape = np.broadcast_shapes(*[a.shape for a in args]) if args else ()
        with np.errstate(all="ignore"):
            out = fn(*args)
        return [np.broadcast_to(np.asarray(o, dtype=float), shape) for o in out]

    return evaluate


def symmetric_pairs(dim):
    return [(i, j) for i in range(dim) for j in range(i, dim)]
