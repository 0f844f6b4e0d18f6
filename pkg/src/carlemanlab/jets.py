"""Second-order jets and the finite-difference machinery used as oracles.

Arrays follow one convention throughout the package: tensor indices lead and
batch (sample point) axes trail. A coordinate array ``x`` has shape
``(N, *batch)`` with ``N = n + 1``.

Finite differences use fourth-order central stencils. Steps are scaled per
coordinate by ``max(1, |x_k|)``. One level of Richardson extrapolation is
applied by default, and the returned error estimate is the distance between
the extrapolated value and the finer raw stencil.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import StepTooLarge

# Fourth-order central first-derivative stencil: offsets and weights over 12h.
_D1 = ((-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0))
# Fourth-order central second-derivative stencil over 12h^2.
_D2 = ((-2, -1.0), (-1, 16.0), (0, -30.0), (1, 16.0), (2, -1.0))


@dataclass
class Jet2:
    """Value, gradient and Hessian (coordinate partials) of a scalar field.

    ``d1`` has shape ``(N, *batch)`` and ``d2`` has shape ``(N, N, *batch)``.
    ``source`` is ``"closed-form"`` or ``"finite-difference"``; ``error``
    holds the finite-difference error estimate when available.
    """

    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    source: str = "closed-form"
    error: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in ("closed-form", "finite-difference"):
            raise ValueError(f"unknown jet source {self.source!r}")


def scaled_steps(x, step):
    """Per-coordinate steps ``step * max(1, |x_k|)``, same shape as ``x``."""
    x = np.asarray(x, dtype=float)
    return step * np.maximum(1.0, np.abs(x))


def _shift(x, k, amount):
    y = np.array(x, dtype=float, copy=True)
    y[k] = y[k] + amount
    return y


def _shift2(x, i, ai, j, aj):
    y = np.array(x, dtype=float, copy=True)
    y[i] = y[i] + ai
    y[j] = y[j] + aj
    return y


def _guarded(func, valid):
    """Wrap ``func`` so that shifted points outside ``valid`` raise StepTooLarge."""
    if valid is None:
        return func

    def wrapped(y):
        ok = np.asarray(valid(y), dtype=bool)
        if not np.all(ok):
            raise StepTooLarge(
                f"finite-difference stencil leaves the domain at {int(np.sum(~ok))} sample(s)"
            )
        return func(y)

    return wrapped


def _d1_raw(func, x, k, h):
    acc = 0.0
    for off, wgt in _D1:
        acc = acc + wgt * func(_shift(x, k, off * h))
    return acc / (12.0 * h)


def _d2_pure_raw(func, x, k, h, f0):
    acc = 0.0
    for off, wgt in _D2:
        val = f0 if off == 0 else func(_shift(x, k, off * h))
        acc = acc + wgt * val
    return acc / (12.0 * h * h)


def _d2_mixed_raw(func, x, i, j, hi, hj):
    acc = 0.0
    for oi, wi in _D1:
        for oj, wj in _D1:
            acc = acc + wi * wj * func(_shift2(x, i, oi * hi, j, oj * hj))
    return acc / (144.0 * hi * hj)


def _combine(coarse, fine, richardson):
    if not richardson:
        return fine, np.abs(fine - coarse)
    extrap = (16.0 * fine - coarse) / 15.0
    return extrap, np.abs(extrap - fine)


def fd_gradient(func, x, step=1e-4, richardson=True, valid=None, axes=None):
    """Partial derivatives of ``func`` at ``x``.

    ``func`` maps a coordinate array ``(N, *batch)`` to ``(*comp, *batch)``.
    Returns ``(d, err)`` with ``d[k] = d func / d x^k``; both have shape
    ``(len(axes), *comp, *batch)``. With ``richardson=False`` a single
    fourth-order stencil at ``step`` is used and ``err`` compares it with the
    stencil at twice the step.
    """
    x = np.asarray(x, dtype=float)
    func = _guarded(func, valid)
    hs = scaled_steps(x, step)
    axes = range(x.shape[0]) if axes is None else axes
    ds, errs = [], []
    for k in axes:
        h = hs[k]
        if richardson:
            coarse = _d1_raw(func, x, k, h)
            fine = _d1_raw(func, x, k, h / 2.0)
        else:
            coarse = _d1_raw(func, x, k, 2.0 * h)
            fine = _d1_raw(func, x, k, h)
        d, e = _combine(coarse, fine, richardson)
        ds.append(d)
        errs.append(e)
    return np.stack(ds), np.stack(errs)


def fd_hessian(func, x, step=1e-3, richardson=True, valid=None, f0=None):
    """Second coordinate partials of a scalar ``func`` at ``x``.

    Returns ``(d2, err)`` of shape ``(N, N, *batch)``.
    """
    x = np.asarray(x, dtype=float)
    func = _guarded(func, valid)
    hs = scaled_steps(x, step)
    N = x.shape[0]
    if f0 is None:
        f0 = func(x)
    d2 = [[None] * N for _ in range(N)]
    er = [[None] * N for _ in range(N)]
    for i in range(N):
        for j in range(i, N):
            if i == j:
                coarse = _d2_pure_raw(func, x, i, hs[i], f0)
                fine = _d2_pure_raw(func, x, i, hs[i] / 2.0, f0)
            else:
                coarse = _d2_mixed_raw(func, x, i, j, hs[i], hs[j])
                fine = _d2_mixed_raw(func, x, i, j, hs[i] / 2.0, hs[j] / 2.0)
            d, e = _combine(coarse, fine, richardson)
            d2[i][j] = d2[j][i] = d
            er[i][j] = er[j][i] = e
    return np.array(d2), np.array(er)


def fd_jet(func, x, step=1e-3, richardson=True, valid=None):
    """Finite-difference ``Jet2`` of a scalar function."""
    x = np.asarray(x, dtype=float)
    f0 = func(x)
    d1, e1 = fd_gradient(func, x, step=step, richardson=richardson, valid=valid)
    d2, e2 = fd_hessian(func, x, step=step, richardson=richardson, valid=valid, f0=f0)
    return Jet2(np.asarray(f0, dtype=float), d1, d2, "finite-difference", {"d1": e1, "d2": e2})


def convergence_order(steps, errors):
    """Least-squares slope of ``log(error)`` against ``log(step)``."""
    steps = np.asarray(steps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    slope, _ = np.polyfit(np.log(steps), np.log(errors), 1)
    return float(slope)
