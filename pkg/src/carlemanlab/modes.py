"""Asymptotic modes: which foliation function ``f`` a background carries.

The zero-mass mode uses shifted null coordinates ``ut = -u + eps`` and
``vt = v + eps``. The positive-mass mode uses ``ut = -u`` and ``vt = v`` on the
region ``u < 0 < v``. In both cases ``f = 1 / (ut * vt)``.
"""

from dataclasses import dataclass

import numpy as np
import sympy as sp

from ._symbolic import coordinate_symbols, param_symbol
from .errors import ConfigError, DomainViolation


@dataclass(frozen=True)
class ZeroMass:
    """Zero-mass mode with shift ``eps > 0``."""

    eps: float = 1.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")

    kind = "zero-mass"

    @property
    def params(self):
        return {"eps": float(self.eps)}


@dataclass(frozen=True)
class PositiveMass:
    """Positive-mass mode with lower mass bound ``m_min > 0``.

    ``r0`` is the reference area radius at which the tortoise coordinate
    vanishes. It is informational here; the background carries its own value.
    """

    m_min: float = 1.0
    r0: float | None = None

    def __post_init__(self):
        if not self.m_min > 0:
            raise ConfigError(f"m_min must be positive, got {self.m_min}")

    kind = "positive-mass"

    @property
    def params(self):
        return {}


def tilde_exprs(mode, n):
    """Sympy expressions for ``(ut, vt)``."""
    u, v = coordinate_symbols(n)[:2]
    if isinstance(mode, ZeroMass):
        eps = param_symbol("eps")
        return -u + eps, v + eps
    if isinstance(mode, PositiveMass):
        return -u, v
    raise ConfigError(f"unknown mode {mode!r}")


def f_expr(mode, n):
    ut, vt = tilde_exprs(mode, n)
    return 1 / (ut * vt)


def tilde_uv(mode, x):
    """Numeric ``(ut, vt)`` from a coordinate array."""
    x = np.asarray(x, dtype=float)
    u, v = x[0], x[1]
    if isinstance(mode, ZeroMass):
        return mode.eps - u, v + mode.eps
    if isinstance(mode, PositiveMass):
        return -u, v
    raise ConfigError(f"unknown mode {mode!r}")


def in_mode_domain(mode, x):
    ut, vt = tilde_uv(mode, x)
    return (ut > 0) & (vt > 0)


def check_mode_domain(mode, x):
    ok = in_mode_domain(mode, x)
    if not np.all(ok):
        raise DomainViolation(
            f"{int(np.size(ok) - np.count_nonzero(ok))} point(s) outside the {mode.kind} foliation domain"
        )


def psi_expr(mode, n):
    """Sympy expression for the smallness weight ``Psi``."""
    u, v = coordinate_symbols(n)[:2]
    rs = v - u
    if isinstance(mode, ZeroMass):
        return param_symbol("eps") / rs
    return param_symbol("m_min") * sp.log(rs) / rs


def mode_param_values(mode):
    if isinstance(mode, ZeroMass):
        return {"eps": float(mode.eps)}
    return {"m_min": float(mode.m_min)}


def uv_from_f_sigma(mode, f, sigma):
    """Null coordinates ``(u, v)`` with given ``f`` and ``sigma = u + v``.

    Since ``vt - ut = sigma`` and ``ut vt = 1 / f`` in both modes,
    ``vt = (sigma + D) / 2`` and ``ut = (D - sigma) / 2`` with
    ``D = sqrt(sigma^2 + 4 / f)``.
    """
    f = np.asarray(f, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    D = np.sqrt(sigma**2 + 4.0 / f)
    vt = (sigma + D) / 2.0
    ut = (D - sigma) / 2.0
    if isinstance(mode, ZeroMass):
        return mode.eps - ut, vt - mode.eps
    return -ut, vt


def f_sigma_grid(mode, n, f_values, sigma_values, angle_values):
    """Tensor-product grid in ``(f, sigma, angles)`` as a flat coordinate array ``(N, M)``.

    ``angle_values`` is a sequence of ``n - 1`` one-dimensional arrays.
    """
    mesh = np.meshgrid(np.asarray(f_values, float), np.asarray(sigma_values, float),
                       *[np.asarray(a, float) for a in angle_values], indexing="ij")
    u, v = uv_from_f_sigma(mode, mesh[0], mesh[1])
    return np.stack([u, v, *mesh[2:]]).reshape(n + 1, -1)
