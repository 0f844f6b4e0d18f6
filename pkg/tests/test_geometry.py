import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carlemanlab.conformal import penrose_map, yamabe_residual
from carlemanlab.errors import ConfigError, DegenerateMetric, PointOutsideDomain, StepTooLarge
from carlemanlab.fields import constant_field, foliation_field, harmonic_field
from carlemanlab.foliation import psi_weight
from carlemanlab.geometry import (
    MetricSpec,
    Point,
    box_scalar,
    catalog,
    christoffel_closed,
    christoffel_fd_oracle,
    eval_metric,
    hessian_fd_oracle,
    hessian_scalar,
    relative_error,
    scalar_curvature,
)
from carlemanlab.jets import fd_gradient
from carlemanlab.modes import PositiveMass, ZeroMass, tilde_uv

from conftest import f_sigma_points

CATALOG = ["Minkowski", "PerturbedMinkowski", "Schwarzschild", "PositiveMassClass", "Kerr"]


def mode_for(family):
    return PositiveMass(1.0) if family in ("Schwarzschild", "PositiveMassClass", "Kerr") else ZeroMass(1.0)


def grid_for(family, n=3):
    return f_sigma_points(mode_for(family), n, np.geomspace(1e-3, 1e-1, 3), [-1.0, 0.5])


def schwarzschild_point(r, m=1.0, r0=3.0):
    rstar = r + 2 * m * np.log(r - 2 * m) - (r0 + 2 * m * np.log(r0 - 2 * m))
    return np.array([-rstar / 2, rstar / 2, 1.0, 0.3])


def test_minkowski_null_components():
    g = eval_metric(catalog("Minkowski"), Point(-1.0, 2.0, (1.0, 0.4))).g
    assert g[0, 1] == -2.0
    assert g[0, 0] == 0.0


def test_schwarzschild_guv_at_r4():
    g = eval_metric(catalog("Schwarzschild", m=1.0), schwarzschild_point(4.0)).g
    assert g[0, 1] == pytest.approx(-1.0, rel=1e-12)


@given(st.floats(-50, -1), st.floats(1, 50), st.floats(0.2, 2.9))
def test_kerr_a0_is_schwarzschild(u, v, theta):
    x = np.array([u, v, theta, 0.7])
    kerr = catalog("Kerr", m=1.0, a=0.0).metric(x)
    schw = catalog("Schwarzschild", m=1.0).metric(x)
    assert np.max(np.abs(kerr - schw)) <= 1e-12 * np.max(np.abs(schw))


def test_outside_domain_rejected():
    with pytest.raises(PointOutsideDomain):
        eval_metric(catalog("Schwarzschild"), np.array([1.0, 2.0, 1.0, 0.3]))
    with pytest.raises(PointOutsideDomain):
        eval_metric(catalog("Minkowski"), np.array([0.0, 1.0, 0.01, 0.3]))


def test_degenerate_custom_metric():
    spec = MetricSpec.create("Custom", custom=lambda x: np.zeros((4, 4) + x.shape[1:]))
    with pytest.raises(DegenerateMetric):
        eval_metric(spec, np.array([-1.0, 1.0, 1.0, 0.3]))


@pytest.mark.parametrize(
    "family, params",
    [("Kerr", {"a": -0.1}), ("Schwarzschild", {"r0": 1.5}), ("PerturbedMinkowski", {"delta": 0.7}), ("Minkowski", {"m": 1})],
)
def test_invalid_parameters(family, params):
    with pytest.raises(ConfigError):
        catalog(family, **params)


def test_super_extremal_kerr_allowed():
    spec = catalog("Kerr", m=1.0, a=2.0)
    assert np.all(np.isfinite(spec.metric(grid_for("Kerr"))))


def test_flat_cartesian_custom_has_zero_christoffels():
    spec = MetricSpec.create("Custom", custom=lambda x: np.broadcast_to(
        np.diag([-1.0, 1.0, 1.0, 1.0]).reshape(4, 4, *([1] * (x.ndim - 1))), (4, 4) + x.shape[1:]).copy())
    gam, _ = christoffel_fd_oracle(spec, np.array([[-1.0], [1.0], [1.0], [0.3]]))
    assert np.max(np.abs(gam)) <= 1e-9


def test_minkowski_angular_christoffel():
    x = grid_for("Minkowski")
    gam, _ = christoffel_fd_oracle(catalog("Minkowski"), x)
    r = x[1] - x[0]
    np.testing.assert_allclose(gam[0, 2, 2], 0.5 * r, rtol=1e-8)
    np.testing.assert_allclose(gam[0, 3, 3], 0.5 * r * np.sin(x[2]) ** 2, rtol=1e-8)


def test_schwarzschild_sharp_gamma_uuu_vanishes():
    # The decay bound holds trivially: the symbol is identically zero on the sharp metric.
    spec = catalog("Schwarzschild").with_picture("sharp")
    x = f_sigma_points(PositiveMass(1.0), 3, np.geomspace(1e-8, 1e-4, 5), [0.0])
    assert np.max(np.abs(christoffel_closed(spec, x)[0, 0, 0])) <= 1e-15
    gam, _ = christoffel_fd_oracle(spec, x)
    assert np.max(np.abs(gam[0, 0, 0])) <= 1e-10


@pytest.mark.parametrize("family", CATALOG)
@pytest.mark.parametrize("picture", ["physical", "inverted"])
def test_christoffel_oracle_agrees(family, picture):
    mode = mode_for(family)
    spec = catalog(family)
    if picture == "inverted":
        spec = spec.with_picture("inverted", mode=mode)
    x = grid_for(family)
    gam, err = christoffel_fd_oracle(spec, x, tol=1e-8)
    assert np.max(relative_error(gam, christoffel_closed(spec, x), 3)) <= 1e-6


def test_coarse_step_reported():
    spec = catalog("Schwarzschild")
    x = f_sigma_points(PositiveMass(1.0), 3, np.geomspace(1e-3, 1e-1, 4), [-1.0, 0.0, 1.0], polar=(0.12, 0.7, 1.9))
    with pytest.raises(StepTooLarge):
        christoffel_fd_oracle(spec, x, step=1e-2, tol=1e-8)


@pytest.mark.parametrize("family", CATALOG)
def test_metric_invariants(family):
    spec = catalog(family)
    x = grid_for(family)
    mv = eval_metric(spec, x)
    eye = np.einsum("ij...,jk...->ik...", mv.g, mv.g_inv)
    np.testing.assert_allclose(np.moveaxis(eye, -1, 0), np.broadcast_to(np.eye(4), (x.shape[1], 4, 4)), atol=1e-10)
    np.testing.assert_array_equal(mv.christoffel, np.swapaxes(mv.christoffel, 1, 2))
    # Metric compatibility with finite-difference metric derivatives.
    dg, _ = fd_gradient(spec.metric, x, step=1e-4)
    low = np.einsum("slm...,sn...->lmn...", mv.christoffel, mv.g)
    comp = dg - low - np.swapaxes(low, 1, 2)
    assert np.max(np.abs(comp)) <= 1e-6 * np.max(np.abs(dg))


def test_minkowski_hessian_uv():
    H = hessian_scalar(catalog("Minkowski"), foliation_field(ZeroMass(1.0), 3), np.array([-1.0, 1.0, 1.0, 0.3]))
    assert H[0, 1] == pytest.approx(-1.0 / 16.0, rel=1e-13)


@pytest.mark.parametrize("family", CATALOG)
def test_constant_field_hessian_zero(family):
    H = hessian_scalar(catalog(family), constant_field(2.5, 3), grid_for(family))
    assert np.all(H == 0)


def test_inverted_schwarzschild_hessian_in_UV():
    mode = PositiveMass(1.0)
    spec = catalog("Schwarzschild").with_picture("inverted", mode=mode)
    x = np.array([[-20.0, -200.0], [30.0, 500.0], [1.0, 1.2], [0.3, 0.3]])
    H = hessian_scalar(spec, foliation_field(mode, 3), x)
    ut, vt = tilde_uv(mode, x)
    # du = -ut^2 dU and dv = -vt^2 dV.
    np.testing.assert_allclose(ut**2 * vt**2 * H[0, 1], -1.0, rtol=1e-12)
    np.testing.assert_allclose(ut**4 * H[0, 0], 0.0, atol=1e-12)


@pytest.mark.parametrize("family", CATALOG)
def test_hessian_oracle_agrees(family):
    mode = mode_for(family)
    spec = catalog(family)
    x = grid_for(family)
    fld = foliation_field(mode, 3)
    H = hessian_scalar(spec, fld, x)
    Hfd = hessian_fd_oracle(spec, fld.value, x)
    assert np.max(relative_error(Hfd, H, 2)) <= 1e-6


def test_box_harmonic_vanishes():
    assert abs(box_scalar(catalog("Minkowski"), harmonic_field(0, 3), np.array([-2.5, 2.5, 1.0, 0.3]))) <= 1e-8


def test_sharp_schwarzschild_box_f():
    mode = PositiveMass(1.0)
    spec = catalog("Schwarzschild").with_picture("sharp")
    x = f_sigma_points(mode, 3, np.geomspace(1e-6, 1e-2, 6), [-1.0, 1.0])
    f = 1.0 / np.prod(tilde_uv(mode, x), axis=0)
    box = box_scalar(spec, foliation_field(mode, 3), x)
    ratio = np.abs(box) / f**2 / psi_weight(mode, x)
    # n = 3, so the leading term vanishes and the remainder is O(Psi f^2).
    assert np.max(ratio) <= 10.0


@pytest.mark.parametrize("n", [2, 3, 4])
def test_inverted_box_f(n):
    mode = ZeroMass(1.0)
    spec = catalog("Minkowski", n=n).with_picture("inverted", mode=mode)
    x = f_sigma_points(mode, n, np.geomspace(1e-6, 1e-2, 5), [0.0, 2.0])
    box = box_scalar(spec, foliation_field(mode, n), x)
    np.testing.assert_allclose(box, (n + 1) / 2 - (n - 1) * psi_weight(mode, x), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("family, tol", [("Minkowski", 1e-7), ("Schwarzschild", 1e-6)])
def test_scalar_curvature_vanishes(family, tol):
    assert np.max(np.abs(scalar_curvature(catalog(family), grid_for(family)))) <= tol


def test_penrose_yamabe_both_ways():
    cmap = penrose_map(3)
    x = np.array([[-0.5, -1.5], [0.8, 0.4], [1.0, 2.0], [0.3, 0.3]])
    diff, form1, form2 = yamabe_residual(cmap, x)
    assert np.max(np.abs(diff - form1)) <= 1e-5
    assert np.max(np.abs(diff - form2)) <= 1e-5
