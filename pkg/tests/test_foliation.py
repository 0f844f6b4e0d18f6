import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carlemanlab.errors import ConfigError, DomainViolation, FOutOfRange, GapViolated
from carlemanlab.foliation import (
    F1,
    F2,
    adapted_frame,
    eval_f,
    h_of_w,
    mass_crossover,
    minkowski_pi_closed,
    normal_tangential_hessian_ratio,
    positivity_threshold,
    pseudoconvexity_tensor,
    psi_gap_check,
    psi_weight,
    reparam_eval,
    schwarzschild_pi_closed,
    tortoise_constant,
    w_of_h,
    weight_w,
)
from carlemanlab.geometry import catalog
from carlemanlab.modes import PositiveMass, ZeroMass, tilde_uv, uv_from_f_sigma

from conftest import f_sigma_points

F_GRID = np.geomspace(1e-4, 1e-1, 4)


def test_eval_f_example():
    f, grad = eval_f(ZeroMass(1.0), np.array([-1.0, 1.0, 1.0, 0.3]))
    assert f == 0.25
    np.testing.assert_allclose(grad, [0.125, -0.125, 0.0, 0.0])


def test_eval_f_rejects_mode_domain():
    with pytest.raises(DomainViolation):
        eval_f(PositiveMass(1.0), np.array([1.0, 2.0, 1.0, 0.3]))


@given(st.floats(1e-6, 0.5), st.floats(-5, 5))
def test_f_sigma_roundtrip(f, sigma):
    mode = ZeroMass(1.0)
    u, v = uv_from_f_sigma(mode, np.array([f]), np.array([sigma]))
    x = np.array([u, v, [1.0], [0.3]])
    assert eval_f(mode, x)[0][0] == pytest.approx(f, rel=1e-12)
    assert (u + v)[0] == pytest.approx(sigma, abs=1e-9 * max(1.0, abs(u[0])))


@pytest.mark.parametrize("reparam", [F1(0.1), F1(0.5), F2(2 / 3), F2(1.5)])
def test_reparam_derivatives(reparam):
    f = np.geomspace(1e-4, 0.5, 7)
    F, Fp, Fpp, G = reparam_eval(reparam, f)
    h = 1e-6 * f
    Fh = reparam_eval(reparam, f + h)
    Fm = reparam_eval(reparam, f - h)
    np.testing.assert_allclose(Fp, (Fh[0] - Fm[0]) / (2 * h), rtol=1e-7)
    np.testing.assert_allclose(Fpp, (Fh[1] - Fm[1]) / (2 * h), rtol=1e-7)
    # G = -(f F')'
    np.testing.assert_allclose(G, -(Fp + f * Fpp), rtol=1e-10)
    assert np.all(G > 0)


def test_reparam_domain():
    with pytest.raises(FOutOfRange):
        reparam_eval(F1(), np.array([1.0]))
    with pytest.raises(ConfigError):
        F1(1.5)
    with pytest.raises(ConfigError):
        F2(0.0)


@given(st.floats(-1, 1), st.floats(-3, 3), st.sampled_from([2, 3, 4]))
def test_h_w_inverse(w, box, n):
    assert w_of_h(h_of_w(w, box, n), box, n) == pytest.approx(w, abs=1e-12)


def test_weights():
    x = np.array([-3.0, 5.0, 1.0, 0.3])
    assert psi_weight(ZeroMass(2.0), x) == 0.25
    assert weight_w(ZeroMass(2.0), x) == -0.125
    assert psi_weight(PositiveMass(1.0), x) == pytest.approx(np.log(8) / 8)


@pytest.mark.parametrize(
    "family, mode, picture",
    [
        ("Minkowski", ZeroMass(1.0), "physical"),
        ("Minkowski", ZeroMass(1.0), "inverted"),
        ("PerturbedMinkowski", ZeroMass(1.0), "physical"),
        ("Schwarzschild", PositiveMass(1.0), "physical"),
        ("Schwarzschild", PositiveMass(1.0), "inverted"),
        ("Kerr", PositiveMass(1.0), "physical"),
    ],
)
def test_adapted_frame_orthonormal(family, mode, picture):
    spec = catalog(family)
    if picture == "inverted":
        spec = spec.with_picture("inverted", mode=mode)
    x = f_sigma_points(mode, 3, F_GRID, [-1.0, 1.0])
    frame = adapted_frame(spec, mode, x)
    assert frame.gram_residual <= 1e-10
    assert frame.tangency_residual <= 1e-10
    assert np.all(frame.normal_derivative > 0)


def test_seed_frame_exact_on_minkowski():
    mode = ZeroMass(1.0)
    x = f_sigma_points(mode, 3, F_GRID, [0.0])
    assert adapted_frame(catalog("Minkowski"), mode, x).pre_gram_residual <= 1e-12


def test_minkowski_physical_pi_closed():
    mode = ZeroMass(1.0)
    x = f_sigma_points(mode, 3, F_GRID, [-2.0, 0.0, 2.0])
    res = pseudoconvexity_tensor(catalog("Minkowski"), mode, x, "model")
    f, _ = eval_f(mode, x)
    expected = minkowski_pi_closed(mode, x[1] - x[0], f)
    tang = res.pi[:-1, :-1]
    for a in range(tang.shape[0]):
        np.testing.assert_allclose(tang[a, a] / f**2, expected / f**2, atol=1e-12)
        for b in range(a):
            assert np.max(np.abs(tang[a, b]) / f**2) <= 1e-12
    np.testing.assert_allclose(res.min_tangential_eigenvalue / f**2, expected / f**2, atol=1e-12)


def test_minkowski_inverted_pi_closed():
    mode = ZeroMass(1.0)
    spec = catalog("Minkowski").with_picture("inverted", mode=mode)
    x = f_sigma_points(mode, 3, F_GRID, [-2.0, 0.0, 2.0])
    res = pseudoconvexity_tensor(spec, mode, x, "model")
    r = x[1] - x[0]
    np.testing.assert_allclose(res.min_tangential_eigenvalue, minkowski_pi_closed(mode, r, None, "inverted"), atol=1e-12)


def test_schwarzschild_inverted_pi_closed():
    mode = PositiveMass(1.0)
    spec = catalog("Schwarzschild").with_picture("inverted", mode=mode)
    x = f_sigma_points(mode, 3, np.geomspace(1e-5, 1e-2, 4), [-1.0, 1.0])
    res = pseudoconvexity_tensor(spec, mode, x, "model")
    r = spec.scalar("r", x)
    closed = schwarzschild_pi_closed(1.0, r, x[1] - x[0], tortoise_constant(1.0, 3.0))
    np.testing.assert_allclose(res.pi[0, 0], closed, atol=1e-12)
    for A in range(1, 3):
        np.testing.assert_allclose(res.pi[A, A], closed, atol=1e-12)


def test_inverted_minkowski_psf_h_negative():
    # The raw h = w + Box f / 2 - (n-1)/4 makes the inverted Minkowski tensor negative.
    mode = ZeroMass(1.0)
    spec = catalog("Minkowski").with_picture("inverted", mode=mode)
    x = f_sigma_points(mode, 3, F_GRID, [0.0])
    assert np.all(pseudoconvexity_tensor(spec, mode, x, "psf").min_tangential_eigenvalue < 0)
    assert np.all(pseudoconvexity_tensor(spec, mode, x, "shifted").min_tangential_eigenvalue > 0)


def test_positivity_threshold_schwarzschild():
    mode = PositiveMass(1.0)
    spec = catalog("Schwarzschild").with_picture("inverted", mode=mode)
    thr, rs, eig = positivity_threshold(spec, mode, "model", np.geomspace(1e-6, 0.09, 40))
    assert 30.0 < thr < 37.0
    assert np.all(eig[rs >= thr] > 0)


def test_mass_crossover():
    mink = catalog("Minkowski").with_picture("inverted", mode=ZeroMass(1.0))
    schw = catalog("Schwarzschild").with_picture("inverted", mode=PositiveMass(1.0))
    cross, rs, es, em = mass_crossover(schw, mink, 1.0, 1.0, np.geomspace(1e-6, 0.09, 40))
    assert 60.0 < cross < 80.0
    assert np.all(es[rs >= cross] > em[rs >= cross])


@pytest.mark.parametrize(
    "family, mode", [("Minkowski", ZeroMass(1.0)), ("Schwarzschild", PositiveMass(1.0))]
)
def test_normal_tangential_hessian_bounded(family, mode):
    x = f_sigma_points(mode, 3, np.geomspace(1e-6, 1e-2, 5), [-1.0, 1.0])
    assert normal_tangential_hessian_ratio(catalog(family), mode, x) <= 5.0


def test_psi_gap_check():
    mode = ZeroMass(1.0)
    x = f_sigma_points(mode, 3, np.geomspace(1e-8, 1e-3, 6), [0.0])
    report = psi_gap_check(mode, F1(0.1), x)
    assert report.passed and set(report.ratios) >= {"F'Psi/G", "Psi/(fG)", "Psi/f^p"}
    with pytest.raises(GapViolated):
        psi_gap_check(mode, F1(0.1), x, smallness=1e-12)
    zero = psi_gap_check(mode, F2(), x, smallness=1e-12, psi=0.0)
    assert zero.ratios["F'Psi/G"] == 0.0


@given(st.floats(1e-6, 1e-2), st.floats(-3, 3))
def test_level_sets_timelike(f, sigma):
    mode = PositiveMass(1.0)
    u, v = uv_from_f_sigma(mode, np.array([f]), np.array([sigma]))
    ut, vt = tilde_uv(mode, np.array([u, v]))
    assert ut[0] > 0 and vt[0] > 0
