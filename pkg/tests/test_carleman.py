import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from carlemanlab.carleman import (
    QuadratureDomain,
    algebraic_identity_residual,
    algebraic_inequality_gap,
    carleman_moments,
    carleman_weights,
    conjugate_field,
    conjugated_operator,
    conjugated_operator_direct,
    conjugation_state,
    default_bump,
    fit_lambda_exponent,
    identity_convergence,
    integral_carleman_check,
    lambda_e_bounds,
    log_weight,
    reports_from_moments,
    smooth_cutoff,
    unique_continuation_driver,
    vanishing_order_fit,
)
from carlemanlab.errors import ConfigError, ConstantViolated, FitUnstable
from carlemanlab.fields import carleman_bump, constant_field, harmonic_field, random_bumps
from carlemanlab.foliation import F1, F2, reparam_eval
from carlemanlab.geometry import catalog
from carlemanlab.modes import PositiveMass, ZeroMass

from conftest import f_sigma_points

ZM, PM = ZeroMass(1.0), PositiveMass(1.0)
MINK = catalog("Minkowski")
MINK_INV = MINK.with_picture("inverted", mode=ZM)
SCHW_INV = catalog("Schwarzschild").with_picture("inverted", mode=PM)
CASES = [(MINK, ZM, F1()), (MINK_INV, ZM, F1()), (SCHW_INV, PM, F2())]


def points(mode, f=(1e-2, 3e-2)):
    return f_sigma_points(mode, 3, f, [-0.5, 0.5])


def bump(mode):
    return carleman_bump(mode, 3, (5e-3, 5e-2), (-2.0, 2.0))


def test_lambda_zero_is_box():
    x = points(ZM)
    st0 = conjugation_state(MINK, ZM, F1(), bump(ZM), 0.0, x)
    assert np.array_equal(conjugated_operator(st0), st0.box_psi)


@pytest.mark.parametrize("lam", [0.0, 10.0])
def test_conjugation_dual_route(lam):
    x = points(ZM)
    psi = bump(ZM)
    expansion = conjugated_operator(conjugation_state(MINK, ZM, F1(), psi, lam, x))
    direct = conjugated_operator_direct(MINK, ZM, F1(), psi, lam, x)
    assert np.max(np.abs(expansion - direct)) <= 1e-6 * max(1.0, np.max(np.abs(direct)))


def test_conjugation_dual_route_random_bumps():
    rng = np.random.default_rng(3)
    x = points(ZM)
    for psi in random_bumps(rng, ZM, 3, 4, (5e-3, 8e-2), (-2.0, 2.0)):
        expansion = conjugated_operator(conjugation_state(MINK, ZM, F1(), psi, 5.0, x))
        direct = conjugated_operator_direct(MINK, ZM, F1(), psi, 5.0, x)
        assert np.max(np.abs(expansion - direct)) <= 1e-6 * max(1.0, np.max(np.abs(direct)))


def test_conjugated_harmonic_field():
    # e^(-lambda F) Box(e^(lambda F) psi) vanishes when e^(lambda F) psi is harmonic.
    lam = 2.0
    x = points(ZM, f=(0.1, 0.2))
    psi = conjugate_field(harmonic_field(1), ZM, F1(), lam)
    assert np.max(np.abs(conjugated_operator(conjugation_state(MINK, ZM, F1(), psi, lam, x)))) <= 1e-6
    assert np.max(np.abs(conjugated_operator_direct(MINK, ZM, F1(), psi, lam, x))) <= 1e-6


def test_constant_psi_expansion():
    lam = 3.0
    x = points(ZM)
    s = conjugation_state(MINK, ZM, F1(), constant_field(1.0, 3), lam, x)
    expected = lam**2 * s.Fp**2 * s.ell + lam * s.Ecal + 2 * lam * s.Fp * (-s.w_prime)
    np.testing.assert_allclose(conjugated_operator(s), expected, rtol=1e-12)


def test_identity_zero_field():
    r = algebraic_identity_residual(MINK, ZM, F1(), constant_field(0.0, 3), 10.0, points(ZM))
    assert np.all(r.residual == 0) and np.all(r.lhs == 0)


@pytest.mark.parametrize("spec, mode, reparam", CASES)
def test_identity_residual(spec, mode, reparam):
    r = algebraic_identity_residual(spec, mode, reparam, bump(mode), 10.0, points(mode))
    assert np.max(r.relative) <= 1e-6


@pytest.mark.parametrize("spec, mode, reparam", CASES)
def test_identity_convergence_order(spec, mode, reparam):
    _, res, order = identity_convergence(spec, mode, reparam, bump(mode), 10.0, points(mode))
    assert np.all(np.diff(res) < 0)
    assert order >= 3.5


@pytest.mark.parametrize("spec, mode, reparam", CASES)
def test_inequality_gap_is_square(spec, mode, reparam):
    s = conjugation_state(spec, mode, reparam, bump(mode), 10.0, points(mode))
    gap, square = algebraic_inequality_gap(s)
    assert np.all(square >= 0)
    assert np.max(np.abs(gap - square)) <= 1e-8 * np.max(np.abs(conjugated_operator(s)) ** 2 / s.Fp)


@pytest.mark.parametrize("spec, mode, reparam", [(MINK_INV, ZM, F1(0.1)), (SCHW_INV, PM, F2(2 / 3))])
def test_lambda_containment(spec, mode, reparam):
    report = lambda_e_bounds(spec, mode, reparam, f_sigma_points(mode, 3, np.geomspace(1e-5, 1e-2, 6), [-1.0, 1.0]))
    assert 0 < report.ratio_min <= report.ratio_max < np.inf
    assert np.isfinite(report.E_constant)


def test_degenerate_weight_E():
    # With w = 0 and ell = f the coefficient E reduces to -G + F'(2h - 1).
    g = f_sigma_points(ZM, 3, np.geomspace(1e-5, 1e-2, 6), [-1.0, 1.0])
    s = conjugation_state(MINK_INV, ZM, F1(), constant_field(0.0, 3), 0.0, g, w="zero")
    np.testing.assert_allclose(s.ell, s.f, rtol=1e-13)
    np.testing.assert_allclose(np.abs(s.Ecal + s.G), s.Fp * np.abs(2 * s.h - 1), rtol=1e-10)


@given(st.sampled_from([F1(0.1), F1(0.7), F2(2 / 3), F2(1.5)]), st.floats(1.0, 200.0), st.floats(1e-3, 0.5))
def test_log_weight_matches_reparam(reparam, lam, f):
    # The weight is the lhs weight times e^(-2 lambda F).
    F, _, _, _ = reparam_eval(reparam, np.array([f]))
    lhs_w, _, _ = carleman_weights(reparam, np.array([f]))
    expected = np.log(lhs_w[0]) - 2 * lam * F[0]
    assert log_weight(reparam, lam, np.array([f]))[0] == pytest.approx(expected, rel=1e-10, abs=1e-9)


def test_quadrature_domain_validation():
    with pytest.raises(ConfigError):
        QuadratureDomain((0.5, 0.1), (-1.0, 1.0))
    with pytest.raises(ConfigError):
        QuadratureDomain((1e-3, 1e-2), (-1.0, 1.0), active_f=(1e-3, 5e-3))
    with pytest.raises(ConfigError):
        QuadratureDomain((1e-3, 1e-2), (-1.0, 1.0), rule="simpson")


def test_quadrature_volume():
    # Integral of the coordinate weight over a box equals its du dv dy volume.
    dom = QuadratureDomain((1e-2, 2e-2), (-1.0, 1.0), cells=(8, 8, 6), require_collar=False)
    x, wt = dom.nodes(ZM, 3)
    # du dv area of the (f, sigma) box is int int 1/(f^2 D) df dsigma; angles contribute pi * 2 pi.
    area, _ = integrate.dblquad(lambda s, f: 1 / (f**2 * np.sqrt(s**2 + 4 / f)), 1e-2, 2e-2, -1.0, 1.0)
    assert np.sum(wt) == pytest.approx(area * 2 * np.pi**2, rel=1e-8)
    assert x.shape == (4, wt.size)


def test_zero_test_function_integrals():
    psi = constant_field(0.0, 3)
    dom = QuadratureDomain((1e-3, 1e-2), (-2.0, 2.0), active_f=(2e-3, 8e-3), active_sigma=(-1.0, 1.0))
    sweep = integral_carleman_check(MINK_INV, ZM, F1(), psi, domain=dom, check_refinement=False)
    assert all(r.lhs == 0 and r.rhs == 0 for r in sweep.reports) and sweep.passed


def test_moments_reproduce_reports():
    psi = default_bump(ZM)
    dom = QuadratureDomain.around(psi, cells=(4, 4, 4))
    m = carleman_moments(MINK_INV, ZM, F1(), psi, dom)
    r20, r40 = reports_from_moments(m, F1(), [20.0, 40.0])
    assert r40.rhs_zero / r20.rhs_zero == pytest.approx(8.0, rel=1e-12)
    assert r40.rhs_normal / r20.rhs_normal == pytest.approx(2.0, rel=1e-12)
    assert r20.divergence_residual <= 1e-4


def test_fit_lambda_exponent():
    lams = np.array([20.0, 40.0, 80.0, 160.0])
    assert fit_lambda_exponent(lams, 3 * lams**3) == pytest.approx(3.0)
    with pytest.raises(FitUnstable):
        fit_lambda_exponent(lams, [1.0, 0.0, 1.0, 1.0])


@pytest.mark.slow
@pytest.mark.parametrize("spec, mode, reparam", [(MINK_INV, ZM, F1()), (SCHW_INV, PM, F2())])
def test_integral_carleman_scaling(spec, mode, reparam):
    sweep = integral_carleman_check(spec, mode, reparam, default_bump(mode))
    assert sweep.passed
    for key, expected in (("rhs_normal", 1), ("rhs_tangential", 1), ("rhs_zero", 3)):
        assert abs(sweep.exponents[key] - expected) <= 0.1
    assert sweep.refinement_change <= 0.01
    assert max(r.divergence_residual for r in sweep.reports) <= 1e-6


def test_constant_violation_reported(monkeypatch):
    import carlemanlab.carleman as carl

    psi = default_bump(ZM)
    dom = QuadratureDomain.around(psi, cells=(4, 4, 4))
    real = carl.reports_from_moments

    def shrinking(moments, reparam, lambdas):
        reports = real(moments, reparam, lambdas)
        # Halve the left side at the larger lambda so that LHS < c RHS there.
        reports[1].lhs = 0.5 * reports[0].ratio * reports[1].rhs
        return reports

    monkeypatch.setattr(carl, "reports_from_moments", shrinking)
    with pytest.raises(ConstantViolated):
        integral_carleman_check(MINK_INV, ZM, F1(), psi, lambdas=[20.0, 40.0], domain=dom, check_refinement=False)
    sweep = integral_carleman_check(
        MINK_INV, ZM, F1(), psi, lambdas=[20.0, 40.0], domain=dom, check_refinement=False, raise_on_violation=False
    )
    assert not sweep.passed


@pytest.mark.parametrize("N, order", [(0, 1), (1, 2), (2, 3), (3, 4)])
def test_vanishing_orders(N, order):
    fit = vanishing_order_fit(N)
    assert fit.order == pytest.approx(order, abs=0.05)
    assert fit.box_residual <= 1e-6


@given(st.floats(0.0, 2.0), st.floats(0.05, 0.9))
def test_smooth_cutoff_range(s, kappa):
    chi, d1, _ = smooth_cutoff(np.array([s]), kappa)
    assert 0.0 <= chi[0] <= 1.0
    assert d1[0] <= 0.0
    if s <= 1 - kappa:
        assert chi[0] == 1.0
    if s >= 1 - kappa / 5:
        assert chi[0] == 0.0


def test_unique_continuation_zero():
    rep = unique_continuation_driver(MINK_INV, ZM, F1(), constant_field(0.0, 3))
    assert rep.bound == [0.0] * 4 and rep.interior == 0.0


def test_unique_continuation_collar_bump():
    psi = carleman_bump(ZM, 3, (0.75e-2, 0.95e-2), (-1.0, 1.0))
    rep = unique_continuation_driver(MINK_INV, ZM, F1(), psi)
    assert rep.interior == 0.0
    assert all(np.isfinite(b) and b > 0 for b in rep.bound)


def test_unique_continuation_needs_vanishing():
    rep = unique_continuation_driver(MINK_INV, ZM, F1(), harmonic_field(1))
    # The bound falls like lambda^-3 while the interior integral is fixed, so the ratio grows.
    assert rep.ratio_exponent == pytest.approx(3.0, abs=0.1)
    assert rep.interior > 0
