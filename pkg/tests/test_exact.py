import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spheregap import asymptotic as asy
from spheregap import exact as ex
from spheregap.fields import AxialField, uniform_field
from spheregap.geometry import XI1, XI2, XI1PLUSXI2, make_config, reflect, to_cartesian, w2
from spheregap.specfun import EULER_GAMMA, digamma, legendre_sequence

# Independent mpmath evaluation at 40 digits of the capacitance sums, the
# boundary constants, the conductor potentials and the two-sum normal
# derivative formulas, with coefficients formed directly (no overflow guards).
ORACLE_CONSTANTS = {
    (3.0, 2.0, 0.1): (-0.007672628117041822, 0.01567669732961888, -2.388874713170665, 0.3818431413609391),
    (3.0, 2.0, 1.0): (-0.01242942445637306, 0.02394873766918705, -3.113354560076505, 1.710186490357333),
    (1.0, 1.0, 0.01): (-0.02223171684046414, 0.02223171684046414, -0.4608477109707891, 0.4608477109707891),
}
ORACLE_THETA = (0.0, math.pi / 2, math.pi)
ORACLE_DNU = {
    # eps: (d_nu(u - H) per unit E0, d_nu h) on dB1 at ORACLE_THETA, r1 = 3, r2 = 2
    1.0: (
        (-2.116790221322059, 2.276383286329507, 4.185272156019333),
        (0.005078528855970179, 0.02047474957107862, 0.03835050809243954),
    ),
    0.05: (
        (-2.296295251272366, 23.80818984959235, 48.37242859984069),
        (0.002827629296014593, 0.2104013407344662, 0.4188463382503793),
    ),
}


def exterior_points(cfg, n, seed=0, theta_min=0.05):
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-cfg.xi1, cfg.xi2, n)
    th = rng.uniform(theta_min, math.pi, n)
    ph = rng.uniform(0.0, 2.0 * math.pi, n)
    return to_cartesian((xi, th, ph), cfg)


# ---------------------------------------------------------------------------
# capacitance sums and boundary constants


def test_capacitance_U_matches_direct_sum():
    cfg = make_config(3.0, 2.0, 0.1)
    mpmath.mp.dps = 30
    s = mpmath.mpf(cfg.s)
    for c in (0.0, cfg.xi1, cfg.xi2, 0.9 * cfg.s):
        ref = mpmath.nsum(lambda n: mpmath.e ** ((2 * n + 1) * c) / (mpmath.e ** ((2 * n + 1) * s) - 1), [0, mpmath.inf])
        assert ex.capacitance_U(c, cfg) == pytest.approx(float(ref), rel=1e-10)


def test_capacitance_U_reports_terms_and_symmetry():
    cfg = make_config(1.5, 1.5, 0.01)
    assert ex.capacitance_U(cfg.xi1, cfg) == ex.capacitance_U(cfg.xi2, cfg)
    val, n = ex.capacitance_U(0.0, cfg, return_terms=True)
    assert n > 1 and val > 0


def test_capacitance_U_small_gap_laws():
    # 2 s U(0) - ln(2/s) -> gamma, 2 s U(xi_j) - ln(2/s) -> -psi0(1 - xi_j/s)
    errs0, errs1 = [], []
    for eps in (1e-2, 1e-4, 1e-6):
        cfg = make_config(3.0, 2.0, eps)
        s = cfg.s
        lead = math.log(2.0 / s)
        errs0.append(abs(2 * s * ex.capacitance_U(0.0, cfg) - lead - EULER_GAMMA))
        errs1.append(abs(2 * s * ex.capacitance_U(cfg.xi1, cfg) - lead + digamma(1.0 - cfg.xi1 / s)))
        assert errs0[-1] < 5.0 * math.sqrt(eps) and errs1[-1] < 5.0 * math.sqrt(eps)
    assert errs0 == sorted(errs0, reverse=True)
    assert errs1 == sorted(errs1, reverse=True)


def test_capacitance_domain_and_cap():
    cfg = make_config(3.0, 2.0, 0.1)
    with pytest.raises(ValueError):
        ex.capacitance_U(cfg.s, cfg)
    with pytest.raises(ValueError):
        ex.capacitance_U(-0.1, cfg)
    with pytest.raises(ValueError):
        ex.capacitance_T(0.0, cfg)
    with pytest.raises(ex.ConvergenceError):
        ex.capacitance_U(0.0, make_config(3.0, 2.0, 1e-8), cap=100)
    with pytest.raises(ex.ConvergenceError):
        ex.series_terms_needed(0.0, 1e-8)


@pytest.mark.parametrize("key", sorted(ORACLE_CONSTANTS))
def test_boundary_constants_and_potentials_match_oracle(key):
    C1_ref, C2_ref, V1_ref, V2_ref = ORACLE_CONSTANTS[key]
    cfg = make_config(*key)
    C1, C2 = ex.boundary_constants(cfg)
    assert (C1, C2) == pytest.approx((C1_ref, C2_ref), rel=1e-10)
    us = ex.uniform_solution(cfg, 1.0)
    assert (us.V1, us.V2) == pytest.approx((V1_ref, V2_ref), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(r1=st.floats(0.2, 5.0), r2=st.floats(0.2, 5.0), eps=st.floats(1e-5, 3.0))
def test_boundary_constant_signs(r1, r2, eps):
    C1, C2 = ex.boundary_constants(make_config(r1, r2, eps))
    assert C1 < 0.0 < C2


def test_boundary_constants_symmetric_radii():
    C1, C2 = ex.boundary_constants(make_config(2.0, 2.0, 0.03))
    assert C1 == pytest.approx(-C2, rel=1e-13)


def test_boundary_constants_approach_mu_form_linearly():
    eps = np.array([1e-2, 1e-3, 1e-4, 1e-5])
    err = []
    for e in eps:
        cfg = make_config(3.0, 2.0, e)
        C1, C2 = ex.boundary_constants(cfg)
        mc = asy.mu_constants(cfg)
        err.append(max(abs(C1 + mc.mu_eps * mc.mu1), abs(C2 - mc.mu_eps * mc.mu2)))
    slope = np.polyfit(np.log(eps), np.log(err), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.15)


def test_boundary_constant_gap_law():
    # |C1 - C2| ~ 1/|ln eps|: the product stays within a narrow band
    prods = []
    for e in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
        C1, C2 = ex.boundary_constants(make_config(3.0, 2.0, e))
        prods.append(abs(C1 - C2) * abs(math.log(e)))
    prods = np.array(prods)
    assert prods.max() / prods.min() < 1.5
    # the slowly varying factor is mu_eps |ln eps|, since C2 - C1 -> mu_eps (mu1 + mu2)
    cfg = make_config(3.0, 2.0, 1e-6)
    assert prods[-1] == pytest.approx(asy.mu_constants(cfg).mu_eps * abs(math.log(1e-6)), rel=1e-4)


# ---------------------------------------------------------------------------
# the singular function h


def test_h_constant_on_both_spheres():
    cfg = make_config(3.0, 2.0, 0.1)
    hs = ex.h_series(cfg, tol=1e-8)
    th = np.linspace(0.0, math.pi, 60)
    h1 = ex.h_eval_bispherical(hs, np.full(60, -cfg.xi1), th)
    h2 = ex.h_eval_bispherical(hs, np.full(60, cfg.xi2), th)
    assert np.ptp(h1) < 1e-6 and np.ptp(h2) < 1e-6
    np.testing.assert_allclose(h1, hs.C1, rtol=1e-6)
    np.testing.assert_allclose(h2, hs.C2, rtol=1e-6)


def test_h_decays_in_far_field():
    cfg = make_config(3.0, 2.0, 0.1)
    hs = ex.h_series(cfg)
    R = 1e3 * (cfg.r1 + cfg.r2)
    p = np.array([[R, 0, 0], [0, 0, R], [0, 0, -R], [R / 2, R / 2, R / math.sqrt(2)]])
    assert np.max(np.abs(ex.h_eval(hs, p))) < 1e-4 * abs(hs.C1)


def test_h_is_harmonic():
    cfg = make_config(3.0, 2.0, 0.1)
    hs = ex.h_series(cfg, tol=1e-13)
    rng = np.random.default_rng(11)
    pts = []
    while len(pts) < 50:
        p = rng.uniform([-4, -4, -7], [4, 4, 5])
        if np.linalg.norm(p - cfg.center1) > cfg.r1 + 0.05 and np.linalg.norm(p - cfg.center2) > cfg.r2 + 0.05:
            pts.append(p)
    pts = np.array(pts)
    h = 1e-3 * cfg.r_tilde
    E = np.eye(3) * h
    lap = sum(ex.h_eval(hs, pts + e) + ex.h_eval(hs, pts - e) for e in E) - 6 * ex.h_eval(hs, pts)
    lap /= h**2
    grad = np.stack([(ex.h_eval(hs, pts + e) - ex.h_eval(hs, pts - e)) / (2 * h) for e in E], axis=-1)
    scale = np.linalg.norm(grad, axis=-1) / np.minimum(
        np.linalg.norm(pts - cfg.center1, axis=-1), np.linalg.norm(pts - cfg.center2, axis=-1)
    )
    assert np.all(np.abs(lap) < 1e-3 * np.maximum(scale, np.abs(hs.C1)))


def test_constant_function_expansion():
    # 1 = sqrt(2) w sum_n e^{-(n+1/2)|xi|} P_n(cos theta)
    rng = np.random.default_rng(2)
    xi = rng.uniform(-2.0, 2.0, 100)
    xi[np.abs(xi) < 0.05] = 0.05
    th = rng.uniform(0.0, math.pi, 100)
    N = int(math.ceil(math.log(1e10) / np.min(np.abs(xi)))) + 50
    P = legendre_sequence(np.cos(th), N)
    n = np.arange(N + 1)[:, None]
    S = np.sum(np.exp(-(n + 0.5) * np.abs(xi)) * P, axis=0)
    np.testing.assert_allclose(math.sqrt(2) * np.sqrt(w2(xi, th)) * S, 1.0, atol=1e-8)


@pytest.mark.parametrize("eps", sorted(ORACLE_DNU))
def test_normal_derivatives_match_oracle(eps):
    cfg = make_config(3.0, 2.0, eps)
    th = np.array(ORACLE_THETA)
    du_ref, dh_ref = ORACLE_DNU[eps]
    np.testing.assert_allclose(ex.h_normal_derivative_B1(cfg, th), dh_ref, rtol=1e-9)
    np.testing.assert_allclose(ex.u_normal_derivative_B1(ex.uniform_solution(cfg, 1.0), th), du_ref, rtol=1e-9)


def test_h_normal_derivative_matches_finite_difference():
    cfg = make_config(3.0, 2.0, 0.5)
    hs = ex.h_series(cfg, tol=1e-13)
    th = np.linspace(0.1, math.pi, 12)
    p = to_cartesian((np.full(12, -cfg.xi1), th, np.zeros(12)), cfg)
    nu = (p - cfg.center1) / cfg.r1
    d = 1e-5 * cfg.r1
    fd = (ex.h_eval(hs, p + d * nu) - hs.C1) / d
    # one-sided differences carry an O(d) error, so compare with a second-order stencil
    fd2 = (4 * ex.h_eval(hs, p + d * nu) - ex.h_eval(hs, p + 2 * d * nu) - 3 * hs.C1) / (2 * d)
    exact = ex.h_normal_derivative(hs, 1, th)
    np.testing.assert_allclose(fd2, exact, rtol=1e-3)
    np.testing.assert_allclose(fd, exact, rtol=1e-3)


def test_h_normal_derivative_peaks_at_gap():
    cfg = make_config(3.0, 2.0, 1e-3)
    th = np.linspace(0.0, math.pi, 181)
    d = ex.h_normal_derivative_B1(cfg, th)
    assert np.argmax(d) == th.size - 1


def test_fixed_truncation_warns():
    cfg = make_config(3.0, 2.0, 1e-3)
    hs = ex.h_series(cfg, N=5)
    with pytest.warns(ex.TruncationWarning, match="tail bound"):
        ex.h_eval_bispherical(hs, np.array([0.0]), np.array([1.0]))


def test_theta_outside_range_rejected():
    cfg = make_config(3.0, 2.0, 0.1)
    with pytest.raises(ValueError):
        ex.h_normal_derivative_B1(cfg, np.array([3.5]))


@pytest.mark.parametrize("eps", [1.0, 0.1, 1e-3])
def test_flux_of_h_through_each_sphere(eps):
    cfg = make_config(1.0, 0.3, eps)
    hs = ex.h_series(cfg)
    for j, target in ((1, 1.0), (2, -1.0)):
        res = ex.flux_quadrature(cfg, lambda t, j=j: ex.h_normal_derivative(hs, j, t), j)
        assert res.value == pytest.approx(target, abs=1e-6)
        assert res.error < 1e-8 and res.nodes > 0


def test_flux_of_uniform_field_vanishes():
    cfg = make_config(3.0, 2.0, 0.1)
    for j in (1, 2):

        def dnu_x3(th, j=j):
            xi = -cfg.xi1 if j == 1 else cfg.xi2
            p = to_cartesian((np.full(th.shape, xi), th, np.zeros(th.shape)), cfg)
            return (p[:, 2] - cfg.center(j)[2]) / cfg.radius(j)

        assert abs(ex.flux_quadrature(cfg, dnu_x3, j).value) < 1e-8


def test_flux_quadrature_warns_when_under_resolved():
    cfg = make_config(3.0, 2.0, 0.1)
    with pytest.warns(ex.TruncationWarning):
        ex.flux_quadrature(cfg, lambda t: np.cos(40 * t), 1, quad_order=2)


# ---------------------------------------------------------------------------
# image charges and the exact concentration factor


def test_image_charge_families():
    cfg = make_config(3.0, 2.0, 0.1)
    ics = ex.image_charges(cfg, M=30)
    np.testing.assert_allclose(ics.locations[XI1PLUSXI2][0], reflect(2, cfg.center1, cfg)[2], atol=1e-12)
    np.testing.assert_allclose(ics.locations[XI2][0], cfg.c2, atol=1e-12)
    np.testing.assert_allclose(-ics.locations[XI1][0], cfg.c1, atol=1e-12)
    for tag in (XI1, XI2, XI1PLUSXI2):
        q = ics.charges[tag]
        assert np.all(q > 0) and np.all(np.diff(q) < 0)
        # ratio test margin: successive charges shrink by about e^{-s}
        assert q[-1] / q[-2] == pytest.approx(math.exp(-cfg.s), rel=1e-6)
    assert len(list(ics.families())) == 4
    with pytest.raises(ValueError):
        ex.image_charges(cfg, M=0)


@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_series_and_images_agree(eps):
    cfg = make_config(2.0, 1.0, eps)
    hs = ex.h_series(cfg)
    ics = ex.image_charges(cfg, constants=(hs.C1, hs.C2))
    p = exterior_points(cfg, 60, seed=4)
    np.testing.assert_allclose(ex.h_via_images(ics, p), ex.h_eval(hs, p), atol=1e-7 * abs(hs.C1))


def test_concentration_factor_zero_field():
    cfg = make_config(3.0, 2.0, 0.1)
    assert ex.concentration_factor_eps(cfg, AxialField(())) == 0.0
    assert ex.concentration_factor_eps(cfg, AxialField((0.0,), H0=4.0)) == 0.0


def test_concentration_factor_constant_shift_invariant():
    cfg = make_config(3.0, 2.0, 0.1)
    a = ex.concentration_factor_eps(cfg, AxialField((1.0, 0.3)))
    b = ex.concentration_factor_eps(cfg, AxialField((1.0, 0.3), H0=5.0))
    assert a == pytest.approx(b, rel=1e-10)


def test_concentration_factor_even_field_equal_radii():
    for eps in (1e-1, 1e-3, 1e-5):
        cfg = make_config(1.0, 1.0, eps)
        assert abs(ex.concentration_factor_eps(cfg, AxialField((0.0, 1.0)))) < 1e-10


def test_concentration_factor_rate():
    f = uniform_field()
    C_H = asy.concentration_factor_limit(f, 3.0, 2.0)
    scaled = []
    for eps in (1e-2, 1e-3, 1e-4, 1e-5):
        ce = ex.concentration_factor_eps(make_config(3.0, 2.0, eps), f)
        scaled.append(abs(ce - C_H) / (eps * abs(math.log(eps))))
    assert max(scaled) < 5.0


def test_concentration_factor_cap():
    with pytest.raises(ex.ConvergenceError):
        ex.concentration_factor_eps(make_config(3.0, 2.0, 1e-6), uniform_field(), cap=10)


# ---------------------------------------------------------------------------
# uniform-field solution


def test_uniform_solution_constant_boundary_values():
    cfg = make_config(3.0, 2.0, 0.1)
    us = ex.uniform_solution(cfg, 1.0)
    th = np.linspace(0.0, math.pi, 40)
    for j, xi in ((1, -cfg.xi1), (2, cfg.xi2)):
        x = np.full(40, xi)
        u = ex.u_minus_H_bispherical(us, x, th) + to_cartesian((x, th, np.zeros(40)), cfg)[:, 2]
        assert np.ptp(u) < 1e-8
    u1, u2 = ex.u_boundary_values(us)
    assert (u1, u2) == pytest.approx((us.V1, us.V2), rel=1e-8)


def test_uniform_solution_zero_net_flux():
    cfg = make_config(3.0, 2.0, 0.05)
    us = ex.uniform_solution(cfg, 1.0)
    for j in (1, 2):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ex.TruncationWarning)
            flux = ex.flux_quadrature(cfg, lambda t, j=j: ex.u_normal_derivative(us, j, t), j).value
        assert abs(flux) < 1e-7


def test_uniform_solution_decays():
    cfg = make_config(3.0, 2.0, 0.1)
    us = ex.uniform_solution(cfg, 1.0)
    R = 1e3
    v = abs(float(ex.u_minus_H_eval(us, np.array([0.0, 0.0, R]))))
    assert v < 1e-3


@pytest.mark.parametrize("eps", [1e3, 1e4])
def test_uniform_solution_single_sphere_limit(eps):
    # far from its neighbour, d_nu(u - H) on a lone sphere is 2 E0 cos(polar angle)
    cfg = make_config(3.0, 2.0, eps)
    us = ex.uniform_solution(cfg, 1.0)
    th = np.linspace(0.0, math.pi, 9)
    p = to_cartesian((np.full(9, -cfg.xi1), th, np.zeros(9)), cfg)
    np.testing.assert_allclose(ex.u_normal_derivative_B1(us, th), 2.0 * (p[:, 2] - cfg.c1) / cfg.r1, atol=1e-6)


def test_uniform_solution_linear_in_E0():
    cfg = make_config(3.0, 2.0, 0.3)
    th = np.linspace(0.0, math.pi, 5)
    d1 = ex.u_normal_derivative_B1(ex.uniform_solution(cfg, 1.0), th)
    d3 = ex.u_normal_derivative_B1(ex.uniform_solution(cfg, -3.0), th)
    np.testing.assert_allclose(d3, -3.0 * d1, rtol=1e-12)


def test_uniform_gradient_far_field_and_gap():
    cfg = make_config(3.0, 2.0, 1e-3)
    us = ex.uniform_solution(cfg, 1.0)
    # at infinity the field is e3 with unit strength
    g_xi, g_th = ex.u_gradient_bispherical(us, np.array([1e-4]), np.array([1e-4]))
    assert math.hypot(g_xi[0], g_th[0]) == pytest.approx(1.0, rel=1e-2)
    # at the gap center the field is axial and matches the boundary values
    g_xi, g_th = ex.u_gradient_bispherical(us, np.array([0.0]), np.array([math.pi]))
    assert abs(g_th[0]) < 1e-6 * abs(g_xi[0])
    u1, u2 = ex.u_boundary_values(us)
    assert abs(g_xi[0]) > abs(u1 - u2) / cfg.eps * 0.5


def test_potential_difference_identity():
    cfg = make_config(3.0, 2.0, 0.5)
    lhs, rhs, r = ex.potential_difference_identity_check(cfg, uniform_field(1.0))
    assert r < 1e-5 * abs(lhs)
    lhs2, rhs2, _ = ex.potential_difference_identity_check(cfg, uniform_field(2.0))
    assert lhs2 == pytest.approx(2 * lhs, rel=1e-12) and rhs2 == pytest.approx(2 * rhs, rel=1e-12)
    assert ex.potential_difference_identity_check(cfg, uniform_field(0.0))[:2] == (0.0, 0.0)
    with pytest.raises(ValueError):
        ex.potential_difference_identity_check(cfg, AxialField((1.0, 1.0)))


def test_reference_rows_that_reproduce():
    # d_nu(u - H) at eps = 5e-5, theta = pi is tabulated as 23475.2
    cfg = make_config(3.0, 2.0, 5e-5)
    v = ex.u_normal_derivative_B1(ex.uniform_solution(cfg, 1.0), np.array([math.pi]))[0]
    assert v == pytest.approx(23475.2, abs=1.0)


@pytest.mark.xfail(strict=True, reason="tabulated exact column is not reproducible at these rows; see the decisions ledger")
@pytest.mark.parametrize(
    "eps, theta, tabulated, tol",
    [(1.0, 0.0, 2.118, 1e-3), (1.0, math.pi, 4.911, 1e-3), (0.05, math.pi, 48.973, 1e-2)],
)
def test_reference_rows_that_do_not_reproduce(eps, theta, tabulated, tol):
    cfg = make_config(3.0, 2.0, eps)
    v = ex.u_normal_derivative_B1(ex.uniform_solution(cfg, 1.0), np.array([theta]))[0]
    assert v == pytest.approx(tabulated, abs=tol)
