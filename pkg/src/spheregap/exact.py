"""Exact solutions by separation of variables in bispherical coordinates.

Every harmonic function used here has the form

    f(xi, theta) = sqrt(2) w(xi, theta) sum_n (X_n e^{(n+1/2) xi} + Y_n e^{-(n+1/2) xi}) P_n(cos theta)

with ``w = sqrt(cosh xi - cos theta)`` and

    X_n = (p_n e^{(2n+1) xi1} + q_n) / (e^{(2n+1)(xi1+xi2)} - 1)
    Y_n = (r_n e^{(2n+1) xi2} + t_n) / (e^{(2n+1)(xi1+xi2)} - 1)

where ``p_n, q_n, r_n, t_n`` are affine in ``2n+1``. The coefficient and the
exponential are always combined into one decaying exponential so nothing
overflows, whatever ``n`` is.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .fields import AxialField
from .geometry import (
    XI1,
    XI2,
    XI1PLUSXI2,
    SphereConfig,
    reflected_center,
    to_bispherical,
    to_cartesian,
    w2,
)

__all__ = [
    "ConvergenceError",
    "TruncationWarning",
    "DEFAULT_TOL",
    "TERMS_CAP",
    "SeriesCoefficients",
    "HSeries",
    "UniformSolution",
    "ImageChargeSet",
    "capacitance_U",
    "capacitance_T",
    "boundary_constants",
    "h_series",
    "h_eval",
    "h_eval_bispherical",
    "h_normal_derivative",
    "h_normal_derivative_B1",
    "image_charges",
    "h_via_images",
    "concentration_factor_eps",
    "uniform_solution",
    "u_minus_H_eval",
    "u_minus_H_bispherical",
    "u_normal_derivative",
    "u_normal_derivative_B1",
    "u_boundary_values",
    "u_gradient_bispherical",
    "flux_quadrature",
    "FluxResult",
    "potential_difference_identity_check",
    "series_terms_needed",
]

DEFAULT_TOL = 1e-10
TERMS_CAP = 10**7
_SQRT2 = math.sqrt(2.0)
_CHUNK = 1 << 16
_REFRESH = 512


class ConvergenceError(RuntimeError):
    """A series needed more terms than the configured cap."""


class TruncationWarning(UserWarning):
    pass


def series_terms_needed(rate, tol, cap=TERMS_CAP, power=1):
    """Smallest ``N`` with ``(N+1)**power e^{-(N+1/2) rate} / (1 - e^{-rate}) < tol``.

    ``rate`` is the slowest exponential decay of the terms. ``power`` accounts
    for polynomial prefactors such as ``(n+1/2)(2n+1)``.
    """
    if not rate > 0.0:
        raise ConvergenceError(f"series does not decay (rate={rate!r})")
    lead = -math.log(-math.expm1(-rate))
    n = 1.0
    for _ in range(60):
        n_new = (math.log(1.0 / tol) + power * math.log(n + 1.0) + lead) / rate
        if abs(n_new - n) < 0.5:
            n = n_new
            break
        n = n_new
    N = int(math.ceil(n)) + 1
    if N > cap:
        raise ConvergenceError(f"series needs {N} terms, above the cap of {cap}")
    return N


# ---------------------------------------------------------------------------
# capacitance sums


def _exp_ratio_sum(cfg, c, weight_power, tol, cap):
    # sum_n (2n+1)^k e^{-(2n+1)(s-c)} / (1 - e^{-(2n+1)s})
    s = cfg.s
    rate = 2.0 * (s - c)
    N = series_terms_needed(rate, tol, cap=cap, power=weight_power)
    total = 0.0
    for start in range(0, N + 1, _CHUNK):
        n = np.arange(start, min(N + 1, start + _CHUNK), dtype=float)
        k = 2.0 * n + 1.0
        terms = np.exp(-k * (s - c)) / -np.expm1(-k * s)
        if weight_power:
            terms = terms * k**weight_power
        total += math.fsum(terms)
    return total, N + 1


def capacitance_U(c, cfg, tol=DEFAULT_TOL, cap=TERMS_CAP, return_terms=False):
    """``U(c) = sum_n e^{(2n+1)c} / (e^{(2n+1)(xi1+xi2)} - 1)`` for ``0 <= c < xi1+xi2``."""
    c = float(c)
    if not 0.0 <= c < cfg.s:
        raise ValueError(f"U(c) needs 0 <= c < xi1+xi2 = {cfg.s!r}, got {c!r}")
    val, nterms = _exp_ratio_sum(cfg, c, 0, tol, cap)
    return (val, nterms) if return_terms else val


def capacitance_T(c, cfg, tol=DEFAULT_TOL, cap=TERMS_CAP):
    """``T(c) = sum_n (2n+1)(e^{(2n+1)c} + 1) / (e^{(2n+1)(xi1+xi2)} - 1)``."""
    c = float(c)
    if not 0.0 < c < cfg.s:
        raise ValueError(f"T(c) needs 0 < c < xi1+xi2, got {c!r}")
    a, _ = _exp_ratio_sum(cfg, c, 1, tol, cap)
    b, _ = _exp_ratio_sum(cfg, 0.0, 1, tol, cap)
    return a + b


def boundary_constants(cfg, tol=DEFAULT_TOL, cap=TERMS_CAP):
    """Potential values ``(C1, C2)`` of the singular function on the spheres."""
    U0 = capacitance_U(0.0, cfg, tol, cap)
    U1 = capacitance_U(cfg.xi1, cfg, tol, cap)
    U2 = capacitance_U(cfg.xi2, cfg, tol, cap)
    det = U1 * U2 - U0 * U0
    if not det > 0.0:
        raise ArithmeticError(f"degenerate capacitance system (det={det!r})")
    pref = 1.0 / (8.0 * math.pi * cfg.a * det)
    return -pref * (U1 - U0), pref * (U2 - U0)


# ---------------------------------------------------------------------------
# generic bispherical Legendre series


@dataclass(frozen=True)
class SeriesCoefficients:
    """Affine-in-(2n+1) numerators of ``X_n`` and ``Y_n`` (see module docstring)."""

    p: tuple
    q: tuple
    r: tuple
    t: tuple

    def at(self, n):
        k = 2.0 * np.asarray(n, dtype=float) + 1.0
        return tuple(c[0] + c[1] * k for c in (self.p, self.q, self.r, self.t))

    @property
    def power(self):
        return 1 if any(c[1] != 0.0 for c in (self.p, self.q, self.r, self.t)) else 0


def _slowest_rate(cfg, xi):
    xi = np.asarray(xi, dtype=float)
    if xi.size == 0:
        return min(cfg.xi1, cfg.xi2)
    return float(min(np.min(2.0 * cfg.xi2 - xi), np.min(2.0 * cfg.xi1 + xi)))


def _choose_terms(cfg, coeffs, xi, N, tol, cap, derivative):
    rate = _slowest_rate(cfg, xi)
    power = coeffs.power + (1 if derivative else 0)
    if N is not None:
        N = int(N)
        bound = (N + 1) ** power * math.exp(-(N + 0.5) * rate) / -math.expm1(-rate)
        if bound > tol:
            warnings.warn(
                f"truncation at N={N} leaves a relative tail bound of {bound:.3g}",
                TruncationWarning,
                stacklevel=3,
            )
        return N
    return series_terms_needed(rate, tol, cap=cap, power=power)


def _sum_series(cfg, coeffs, xi, theta, N):
    """Return ``(S0, S1)``:

    S0 = sum_n (X_n e^{(n+1/2)xi} + Y_n e^{-(n+1/2)xi}) P_n(cos theta)
    S1 = sum_n (n+1/2)(X_n e^{(n+1/2)xi} - Y_n e^{-(n+1/2)xi}) P_n(cos theta)
    """
    xi, theta = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(theta, dtype=float))
    shape = xi.shape
    xi = xi.ravel()
    x = np.cos(theta.ravel())
    s = cfg.s
    lam = np.stack([2 * cfg.xi2 - xi, 2 * s - xi, 2 * cfg.xi1 + xi, 2 * s + xi])
    step = np.exp(-lam)
    n_all = np.arange(N + 1, dtype=float)
    inv_den = 1.0 / -np.expm1(-(2.0 * n_all + 1.0) * s)
    cp, cq, cr, ct = coeffs.at(n_all)

    S0 = np.zeros_like(xi)
    S1 = np.zeros_like(xi)
    P_prev = np.zeros_like(x)
    P = np.ones_like(x)
    for n in range(N + 1):
        if n % _REFRESH == 0:
            e = np.exp(-(n + 0.5) * lam)
        else:
            e *= step
        plus = (cp[n] * e[0] + cq[n] * e[1]) * inv_den[n]
        minus = (cr[n] * e[2] + ct[n] * e[3]) * inv_den[n]
        S0 += (plus + minus) * P
        S1 += (n + 0.5) * (plus - minus) * P
        P_prev, P = P, ((2 * n + 1) * x * P - n * P_prev) / (n + 1)
    return S0.reshape(shape), S1.reshape(shape)


def _series_value(cfg, coeffs, xi, theta, N):
    S0, _ = _sum_series(cfg, coeffs, xi, theta, N)
    return _SQRT2 * np.sqrt(w2(xi, theta)) * S0


def _series_dxi(cfg, coeffs, xi, theta, N):
    S0, S1 = _sum_series(cfg, coeffs, xi, theta, N)
    w = np.sqrt(w2(xi, theta))
    return _SQRT2 * (np.sinh(xi) / (2.0 * w) * S0 + w * S1)


def _normal_derivative(cfg, coeffs, j, theta, N):
    # outward normal of B1 is +e_xi on xi = -xi1; outward normal of B2 is -e_xi on xi = xi2
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0.0) or np.any(theta > math.pi):
        raise ValueError("theta must lie in [0, pi]")
    xi = np.full(theta.shape, -cfg.xi1 if j == 1 else cfg.xi2)
    sign = 1.0 if j == 1 else -1.0
    return sign * w2(xi, theta) / cfg.a * _series_dxi(cfg, coeffs, xi, theta, N)


# ---------------------------------------------------------------------------
# the singular function h


@dataclass(frozen=True)
class HSeries:
    """Separated-variables representation of the singular function ``h``.

    ``N`` is a fixed truncation order, or ``None`` to pick one per evaluation
    from ``tol``.
    """

    cfg: SphereConfig
    C1: float
    C2: float
    N: int = None
    tol: float = DEFAULT_TOL
    cap: int = TERMS_CAP

    @property
    def coefficients(self):
        return SeriesCoefficients(
            p=(self.C2, 0.0), q=(-self.C1, 0.0), r=(self.C1, 0.0), t=(-self.C2, 0.0)
        )

    def A(self, n):
        """``A_n`` evaluated without overflow."""
        k = 2.0 * np.asarray(n, dtype=float) + 1.0
        cfg = self.cfg
        return (self.C2 * np.exp(-k * cfg.xi2) - self.C1 * np.exp(-k * cfg.s)) / -np.expm1(-k * cfg.s)

    def B(self, n):
        k = 2.0 * np.asarray(n, dtype=float) + 1.0
        cfg = self.cfg
        return (self.C1 * np.exp(-k * cfg.xi1) - self.C2 * np.exp(-k * cfg.s)) / -np.expm1(-k * cfg.s)

    def terms_for(self, xi, derivative=False):
        return _choose_terms(self.cfg, self.coefficients, xi, self.N, self.tol, self.cap, derivative)


def h_series(cfg, N=None, tol=DEFAULT_TOL, cap=TERMS_CAP):
    C1, C2 = boundary_constants(cfg, tol=min(tol, 1e-12), cap=cap)
    return HSeries(cfg=cfg, C1=C1, C2=C2, N=N, tol=tol, cap=cap)


def h_eval_bispherical(hs, xi, theta):
    N = hs.terms_for(xi)
    return _series_value(hs.cfg, hs.coefficients, xi, theta, N)


def h_eval(hs, p):
    """Singular function ``h`` at Cartesian point(s) ``p`` in the exterior."""
    b = to_bispherical(p, hs.cfg)
    return h_eval_bispherical(hs, b.xi, b.theta)


def h_normal_derivative(hs, j, theta):
    """Outward normal derivative of ``h`` on ``dB_j`` at bispherical angle ``theta``."""
    xi = -hs.cfg.xi1 if j == 1 else hs.cfg.xi2
    N = hs.terms_for(np.array([xi]), derivative=True)
    return _normal_derivative(hs.cfg, hs.coefficients, j, theta, N)


def h_normal_derivative_B1(cfg, theta, N=None, tol=DEFAULT_TOL):
    return h_normal_derivative(h_series(cfg, N=N, tol=tol), 1, theta)


# ---------------------------------------------------------------------------
# image charges


@dataclass(frozen=True)
class ImageChargeSet:
    """Point charges ``q_m^c`` at ``+-p_m^c`` and the weights that give ``h``.

    ``charges[tag]`` and ``locations[tag]`` are arrays over ``m = 0..M-1``
    (locations are the signed x3 coordinates of ``p_m^c``).
    """

    cfg: SphereConfig
    C1: float
    C2: float
    M: int
    charges: dict
    locations: dict

    def families(self):
        """Yield ``(weight, charges, x3_positions)`` such that
        ``h(x) = sum weight * q * Gamma(x - x3 e3)``."""
        s_tag = XI1PLUSXI2
        yield self.C1, self.charges[s_tag], self.locations[s_tag]
        yield -self.C1, self.charges[XI1], -self.locations[XI1]
        yield -self.C2, self.charges[XI2], self.locations[XI2]
        yield self.C2, self.charges[s_tag], -self.locations[s_tag]


def image_charges(cfg, M=None, tol=DEFAULT_TOL, constants=None):
    if M is None:
        M = int(math.ceil(math.log(1.0 / tol) / cfg.s)) + 2
    if M < 1:
        raise ValueError("need at least one image per family")
    C1, C2 = constants if constants is not None else boundary_constants(cfg)
    m = np.arange(M)
    charges, locations = {}, {}
    for tag in (XI1, XI2, XI1PLUSXI2):
        _, q, p = reflected_center(m, tag, cfg)
        charges[tag] = q
        locations[tag] = p[:, 2]
    return ImageChargeSet(cfg=cfg, C1=C1, C2=C2, M=M, charges=charges, locations=locations)


def h_via_images(ics, p):
    """``h`` summed from image charges with ``Gamma(x) = -1/(4 pi |x|)``."""
    p = np.asarray(p, dtype=float)
    rho2 = p[..., 0] ** 2 + p[..., 1] ** 2
    z = p[..., 2]
    out = np.zeros(z.shape)
    for weight, q, loc in ics.families():
        dist = np.sqrt(rho2[..., None] + (z[..., None] - loc) ** 2)
        out -= weight * np.sum(q / dist, axis=-1) / (4.0 * math.pi)
    return out


def concentration_factor_eps(cfg, field, tol=DEFAULT_TOL, constants=None, cap=TERMS_CAP):
    """Exact concentration factor ``C_H^eps`` from the image-charge sums."""
    if not isinstance(field, AxialField):
        field = AxialField(tuple(field))
    if field.is_zero:
        return 0.0
    C1, C2 = constants if constants is not None else boundary_constants(cfg)
    # q_m H(p_m) ~ e^{-m s} (coth)^k: the slowest decay is e^{-s m}
    M = int(math.ceil((math.log(1.0 / tol) + 2.0 * math.log(1.0 / cfg.s)) / cfg.s)) + 2
    if M > cap:
        raise ConvergenceError(f"C_H^eps needs {M} image terms, above the cap of {cap}")
    m = np.arange(M)
    _, qs, ps = reflected_center(m, XI1PLUSXI2, cfg)
    _, q1, p1 = reflected_center(m, XI1, cfg)
    _, q2, p2 = reflected_center(m, XI2, cfg)
    H = field.axis
    first = math.fsum(qs * H(ps[:, 2])) - math.fsum(q1 * H(-p1[:, 2]))
    second = math.fsum(q2 * H(p2[:, 2])) - math.fsum(qs * H(-ps[:, 2]))
    return (C1 * first - C2 * second) / (C1 - C2)


# ---------------------------------------------------------------------------
# uniform external field


@dataclass(frozen=True)
class UniformSolution:
    """Exact solution for ``H = E0 x3``.

    ``V1`` and ``V2`` are the conductor potentials per unit ``E0``, so
    ``u|dB_j = E0 V_j``.
    """

    cfg: SphereConfig
    E0: float
    V1: float
    V2: float
    N: int = None
    tol: float = DEFAULT_TOL
    cap: int = TERMS_CAP

    @property
    def coefficients(self):
        a, E0 = self.cfg.a, self.E0
        return SeriesCoefficients(
            p=(E0 * self.V2, -E0 * a),
            q=(-E0 * self.V1, -E0 * a),
            r=(E0 * self.V1, E0 * a),
            t=(-E0 * self.V2, E0 * a),
        )

    def C(self, n):
        k = 2.0 * np.asarray(n, dtype=float) + 1.0
        cfg, a = self.cfg, self.cfg.a
        num = (self.V2 - a * k) * np.exp(-k * cfg.xi2) - (self.V1 + a * k) * np.exp(-k * cfg.s)
        return num / -np.expm1(-k * cfg.s)

    def D(self, n):
        k = 2.0 * np.asarray(n, dtype=float) + 1.0
        cfg, a = self.cfg, self.cfg.a
        num = (self.V1 + a * k) * np.exp(-k * cfg.xi1) + (a * k - self.V2) * np.exp(-k * cfg.s)
        return num / -np.expm1(-k * cfg.s)

    def terms_for(self, xi, derivative=False):
        return _choose_terms(self.cfg, self.coefficients, xi, self.N, self.tol, self.cap, derivative)


def uniform_solution(cfg, E0=1.0, N=None, tol=DEFAULT_TOL, cap=TERMS_CAP):
    """Solve the perfect-conductor problem for the uniform field ``E0 x3``."""
    t = min(tol, 1e-12)
    U0 = capacitance_U(0.0, cfg, t, cap)
    U1 = capacitance_U(cfg.xi1, cfg, t, cap)
    U2 = capacitance_U(cfg.xi2, cfg, t, cap)
    T1 = capacitance_T(cfg.xi1, cfg, t, cap)
    T2 = capacitance_T(cfg.xi2, cfg, t, cap)
    det = U1 * U2 - U0 * U0
    if not det > 0.0:
        raise ArithmeticError(f"internal error: singular boundary system (det={det!r})")
    V1 = -cfg.a * (T2 * U1 - T1 * U0) / det
    V2 = cfg.a * (T1 * U2 - T2 * U0) / det
    return UniformSolution(cfg=cfg, E0=float(E0), V1=V1, V2=V2, N=N, tol=tol, cap=cap)


def u_minus_H_bispherical(us, xi, theta):
    N = us.terms_for(xi)
    return _series_value(us.cfg, us.coefficients, xi, theta, N)


def u_minus_H_eval(us, p):
    b = to_bispherical(p, us.cfg)
    return u_minus_H_bispherical(us, b.xi, b.theta)


def u_normal_derivative(us, j, theta):
    """Outward normal derivative of ``u - H`` on ``dB_j``."""
    xi = -us.cfg.xi1 if j == 1 else us.cfg.xi2
    N = us.terms_for(np.array([xi]), derivative=True)
    return _normal_derivative(us.cfg, us.coefficients, j, theta, N)


def u_normal_derivative_B1(us, theta):
    return u_normal_derivative(us, 1, theta)


def u_boundary_values(us, theta=math.pi / 2):
    """``(u|dB1, u|dB2)`` read off the series at angle ``theta``."""
    cfg = us.cfg
    out = []
    for xi in (-cfg.xi1, cfg.xi2):
        xi_a = np.array([xi])
        th = np.array([theta])
        p = to_cartesian((xi_a, th, np.zeros(1)), cfg)
        out.append(float(u_minus_H_bispherical(us, xi_a, th)[0] + us.E0 * p[0, 2]))
    return tuple(out)


def u_gradient_bispherical(us, xi, theta, rel_step=1e-5):
    """Physical ``(e_xi, e_theta)`` components of ``grad u`` by central differences.

    ``u`` is the full potential ``(u - H) + H``. The step is ``rel_step``
    times ``xi1 + xi2`` in both coordinates; the theta stencil is clipped
    to ``[0, pi]``.
    """
    cfg = us.cfg
    xi, theta = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(theta, dtype=float))
    h = rel_step * cfg.s
    th_lo = np.maximum(theta - h, 0.0)
    th_hi = np.minimum(theta + h, math.pi)

    def u(x, t):
        x3 = to_cartesian((x, t, np.zeros_like(x)), cfg)[..., 2]
        return u_minus_H_bispherical(us, x, t) + us.E0 * x3

    d_xi = (u(xi + h, theta) - u(xi - h, theta)) / (2.0 * h)
    d_th = (u(xi, th_hi) - u(xi, th_lo)) / (th_hi - th_lo)
    inv_sig = w2(xi, theta) / cfg.a
    return d_xi * inv_sig, d_th * inv_sig


# ---------------------------------------------------------------------------
# surface integrals


@dataclass(frozen=True)
class FluxResult:
    value: float
    error: float
    nodes: int


def _theta_panels(scale):
    # geometric grading towards theta = 0, where the sphere's far side is squeezed
    edges = [0.0]
    x = max(scale, 1e-12) / 8.0
    while x < math.pi / 2:
        edges.append(x)
        x *= 2.0
    edges.append(math.pi / 2)
    edges.append(math.pi)
    return np.array(edges)


def _composite_gauss(edges, order):
    xg, wg = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + half * (xg + 1.0)).ravel()
    weights = (half * wg).ravel()
    return nodes, weights


def flux_quadrature(cfg, normal_derivative_fn, j, quad_order=24, rtol=1e-9):
    """``int_{dB_j} d_nu v dsigma`` by graded Gauss-Legendre in ``theta``.

    ``normal_derivative_fn(theta)`` must return the outward normal derivative
    on ``dB_j``. The azimuthal integral contributes ``2 pi``. The error
    estimate compares against the rule of twice the order.
    """
    xi = cfg.xi1 if j == 1 else cfg.xi2
    edges = _theta_panels(xi)

    def rule(order):
        th, wt = _composite_gauss(edges, order)
        area = cfg.a**2 * np.sin(th) / w2(xi, th) ** 2
        return 2.0 * math.pi * float(np.sum(wt * area * normal_derivative_fn(th))), th.size

    coarse, _ = rule(quad_order)
    fine, nodes = rule(2 * quad_order)
    err = abs(fine - coarse)
    if err > rtol * max(1.0, abs(fine)):
        warnings.warn(
            f"flux quadrature error estimate {err:.3g} exceeds rtol; raise quad_order",
            TruncationWarning,
            stacklevel=2,
        )
    return FluxResult(fine, err, nodes)


def surface_integral(cfg, fn, j, quad_order=24):
    """``int_{dB_j} fn(theta, x) dsigma`` for an axisymmetric integrand."""
    xi = -cfg.xi1 if j == 1 else cfg.xi2
    edges = _theta_panels(abs(xi))
    th, wt = _composite_gauss(edges, quad_order)
    xs = to_cartesian((np.full(th.shape, xi), th, np.zeros(th.shape)), cfg)
    area = cfg.a**2 * np.sin(th) / w2(xi, th) ** 2
    return 2.0 * math.pi * float(np.sum(wt * area * fn(th, xs)))


def potential_difference_identity_check(cfg, field, N=None, quad_order=32, tol=DEFAULT_TOL):
    """Compare ``u|dB1 - u|dB2`` with ``int H d_nu h`` over both spheres.

    Only the uniform field has an exact ``u`` here, so ``field`` must be
    ``E0 x3``. Returns ``(lhs, rhs, residual)``.
    """
    if not isinstance(field, AxialField):
        field = AxialField(tuple(field))
    if any(v != 0.0 for v in field.b[1:]):
        raise ValueError("the potential-difference check needs a uniform field E0 x3")
    E0 = field.b[0] if field.b else 0.0
    us = uniform_solution(cfg, E0, N=N, tol=tol)
    u1, u2 = u_boundary_values(us)
    lhs = u1 - u2
    hs = h_series(cfg, N=N, tol=tol)
    rhs = 0.0
    for j in (1, 2):
        rhs += surface_integral(
            cfg, lambda th, xs, j=j: field.value(xs) * h_normal_derivative(hs, j, th), j, quad_order
        )
    return lhs, rhs, abs(lhs - rhs)
