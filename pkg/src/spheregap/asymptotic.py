"""Closed-form asymptotics of the field between two nearly touching spheres.

The central objects are the weights ``mu_eps``, ``mu1``, ``mu2``, the
geometric coefficients ``Q_k(r1, r2)`` and the limiting concentration factor
``C_H = sum_k b_k Q_k``. From these follow the blow-up profile ``q_h``, the
scalar ``psi`` of the Cartesian gradient asymptote and the line-charge
approximation of the singular function.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import AxialField
from .geometry import (
    SuperfocusRegion,
    make_config,
    pole_field,
    reflect,
    superfocus_region,
    to_bispherical,
    w2,
)
from .specfun import EULER_GAMMA, polygamma, riemann_zeta_int

__all__ = [
    "MuConstants",
    "BlowupSummary",
    "SuperfocusReport",
    "mu_constants",
    "mu_weights",
    "q_coefficient",
    "concentration_factor_limit",
    "c_h_double_series",
    "blowup_psi",
    "gradient_asymptotic",
    "q_boundary_B1",
    "q_h",
    "q_h_bispherical",
    "density_rho",
    "density_total",
    "singular_part_hs",
    "superfocus_bound_check",
    "blowup_summary",
]


@dataclass(frozen=True)
class MuConstants:
    """``mu_eps`` and the splitting weights ``mu1 + mu2 = 1``."""

    mu_eps: float
    mu1: float
    mu2: float

    @property
    def mu_tilde(self):
        """``(mu_eps mu1, mu_eps mu2)``."""
        return self.mu_eps * self.mu1, self.mu_eps * self.mu2


def _as_config(r1, r2):
    # mu1, mu2 and Q_k do not depend on eps; any valid gap will do
    return make_config(r1, r2, 1.0)


def mu_weights(r1, r2):
    """``(mu1, mu2)``, the eps-independent weights.

    ``mu_j = (psi0(rt_j) + gamma) / (psi0(rt_1) + psi0(rt_2) + 2 gamma)``
    with ``rt_j = r_j / (r1 + r2)``.
    """
    r1, r2 = float(r1), float(r2)
    if not (r1 > 0.0 and r2 > 0.0):
        raise ValueError("radii must be positive")
    t1, t2 = r1 / (r1 + r2), r2 / (r1 + r2)
    d1 = polygamma(0, t1) + EULER_GAMMA
    d2 = polygamma(0, t2) + EULER_GAMMA
    return d1 / (d1 + d2), d2 / (d1 + d2)


def _mu_values(cfg):
    p1 = polygamma(0, cfg.r_tilde_1)
    p2 = polygamma(0, cfg.r_tilde_2)
    g = EULER_GAMMA
    bracket = (
        abs(math.log(cfg.eps))
        + math.log(cfg.r_tilde)
        + math.log(2.0)
        - 2.0 * (p1 * p2 - g * g) / (p1 + p2 + 2.0 * g)
    )
    if not bracket > 0.0:
        raise ValueError(f"mu_eps is undefined for eps={cfg.eps!r} (bracket {bracket:.4g} <= 0)")
    mu1, mu2 = mu_weights(cfg.r1, cfg.r2)
    return MuConstants(mu_eps=1.0 / (2.0 * math.pi * cfg.r_tilde * bracket), mu1=mu1, mu2=mu2)


def mu_constants(cfg):
    """Weights of the singular function for a gap ``0 < eps < 1``.

    Parameters
    ----------
    cfg : SphereConfig

    Returns
    -------
    MuConstants

    Notes
    -----
    ``mu_eps`` behaves like ``1 / (2 pi rt |ln eps|)`` as ``eps -> 0``.
    The profile functions below accept ``eps = 1`` as well, where the same
    formula is still finite.
    """
    if not cfg.eps < 1.0:
        raise ValueError("mu_constants needs eps < 1")
    return _mu_values(cfg)


def q_coefficient(k, r1, r2):
    """Geometric coefficient ``Q_k(r1, r2)``.

    ``4 pi rt^{k+1} [(mu1 + s mu2) zeta(k+1) + (mu1 psi_k(rt_2) + s mu2 psi_k(rt_1)) / k!]``
    with ``s = (-1)^{k+1}`` and ``rt = r1 r2 / (r1 + r2)``.
    """
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    k = int(k)
    cfg = _as_config(r1, r2)
    mu1, mu2 = mu_weights(r1, r2)
    sgn = (-1) ** (k + 1)
    rt = cfg.r_tilde
    poly = (mu1 * polygamma(k, cfg.r_tilde_2) + sgn * mu2 * polygamma(k, cfg.r_tilde_1)) / math.factorial(k)
    return 4.0 * math.pi * rt ** (k + 1) * ((mu1 + sgn * mu2) * riemann_zeta_int(k + 1) + poly)


def _as_field(field):
    return field if isinstance(field, AxialField) else AxialField(tuple(field))


def concentration_factor_limit(field, r1, r2):
    """Limit ``C_H = sum_k b_k Q_k(r1, r2)`` of the concentration factor."""
    field = _as_field(field)
    return math.fsum(bk * q_coefficient(k, r1, r2) for k, bk in enumerate(field.b, start=1) if bk != 0.0)


# B_2, B_4, B_6 / (2j)!
_EM_WEIGHTS = (1.0 / 12.0, -1.0 / 720.0, 1.0 / 30240.0)


def _rising(p, n):
    out = 1.0
    for i in range(n):
        out *= p + i
    return out


def _power_tail(p, alpha, M):
    """``sum_{m >= M} (m + alpha)^{-p}`` by Euler-Maclaurin, ``p >= 2``."""
    x = M + alpha
    tail = x ** (1 - p) / (p - 1) + 0.5 * x ** (-p)
    for j, wj in enumerate(_EM_WEIGHTS, start=1):
        # -f^{(2j-1)}(x) = p (p+1) ... (p+2j-2) x^{-p-2j+1}
        tail += wj * _rising(p, 2 * j - 1) * x ** (-p - 2 * j + 1)
    return tail


def c_h_double_series(field, r1, r2, tol=1e-12, cap=10**7):
    """``C_H`` from the image-point double series, independent of polygamma.

    The series over ``m`` runs through the points ``rt/(m+1)``,
    ``rt/(m + rt_1)`` and ``rt/(m + rt_2)``. It is summed directly up to
    ``M`` and the remaining tail of each monomial is added in closed form by
    Euler-Maclaurin. ``M`` grows until the first neglected correction is
    below ``tol`` in absolute terms. Only ``g = H - H(0)`` enters; the
    constant ``H(0)`` cancels between the two sums.
    """
    field = _as_field(field)
    if field.is_zero:
        return 0.0
    cfg = _as_config(r1, r2)
    mu1, mu2 = mu_weights(r1, r2)
    rt, t1, t2 = cfg.r_tilde, cfg.r_tilde_1, cfg.r_tilde_2
    b = field.b
    scale = max(abs(v) * rt ** (k + 1) for k, v in enumerate(b, start=1))

    M = 16
    while True:
        # next Euler-Maclaurin term for the slowest monomial p = 2
        bound = scale * 4.0 * math.pi * _rising(2, 7) / 1209600.0 * (M + min(t1, t2)) ** (-9) * len(b)
        if bound < tol or M >= cap:
            break
        M *= 2
    if M > cap:
        raise RuntimeError(f"double series needs more than {cap} terms")

    m = np.arange(M, dtype=float)
    # (weight, shift alpha, sign of the argument) for each of the four sums
    parts = ((mu1, 1.0, 1.0), (-mu1, t2, -1.0), (mu2, t1, 1.0), (-mu2, 1.0, -1.0))
    total = []
    for weight, alpha, sign in parts:
        head = np.zeros_like(m)
        tail = 0.0
        for k, bk in enumerate(b, start=1):
            if bk == 0.0:
                continue
            coef = bk * sign**k * rt ** (k + 1)
            head += coef * (m + alpha) ** (-(k + 1))
            tail += coef * _power_tail(k + 1, alpha, M)
        total.append(weight * (math.fsum(head) + tail))
    return 4.0 * math.pi * math.fsum(total)


# ---------------------------------------------------------------------------
# Cartesian gradient asymptote


def _inv_dist(p, center):
    d = np.linalg.norm(p - center, axis=-1)
    if np.any(d == 0.0):
        raise ZeroDivisionError("point coincides with a singularity of psi")
    return 1.0 / d


def blowup_psi(p, cfg):
    """Blow-up factor ``psi`` of the Cartesian gradient asymptote.

    ``mu_eps rt / (2a) (mu1 r1/|x-c1| + mu2 rt/|x-R1(c2)| + mu2 r2/|x-c2| + mu1 rt/|x-R2(c1)|)``
    """
    p = np.asarray(p, dtype=float)
    mc = _mu_values(cfg)
    rt = cfg.r_tilde
    R1c2 = reflect(1, cfg.center2, cfg)
    R2c1 = reflect(2, cfg.center1, cfg)
    inner = (
        mc.mu1 * cfg.r1 * _inv_dist(p, cfg.center1)
        + mc.mu2 * rt * _inv_dist(p, R1c2)
        + mc.mu2 * cfg.r2 * _inv_dist(p, cfg.center2)
        + mc.mu1 * rt * _inv_dist(p, R2c1)
    )
    return mc.mu_eps * rt / (2.0 * cfg.a) * inner


def gradient_asymptotic(p, cfg, field):
    """Leading-order ``grad u``: ``C_H psi(x) N(x) + grad H(x)``.

    ``N(x) = (x-p1)/|x-p1|^2 - (x-p2)/|x-p2|^2``. The remainder, bounded
    independently of ``eps``, has no closed form and is omitted.
    """
    field = _as_field(field)
    p = np.asarray(p, dtype=float)
    C_H = concentration_factor_limit(field, cfg.r1, cfg.r2)
    out = field.gradient(p)
    if C_H != 0.0:
        out = out + C_H * np.asarray(blowup_psi(p, cfg))[..., None] * pole_field(p, cfg)
    return out


# ---------------------------------------------------------------------------
# bispherical blow-up profile


def _I1(cfg, xi, theta, c):
    # (1/(2 a s)) w^3(xi) / w(xi - c)
    return w2(xi, theta) ** 1.5 / (np.sqrt(w2(xi - c, theta)) * 2.0 * cfg.a * cfg.s)


def q_h_bispherical(xi, theta, cfg):
    """Blow-up profile ``q_h`` at bispherical ``(xi, theta)``."""
    xi = np.asarray(xi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    m1, m2 = _mu_values(cfg).mu_tilde
    s = cfg.s
    return m1 * (_I1(cfg, -xi, theta, 2 * cfg.xi1) + _I1(cfg, xi, theta, 2 * s)) + m2 * (
        _I1(cfg, xi, theta, 2 * cfg.xi2) + _I1(cfg, -xi, theta, 2 * s)
    )


def q_h(p, cfg):
    """Blow-up profile ``q_h`` at Cartesian exterior point(s) ``p``.

    ``grad h = q_h e_xi + (bounded)``.
    """
    b = to_bispherical(p, cfg)
    return q_h_bispherical(b.xi, b.theta, cfg)


def q_boundary_B1(theta, cfg):
    """``q_h`` restricted to ``dB1`` as an elementary function of ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0.0) or np.any(theta > math.pi):
        raise ValueError("theta must lie in [0, pi]")
    m1, m2 = _mu_values(cfg).mu_tilde
    x1, x2 = cfg.xi1, cfg.xi2
    w1sq = w2(x1, theta)
    w1cube = w1sq**1.5
    pref = 1.0 / (2.0 * cfg.a * cfg.s)
    return pref * (
        m1 * (w1sq + w1cube / np.sqrt(w2(3 * x1 + 2 * x2, theta)))
        + m2 * 2.0 * w1cube / np.sqrt(w2(x1 + 2 * x2, theta))
    )


# ---------------------------------------------------------------------------
# line-charge form of the singular part


def _log_coth_half(x):
    # arccosh(coth x) = ln coth(x/2)
    return -math.log(math.tanh(0.5 * x))


def density_rho(j, c, cfg):
    """Axial line density ``rho_j(0, 0, c)``.

    ``rho_1`` lives on ``[c1, p1]`` with an extra ``mu2`` layer on
    ``[R1(c2), p1]``; ``rho_2`` mirrors it on ``[p2, c2]``. Zero elsewhere.
    """
    c = np.asarray(c, dtype=float)
    mc = _mu_values(cfg)
    a = cfg.a
    inner_end = a / math.tanh(cfg.s)
    if j == 1:
        x = -c
        outer_end, w_outer, w_inner = -cfg.c1, mc.mu1, mc.mu2
    elif j == 2:
        x = c
        outer_end, w_outer, w_inner = cfg.c2, mc.mu2, mc.mu1
    else:
        raise ValueError("sphere index must be 1 or 2")
    with np.errstate(divide="ignore", invalid="ignore"):
        base = cfg.r_tilde * mc.mu_eps / np.sqrt(x * x - a * a)
    weight = np.where((x > a) & (x <= outer_end), w_outer, 0.0) + np.where((x > a) & (x <= inner_end), w_inner, 0.0)
    return np.where(weight > 0.0, base * weight, 0.0)


def density_total(j, cfg):
    """``int rho_j dc`` in closed form."""
    mc = _mu_values(cfg)
    if j == 1:
        w_outer, w_inner, xi_j = mc.mu1, mc.mu2, cfg.xi1
    elif j == 2:
        w_outer, w_inner, xi_j = mc.mu2, mc.mu1, cfg.xi2
    else:
        raise ValueError("sphere index must be 1 or 2")
    return cfg.r_tilde * mc.mu_eps * (w_outer * _log_coth_half(xi_j) + w_inner * _log_coth_half(cfg.s))


def _segment_potential(p, cfg, sign, T, order):
    # int_0^T dt / |x - sign a cosh(t) e3|, the image of int dc / (sqrt(c^2-a^2) |x - c|)
    npan = max(1, int(math.ceil(T)))
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, T, npan + 1)
    half = 0.5 * np.diff(edges)
    t = (edges[:-1, None] + half[:, None] * (xg + 1.0)).ravel()
    wt = (half[:, None] * wg).ravel()
    zc = sign * cfg.a * np.cosh(t)
    rho2 = p[..., 0] ** 2 + p[..., 1] ** 2
    dist = np.sqrt(rho2[..., None] + (p[..., 2][..., None] - zc) ** 2)
    if np.any(dist == 0.0):
        raise ZeroDivisionError("evaluation point lies on a charged segment")
    return np.sum(wt / dist, axis=-1)


def singular_part_hs(p, cfg, quad_order=16):
    """Line-charge approximation ``-int rho_1/|x-c| dc + int rho_2/|x-c| dc``.

    The substitution ``c = a cosh t`` removes the inverse square root at the
    poles, leaving a smooth integrand for Gauss-Legendre on unit panels.
    """
    p = np.asarray(p, dtype=float)
    mc = _mu_values(cfg)
    pref = cfg.r_tilde * mc.mu_eps
    T1 = _log_coth_half(cfg.xi1)
    T2 = _log_coth_half(cfg.xi2)
    Ts = _log_coth_half(cfg.s)
    below = mc.mu1 * _segment_potential(p, cfg, -1.0, T1, quad_order) + mc.mu2 * _segment_potential(
        p, cfg, -1.0, Ts, quad_order
    )
    above = mc.mu2 * _segment_potential(p, cfg, 1.0, T2, quad_order) + mc.mu1 * _segment_potential(
        p, cfg, 1.0, Ts, quad_order
    )
    return pref * (above - below)


# ---------------------------------------------------------------------------
# superfocusing


@dataclass(frozen=True)
class SuperfocusReport:
    """Maxima of ``|grad u|`` inside and outside the gap region."""

    eps: float
    theta_eps: float
    inside_max: float
    outside_max: float
    inside_argmax: tuple
    outside_argmax: tuple
    points: int


def _bispherical_grid(cfg, n_xi, n_theta):
    # theta starts one step above 0 so the point at infinity is avoided
    xi = np.linspace(-cfg.xi1, cfg.xi2, n_xi)
    theta = np.linspace(math.pi / n_theta, math.pi, n_theta)
    return np.meshgrid(xi, theta, indexing="ij")


def superfocus_bound_check(cfg, field=None, grid_spec=(81, 161), rel_step=1e-5):
    """Scan ``|grad u|`` over the exterior and split it by the gap region.

    The exact uniform-field solution is differentiated by central
    differences in ``(xi, theta)`` and converted with the scale factor
    ``a / (cosh xi - cos theta)``.

    Parameters
    ----------
    cfg : SphereConfig
        Needs ``eps < 1`` so that the gap region is defined.
    field : AxialField, optional
        Must be uniform; defaults to ``x3``.
    grid_spec : (int, int)
        Points in ``xi`` (uniform on ``[-xi1, xi2]``) and in ``theta``.
    rel_step : float
        Finite-difference step relative to ``xi1 + xi2``.

    Returns
    -------
    SuperfocusReport
    """
    from .exact import u_gradient_bispherical, uniform_solution

    field = _as_field(field if field is not None else (1.0,))
    if any(v != 0.0 for v in field.b[1:]):
        raise ValueError("superfocus_bound_check needs a uniform field")
    E0 = field.b[0] if field.b else 0.0
    region = superfocus_region(cfg)
    us = uniform_solution(cfg, E0)
    n_xi, n_theta = (int(v) for v in grid_spec)
    if n_xi < 2 or n_theta < 2:
        raise ValueError("grid needs at least 2 points per axis")
    XI, TH = _bispherical_grid(cfg, n_xi, n_theta)
    grad = np.hypot(*u_gradient_bispherical(us, XI, TH, rel_step))
    inside = region.contains_bispherical(TH)

    def argmax(mask):
        vals = np.where(mask, grad, -np.inf)
        i = np.unravel_index(np.argmax(vals), vals.shape)
        return float(vals[i]), (float(XI[i]), float(TH[i]))

    in_max, in_arg = argmax(inside)
    out_max, out_arg = argmax(~inside)
    return SuperfocusReport(
        eps=cfg.eps,
        theta_eps=region.theta_eps,
        inside_max=in_max,
        outside_max=out_max,
        inside_argmax=in_arg,
        outside_argmax=out_arg,
        points=int(grad.size),
    )


# ---------------------------------------------------------------------------
# summary


@dataclass(frozen=True)
class BlowupSummary:
    """Everything that characterises the blow-up for one configuration."""

    C_H: float
    Q: tuple
    mu: MuConstants
    region: SuperfocusRegion = dc_field(default=None)


def blowup_summary(cfg, field):
    """Collect ``C_H``, ``Q_1..Q_K``, the weights and the gap region."""
    field = _as_field(field)
    Q = tuple(q_coefficient(k, cfg.r1, cfg.r2) for k in range(1, field.degree + 1))
    C_H = math.fsum(bk * qk for bk, qk in zip(field.b, Q))
    region = superfocus_region(cfg) if cfg.eps < 1.0 else None
    return BlowupSummary(C_H=C_H, Q=Q, mu=_mu_values(cfg), region=region)
