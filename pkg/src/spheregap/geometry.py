"""Two-sphere geometry and bispherical coordinates.

The spheres ``B1 = B(c1 e3, r1)`` and ``B2 = B(c2 e3, r2)`` are separated by a
gap ``eps`` along the x3 axis. The bispherical poles sit at ``(0, 0, -a)`` and
``(0, 0, a)``, the fixed points of the combined reflections, so that
``dB1 = {xi = -xi1}`` and ``dB2 = {xi = xi2}``.

Cartesian points are numpy arrays with a trailing axis of length 3.
"""

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "SphereConfig",
    "BisphericalPoint",
    "SuperfocusRegion",
    "GeometryWarning",
    "make_config",
    "w2",
    "to_bispherical",
    "to_cartesian",
    "scale_factors",
    "unit_xi_vector",
    "reflect",
    "reflected_center",
    "superfocus_region",
    "XI1",
    "XI2",
    "XI1PLUSXI2",
]

XI1 = "xi1"
XI2 = "xi2"
XI1PLUSXI2 = "xi1+xi2"

EPS_FLOOR = 1e-12


class GeometryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SphereConfig:
    """Radii, gap and every derived constant of the two-sphere problem."""

    r1: float
    r2: float
    eps: float
    c1: float
    c2: float
    a: float
    xi1: float
    xi2: float
    r_tilde: float
    r_tilde_1: float
    r_tilde_2: float

    @property
    def s(self):
        """``xi1 + xi2``."""
        return self.xi1 + self.xi2

    @property
    def p1(self):
        return np.array([0.0, 0.0, -self.a])

    @property
    def p2(self):
        return np.array([0.0, 0.0, self.a])

    @property
    def center1(self):
        return np.array([0.0, 0.0, self.c1])

    @property
    def center2(self):
        return np.array([0.0, 0.0, self.c2])

    def radius(self, j):
        return self.r1 if j == 1 else self.r2

    def center(self, j):
        return self.center1 if j == 1 else self.center2


class BisphericalPoint(NamedTuple):
    xi: np.ndarray
    theta: np.ndarray
    phi: np.ndarray


def make_config(r1, r2, eps):
    """Build a :class:`SphereConfig` from the radii and the gap."""
    r1, r2, eps = float(r1), float(r2), float(eps)
    for name, v in (("r1", r1), ("r2", r2), ("eps", eps)):
        if not (v > 0.0 and math.isfinite(v)):
            raise ValueError(f"{name} must be a finite positive number, got {v!r}")
    if eps < EPS_FLOOR:
        warnings.warn(
            f"eps={eps:g} is below {EPS_FLOOR:g}; derived coth values lose precision",
            GeometryWarning,
            stacklevel=2,
        )
    L = r1 + r2 + eps
    c1 = (r2**2 - r1**2 - L**2) / (2.0 * L)
    c2 = c1 + L
    a = math.sqrt(eps) * math.sqrt((2 * r1 + eps) * (2 * r2 + eps) * (2 * r1 + 2 * r2 + eps)) / (2.0 * L)
    xi1 = math.asinh(a / r1)
    xi2 = math.asinh(a / r2)
    return SphereConfig(
        r1=r1,
        r2=r2,
        eps=eps,
        c1=c1,
        c2=c2,
        a=a,
        xi1=xi1,
        xi2=xi2,
        r_tilde=r1 * r2 / (r1 + r2),
        r_tilde_1=r1 / (r1 + r2),
        r_tilde_2=r2 / (r1 + r2),
    )


def w2(xi, theta):
    """``cosh(xi) - cos(theta)`` without cancellation near ``(0, 0)``."""
    return 2.0 * np.sinh(0.5 * xi) ** 2 + 2.0 * np.sin(0.5 * theta) ** 2


def _as_points(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 3:
        raise ValueError(f"Cartesian points need a trailing axis of length 3, got shape {p.shape}")
    return p


def to_bispherical(p, cfg):
    """Cartesian -> bispherical ``(xi, theta, phi)``.

    On the symmetry axis ``phi`` is set to 0.
    """
    p = _as_points(p)
    x1, x2, x3 = p[..., 0], p[..., 1], p[..., 2]
    a = cfg.a
    rho = np.hypot(x1, x2)
    dm = (x3 - a) ** 2 + rho**2
    dp = (x3 + a) ** 2 + rho**2
    if np.any(dm == 0.0) or np.any(dp == 0.0):
        raise ZeroDivisionError("point coincides with a bispherical pole")
    xi = 0.5 * np.log1p(4.0 * a * x3 / dm)
    theta = np.arctan2(2.0 * a * rho, rho**2 + x3**2 - a**2)
    theta = np.clip(theta, 0.0, np.pi)
    phi = np.where(rho > 0.0, np.mod(np.arctan2(x2, x1), 2.0 * np.pi), 0.0)
    return BisphericalPoint(xi, theta, phi)


def to_cartesian(b, cfg):
    """Bispherical -> Cartesian."""
    xi, theta, phi = (np.asarray(v, dtype=float) for v in b)
    d = w2(xi, theta)
    if np.any(d == 0.0):
        raise ZeroDivisionError("(xi, theta) = (0, 0) is the point at infinity")
    f = cfg.a / d
    st = np.sin(theta)
    return np.stack(
        np.broadcast_arrays(f * st * np.cos(phi), f * st * np.sin(phi), f * np.sinh(xi)),
        axis=-1,
    )


def scale_factors(b, cfg):
    """Return ``(sigma_xi, sigma_theta, sigma_phi)``."""
    xi, theta = np.asarray(b[0], dtype=float), np.asarray(b[1], dtype=float)
    d = w2(xi, theta)
    if np.any(d == 0.0):
        raise ZeroDivisionError("scale factors are singular at (xi, theta) = (0, 0)")
    sig = cfg.a / d
    return sig, sig, sig * np.sin(theta)


def pole_field(p, cfg):
    """``(x - p1)/|x - p1|^2 - (x - p2)/|x - p2|^2``."""
    p = _as_points(p)
    d1 = p - cfg.p1
    d2 = p - cfg.p2
    n1 = np.sum(d1 * d1, axis=-1, keepdims=True)
    n2 = np.sum(d2 * d2, axis=-1, keepdims=True)
    if np.any(n1 == 0.0) or np.any(n2 == 0.0):
        raise ZeroDivisionError("point coincides with a bispherical pole")
    return d1 / n1 - d2 / n2


def unit_xi_vector(p, cfg):
    """Unit vector in the direction of increasing ``xi``."""
    N = pole_field(p, cfg)
    b = to_bispherical(p, cfg)
    sig = scale_factors(b, cfg)[0]
    return np.asarray(sig)[..., None] * N


def reflect(j, p, cfg):
    """Kelvin reflection of ``p`` with respect to the sphere ``dB_j``."""
    p = _as_points(p)
    c = cfg.center(j)
    r = cfg.radius(j)
    d = p - c
    n = np.sum(d * d, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise ZeroDivisionError(f"cannot reflect the center of sphere {j}")
    return r * r * d / n + c


def _tag_offset(tag, cfg):
    if tag == XI1:
        return cfg.xi1
    if tag == XI2:
        return cfg.xi2
    if tag == XI1PLUSXI2:
        return cfg.s
    raise ValueError(f"unknown reflected-center tag {tag!r}")


def reflected_center(m, tag, cfg):
    """``(xi_m, q_m, p_m)`` for the m-th multiply reflected center.

    ``xi_m = m (xi1 + xi2) + c`` with ``c`` selected by ``tag``,
    ``q_m = 4 pi a / sinh(xi_m)`` and ``p_m = a coth(xi_m) e3``.
    ``m`` may be an integer array.
    """
    m = np.asarray(m)
    if np.any(m < 0):
        raise ValueError("m must be nonnegative")
    xi_m = m * cfg.s + _tag_offset(tag, cfg)
    q = 4.0 * np.pi * cfg.a / np.sinh(xi_m)
    z = cfg.a / np.tanh(xi_m)
    p = np.stack(np.broadcast_arrays(np.zeros_like(z), np.zeros_like(z), z), axis=-1)
    return xi_m, q, p


@dataclass(frozen=True)
class SuperfocusRegion:
    """Torus-shaped gap neighbourhood where the field blows up.

    It is the solid of revolution of the disk of radius ``r_star`` centred
    at distance ``d_star`` from the x3 axis; in bispherical coordinates it is
    ``{theta > theta_eps}``.
    """

    theta_eps: float
    d_star: float
    r_star: float
    a: float

    def contains(self, p):
        p = _as_points(p)
        rho = np.hypot(p[..., 0], p[..., 1])
        return (rho - self.d_star) ** 2 + p[..., 2] ** 2 < self.r_star**2

    def contains_bispherical(self, theta):
        return np.asarray(theta) > self.theta_eps


def superfocus_region(cfg):
    eps = cfg.eps
    if not eps < 1.0:
        raise ValueError("superfocus region needs eps < 1")
    theta_eps = math.sqrt(eps * abs(math.log(eps)))
    if theta_eps >= math.pi / 2:
        raise ValueError(f"theta_eps={theta_eps:g} is not below pi/2")
    return SuperfocusRegion(
        theta_eps=theta_eps,
        d_star=cfg.a / math.tan(theta_eps),
        r_star=cfg.a / math.sin(theta_eps),
        a=cfg.a,
    )
