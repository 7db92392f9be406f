"""Axisymmetric external potentials given by their values on the x3 axis."""

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["AxialField", "uniform_field"]


def _zonal_coefficients(k):
    # r^k P_k(x3/r) = sum_j c_j x3^(k-2j) rho^(2j)
    return [
        (j, (-1) ** j * math.factorial(k) / (4**j * math.factorial(j) ** 2 * math.factorial(k - 2 * j)))
        for j in range(k // 2 + 1)
    ]


@dataclass(frozen=True)
class AxialField:
    """Harmonic potential ``H`` with ``H(t e3) = H0 + sum_k b[k-1] t**k``.

    Off the axis ``H`` is the unique axisymmetric harmonic polynomial with
    these axial values, ``H0 + sum_k b_k |x|^k P_k(x3/|x|)``. The uniform
    field ``E0 x3`` is ``AxialField((E0,))``.
    """

    b: tuple = ()
    H0: float = 0.0

    def __post_init__(self):
        b = tuple(float(v) for v in self.b)
        if not all(math.isfinite(v) for v in b) or not math.isfinite(self.H0):
            raise ValueError("field coefficients must be finite")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "H0", float(self.H0))

    @property
    def degree(self):
        return len(self.b)

    @property
    def is_zero(self):
        return all(v == 0.0 for v in self.b)

    def axis(self, t):
        """``H(t e3)``."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for bk in reversed(self.b):
            out = (out + bk) * t
        return out + self.H0

    def g(self, t):
        """``H(t e3) - H(0)``."""
        return self.axis(t) - self.H0

    def value(self, p):
        p = np.asarray(p, dtype=float)
        z = p[..., 2]
        rho2 = p[..., 0] ** 2 + p[..., 1] ** 2
        out = np.full(z.shape, self.H0)
        for k, bk in enumerate(self.b, start=1):
            if bk == 0.0:
                continue
            for j, c in _zonal_coefficients(k):
                out = out + bk * c * z ** (k - 2 * j) * rho2**j
        return out

    def gradient(self, p):
        p = np.asarray(p, dtype=float)
        x1, x2, z = p[..., 0], p[..., 1], p[..., 2]
        rho2 = x1**2 + x2**2
        dz = np.zeros(z.shape)
        # d/dx_i of rho^(2j) = 2 j rho^(2j-2) x_i
        drad = np.zeros(z.shape)
        for k, bk in enumerate(self.b, start=1):
            if bk == 0.0:
                continue
            for j, c in _zonal_coefficients(k):
                e = k - 2 * j
                if e > 0:
                    dz = dz + bk * c * e * z ** (e - 1) * rho2**j
                if j > 0:
                    drad = drad + bk * c * z**e * 2 * j * rho2 ** (j - 1)
        return np.stack([drad * x1, drad * x2, dz], axis=-1)


def uniform_field(E0=1.0):
    """``H(x) = E0 x3``."""
    return AxialField((E0,))
