"""Special functions: Legendre sequences, polygamma, zeta at integers, Euler's constant.

Everything is real binary64. The polygamma evaluation shifts the argument
upward with the recurrence and finishes with the Bernoulli asymptotic series,
which is accurate to a few ulp once the argument exceeds 12.
"""

import math

import numpy as np

__all__ = [
    "EULER_GAMMA",
    "legendre_sequence",
    "polygamma",
    "digamma",
    "riemann_zeta_int",
    "euler_gamma",
]

EULER_GAMMA = 0.57721566490153286060651209

# B_2, B_4, ..., B_16
_BERNOULLI_EVEN = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
)

_SHIFT_THRESHOLD = 12.0


def euler_gamma():
    """Euler-Mascheroni constant."""
    return EULER_GAMMA


def legendre_sequence(x, N):
    """Legendre polynomials ``P_0(x) .. P_N(x)`` by upward recurrence.

    Parameters
    ----------
    x : float or numpy.ndarray
        Argument(s), each in [-1, 1].
    N : int
        Highest order, ``N >= 0``.

    Returns
    -------
    numpy.ndarray
        Shape ``(N + 1,) + np.shape(x)``.
    """
    if int(N) != N or N < 0:
        raise ValueError(f"order N must be a nonnegative integer, got {N!r}")
    N = int(N)
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0) or np.any(~np.isfinite(x)):
        raise ValueError("legendre_sequence requires |x| <= 1")
    out = np.empty((N + 1,) + x.shape)
    out[0] = 1.0
    if N >= 1:
        out[1] = x
    for n in range(1, N):
        out[n + 1] = ((2 * n + 1) * x * out[n] - n * out[n - 1]) / (n + 1)
    return out


def _polygamma_asymptotic(k, z):
    # Large-z expansion of psi_k; valid to ~1e-16 for z >= 12 and k <= ~10.
    if k == 0:
        s = math.log(z) - 0.5 / z
        z2 = z * z
        zp = z2
        for j, b in enumerate(_BERNOULLI_EVEN, start=1):
            s -= b / (2 * j * zp)
            zp *= z2
        return s
    # (-1)^{k+1} [ (k-1)!/z^k + k!/(2 z^{k+1}) + sum_j B_2j (2j+k-1)!/((2j)! z^{2j+k}) ]
    s = math.factorial(k - 1) / z**k + math.factorial(k) / (2.0 * z ** (k + 1))
    for j, b in enumerate(_BERNOULLI_EVEN, start=1):
        s += b * math.factorial(2 * j + k - 1) / (math.factorial(2 * j) * z ** (2 * j + k))
    return (-1) ** (k + 1) * s


def polygamma(k, z):
    """Polygamma function of order ``k`` for real ``z > 0``.

    ``psi_0`` is the digamma function. For ``k >= 1`` the sign of the result
    is ``(-1)**(k + 1)``.
    """
    if int(k) != k or k < 0:
        raise ValueError(f"order k must be a nonnegative integer, got {k!r}")
    k = int(k)
    z = float(z)
    if not z > 0.0 or not math.isfinite(z):
        raise ValueError(f"polygamma needs a finite z > 0, got {z!r}")
    # psi_k(z) = psi_k(z + 1) - (-1)^k k! / z^{k+1}
    shift = 0.0
    kfact = math.factorial(k)
    while z < _SHIFT_THRESHOLD:
        shift += 1.0 / z ** (k + 1)
        z += 1.0
    return _polygamma_asymptotic(k, z) - (-1) ** k * kfact * shift


def digamma(z):
    return polygamma(0, z)


def _zeta_euler_maclaurin(s, M=32):
    # direct sum to M-1 plus Euler-Maclaurin tail at M
    head = math.fsum(n ** (-s) for n in range(1, M))
    tail = M ** (1 - s) / (s - 1) + 0.5 * M ** (-s)
    # derivative terms: B_2j/(2j)! * s(s+1)...(s+2j-2) * M^{-s-2j+1}
    rising = s
    for j, b in enumerate(_BERNOULLI_EVEN, start=1):
        tail += b / math.factorial(2 * j) * rising * M ** (-s - 2 * j + 1)
        rising *= (s + 2 * j - 1) * (s + 2 * j)
    return head + tail


_ZETA_TABLE = {s: _zeta_euler_maclaurin(s) for s in range(2, 21)}
# exact closed forms where available
_ZETA_TABLE[2] = math.pi**2 / 6.0
_ZETA_TABLE[4] = math.pi**4 / 90.0
_ZETA_TABLE[6] = math.pi**6 / 945.0


def riemann_zeta_int(s):
    """Riemann zeta at an integer ``s >= 2``."""
    if int(s) != s or s < 2:
        raise ValueError(f"riemann_zeta_int needs an integer s >= 2, got {s!r}")
    s = int(s)
    if s in _ZETA_TABLE:
        return _ZETA_TABLE[s]
    return _zeta_euler_maclaurin(s)
