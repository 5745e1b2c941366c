"""Endpoint-singular integrals of powers of ``1 - s**2``.

The workhorse is

    J(xi, beta) = int_xi^1 (1 - s^2)^beta ds,   0 <= xi <= 1, beta > -1,

which every closed-form norm of the delta-potential soliton reduces to.  With
``s = cos(t)`` the integral becomes ``int_0^T sin(t)^(2 beta + 1) dt`` with
``T = arccos(xi)``; the only possible singularity sits at ``t = 0``.  For
negative exponents a further power substitution removes it, and the result
is integrated by tanh-sinh quadrature with level doubling.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import integrate
from scipy.special import expit

__all__ = [
    "QuadResult",
    "incomplete_profile_integral",
    "sech_power_tail_integral",
    "BETA_FLOOR",
]

# beta must exceed -1 + BETA_FLOOR; closer to -1 the integrand is barely integrable
BETA_FLOOR = 1e-9

_MAX_LEVELS = 12
_LEVEL_TOL = 1e-14
# abscissae reach ~1e-300 from the endpoint at |u| = asinh(690 / pi)
_U_MAX = math.asinh(690.0 / math.pi)
_LOG2 = math.log(2.0)


class QuadResult(NamedTuple):
    value: float
    error: float
    levels: int


@lru_cache(maxsize=None)
def _tanh_sinh_nodes(level: int):
    """Unit-interval tanh-sinh rule with step ``2**-level``.

    Returns ``(nodes, weights)`` with the nodes generated as ``expit`` of the
    double-exponential map, so abscissae close to 0 keep full relative
    precision.  Nodes whose distance to either end underflows are dropped.
    """
    h = 2.0 ** -level
    k = math.ceil(_U_MAX / h)
    u = h * np.arange(-k, k + 1)
    z = math.pi * np.sinh(u)
    left = expit(z)
    right = expit(-z)
    weight = h * math.pi * np.cosh(u) * left * right
    keep = (left > 0.0) & (right > 0.0) & (weight > 0.0)
    out = (left[keep].copy(), weight[keep].copy())
    for a in out:
        a.flags.writeable = False
    return out


def _check_query(xi: float, beta: float) -> None:
    if not (0.0 <= xi <= 1.0):
        raise ValueError(f"xi must lie in [0, 1], got {xi!r}")
    if not beta > -1.0 + BETA_FLOOR:
        raise ValueError(f"beta must exceed -1 (+{BETA_FLOOR:g}), got {beta!r}")


def incomplete_profile_integral(xi, beta, full_output=False):
    """Return ``int_xi^1 (1 - s^2)^beta ds``.

    Parameters
    ----------
    xi : float
        Lower limit in ``[0, 1]``.
    beta : float
        Exponent, ``beta > -1``.  Negative exponents make the integrand blow
        up at ``s = 1``; the quadrature copes with that uniformly.
    full_output : bool
        If true, return a :class:`QuadResult` carrying the error estimate
        (difference of the last two refinement levels plus a rounding term).

    Raises
    ------
    ValueError
        If ``xi`` is outside ``[0, 1]`` or ``beta <= -1``.
    """
    xi = float(xi)
    beta = float(beta)
    _check_query(xi, beta)
    if xi == 1.0:
        res = QuadResult(0.0, 0.0, 0)
        return res if full_output else res.value

    # t = arccos(xi), computed without cancellation near xi = 1
    span = math.atan2(math.sqrt((1.0 - xi) * (1.0 + xi)), xi)
    expo = 2.0 * beta + 1.0

    if expo >= 0.0:
        def integrand(frac):
            return np.sin(span * frac) ** expo
        scale = span
    else:
        # w = t**(expo + 1) absorbs the t**expo singularity:
        # int_0^T sin(t)^e dt = 1/(e+1) int_0^{T^(e+1)} (sin t / t)^e dw
        power = expo + 1.0
        top = span ** power

        def integrand(frac):
            t = (top * frac) ** (1.0 / power)
            return np.where(t > 0.0, np.sin(t) / np.where(t > 0.0, t, 1.0), 1.0) ** expo

        scale = top / power

    prev = None
    value = err = 0.0
    eps = np.finfo(float).eps
    for level in range(_MAX_LEVELS + 1):
        left, weight = _tanh_sinh_nodes(level)
        terms = weight * integrand(left)
        value = scale * math.fsum(terms)
        rounding = 8.0 * eps * scale * float(np.sum(np.abs(terms)))
        if prev is not None:
            err = float(abs(value - prev) + rounding)
            if abs(value - prev) <= _LEVEL_TOL * max(1.0, abs(value)):
                break
        prev = value
    res = QuadResult(value, err, level)
    return res if full_output else res.value


def sech_power_tail_integral(a, beta):
    """Return ``int_{artanh a}^inf sech(y)^(2 beta) dy`` by direct quadrature.

    Independent of :func:`incomplete_profile_integral`; used to check the
    change of variables ``s = tanh(y)`` that links the two.
    """
    a = float(a)
    beta = float(beta)
    if not (0.0 < a < 1.0):
        raise ValueError(f"a must lie in (0, 1), got {a!r}")
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    y0 = math.atanh(a)
    # integrand decays like exp(-2 beta y); past y0 + 40/beta it is < 1e-34
    y1 = y0 + 40.0 / beta

    def f(y):
        return math.exp(2.0 * beta * (_LOG2 - y - math.log1p(math.exp(-2.0 * y))))

    head, _ = integrate.quad(f, y0, y1, epsabs=1e-15, epsrel=1e-13, limit=400)
    tail, _ = integrate.quad(f, y1, np.inf, epsabs=1e-15, epsrel=1e-13, limit=200)
    return head + tail
