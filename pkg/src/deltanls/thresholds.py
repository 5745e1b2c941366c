"""Critical values of ``xi = gamma / (2 sqrt(omega))`` and regime labels.

For ``p > 5`` three scalar equations in ``xi`` each have a single root in
``(0, 1)``:

* ``XI0``: sign change of ``d/domega ||phi_omega||^2``
* ``XI1``: sign change of ``E(phi_omega)``
* ``XI2``: sign change of ``d^2/dlambda^2 E(phi_omega^lambda)`` at ``lambda = 1``

and ``omega_j = gamma^2 / (4 xi_j^2)``.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass

import numpy as np

from .soliton import SolitonParams
from .special_integrals import incomplete_profile_integral

__all__ = [
    "ThresholdKind",
    "NoSignChange",
    "MultipleRoots",
    "RegimeClassification",
    "residual",
    "bisect",
    "threshold_xi",
    "omega_threshold",
    "scan_sign_changes",
    "classify",
    "SweepRow",
    "sweep",
    "sweep_csv",
]

BRACKET_EPS = 1e-10
XTOL = 1e-13


class ThresholdKind(enum.Enum):
    XI0 = "xi0"
    XI1 = "xi1"
    XI2 = "xi2"


class NoSignChange(ArithmeticError):
    """The residual has the same sign at both ends of the bracket."""


class MultipleRoots(ArithmeticError):
    """A dense scan found more than one sign change."""


def _check_p(p: float) -> None:
    if not p > 5.0:
        raise ValueError(f"thresholds exist only for p > 5, got p = {p!r}")


def residual(kind: ThresholdKind, p: float, xi: float) -> float:
    """Threshold residual; positive for ``xi`` below the root."""
    b = 2.0 / (p - 1.0)
    if kind is ThresholdKind.XI0:
        return (p - 5.0) / (p - 1.0) * incomplete_profile_integral(xi, b - 1.0) - xi * (
            1.0 - xi * xi
        ) ** (b - 1.0)
    if kind is ThresholdKind.XI1:
        coef = (p - 5.0) / (p - 1.0)
    elif kind is ThresholdKind.XI2:
        coef = (p - 5.0) / 2.0
    else:
        raise TypeError(f"unknown threshold kind {kind!r}")
    return coef * incomplete_profile_integral(xi, b) - xi * (1.0 - xi * xi) ** b


def bisect(f, lo, hi, xtol=XTOL, flo=None, fhi=None):
    """Plain bisection on a sign-change bracket; returns the midpoint of the final bracket."""
    flo = f(lo) if flo is None else flo
    fhi = f(hi) if fhi is None else fhi
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise NoSignChange(f"f({lo!r}) = {flo!r} and f({hi!r}) = {fhi!r} share a sign")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return 0.5 * (lo + hi)


def threshold_xi(kind: ThresholdKind, p: float) -> float:
    """Root in ``(0, 1)`` of the residual selected by ``kind``.

    Raises
    ------
    ValueError
        For ``p <= 5``.
    NoSignChange
        If the residual does not change sign on ``[1e-10, 1 - 1e-10]``.
    """
    kind = ThresholdKind(kind)
    p = float(p)
    _check_p(p)
    return bisect(lambda x: residual(kind, p, x), BRACKET_EPS, 1.0 - BRACKET_EPS)


def omega_threshold(kind: ThresholdKind, p: float, gamma: float) -> float:
    """``gamma^2 / (4 xi_kind(p)^2)``."""
    if not gamma > 0.0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    xi = threshold_xi(kind, p)
    return gamma * gamma / (4.0 * xi * xi)


def scan_sign_changes(kind: ThresholdKind, p: float, n: int = 2001):
    """Locations of residual sign changes on a uniform scan of ``(0, 1)``.

    Returns a list of ``(lo, hi)`` brackets; more than one entry means the
    root is not unique at this ``p``.
    """
    kind = ThresholdKind(kind)
    _check_p(p)
    xs = np.linspace(BRACKET_EPS, 1.0 - BRACKET_EPS, n)
    signs = np.sign([residual(kind, p, x) for x in xs])
    idx = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
    return [(float(xs[i]), float(xs[i + 1])) for i in idx]


@dataclass(frozen=True)
class RegimeClassification:
    p: float
    gamma: float
    omega: float
    xi: float
    label: str
    xi0: float | None = None
    xi1: float | None = None
    xi2: float | None = None
    omega0: float | None = None
    omega1: float | None = None
    omega2: float | None = None
    mass_derivative_negative: bool | None = None
    energy_positive: bool | None = None
    slope_condition: bool | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


STABLE = "stable"
ORBITALLY_UNSTABLE = "orbitally_unstable"
CONJECTURED_STRONG = "orbitally_unstable_conjectured_strong"
STRONGLY_UNSTABLE = "strongly_unstable"


def classify(params: SolitonParams) -> RegimeClassification:
    """Place ``(p, gamma, omega)`` in the stability picture.

    ``p <= 5`` is always stable.  For ``p > 5``: stable below ``omega0``,
    orbitally unstable on ``[omega0, omega2]``, conjecturally strongly
    unstable on ``(omega2, omega1]`` and strongly unstable above ``omega1``.
    """
    p, gamma, omega = params.p, params.gamma, params.omega
    if not gamma > 0.0:
        raise ValueError(f"classification needs gamma > 0, got {gamma!r}")
    xi = params.xi
    if p <= 5.0:
        return RegimeClassification(p, gamma, omega, xi, STABLE)

    xi0, xi1, xi2 = (threshold_xi(k, p) for k in ThresholdKind)
    om0, om1, om2 = (gamma * gamma / (4.0 * x * x) for x in (xi0, xi1, xi2))
    if omega > om1:
        label = STRONGLY_UNSTABLE
    elif omega > om2:
        label = CONJECTURED_STRONG
    elif omega >= om0:
        label = ORBITALLY_UNSTABLE
    else:
        label = STABLE
    return RegimeClassification(
        p, gamma, omega, xi, label,
        xi0=xi0, xi1=xi1, xi2=xi2,
        omega0=om0, omega1=om1, omega2=om2,
        mass_derivative_negative=xi < xi0,
        energy_positive=xi < xi1,
        slope_condition=xi < xi2,
    )


@dataclass(frozen=True)
class SweepRow:
    p: float
    xi0: float = math.nan
    xi1: float = math.nan
    xi2: float = math.nan
    error: str | None = None


def sweep(lo: float, hi: float, n: int, kinds=tuple(ThresholdKind)) -> list[SweepRow]:
    """Thresholds on ``n`` uniformly spaced ``p`` values in ``[lo, hi]``.

    A failing row records its error and the sweep carries on.
    """
    if not lo > 5.0:
        raise ValueError(f"sweep needs lo > 5, got {lo!r}")
    if n < 2 or hi <= lo:
        raise ValueError("sweep needs n >= 2 and hi > lo")
    kinds = [ThresholdKind(k) for k in kinds]
    rows = []
    for p in np.linspace(lo, hi, n):
        p = float(p)
        vals = {}
        error = None
        for k in kinds:
            try:
                vals[k.value] = threshold_xi(k, p)
            except (ArithmeticError, ValueError) as exc:
                error = f"{k.value}: {exc}"
        rows.append(SweepRow(p, error=error, **vals))
    return rows


def sweep_csv(rows) -> str:
    """``p,xi0,xi1,xi2`` CSV with 15 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "xi0", "xi1", "xi2"])
    for r in rows:
        w.writerow([f"{v:.15g}" for v in (r.p, r.xi0, r.xi1, r.xi2)])
    return buf.getvalue()
