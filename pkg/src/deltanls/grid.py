"""Uniform symmetric grids and discrete versions of the NLS functionals.

Grids always have an odd node count so the delta sits exactly on the centre
node.  Mass uses the trapezoid rule (the quantity the time stepper conserves
exactly), the ``L^{p+1}`` term composite Simpson on each half-line, and the
gradient forward differences.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .soliton import SolitonParams, profile_value, quantity_report

__all__ = [
    "Grid",
    "GridFunction",
    "FunctionalValues",
    "LambdaLandscape",
    "MembershipTolerance",
    "MembershipReport",
    "TruncationWarning",
    "NoLandscape",
    "UndefinedSet",
    "functionals",
    "sample_soliton",
    "scale",
    "scaled_energy",
    "lambda_landscape",
    "membership_B",
    "ep_gap",
    "nehari_rescale",
    "to_csv",
    "from_csv",
]


class TruncationWarning(UserWarning):
    """Non-negligible mass lies outside the computational window."""


class NoLandscape(ValueError):
    """``lambda -> E(v^lambda)`` lacks the four-point structure (needs E(v) > 0, gamma > 0)."""


class UndefinedSet(ValueError):
    """The blowup set is only defined when ``E(phi_omega) > 0``."""


@dataclass(frozen=True)
class Grid:
    half_width: float
    n: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width!r}")
        if self.n < 3 or self.n % 2 == 0:
            raise ValueError(f"node count must be odd and >= 3, got {self.n!r}")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.n - 1)

    @property
    def center(self) -> int:
        return (self.n - 1) // 2

    @property
    def x(self) -> np.ndarray:
        # built from integer offsets so the centre node is exactly 0
        return self.h * np.arange(-self.center, self.center + 1, dtype=float)

    @classmethod
    def from_step(cls, half_width: float, h: float) -> "Grid":
        m = round(half_width / h)
        return cls(m * h, 2 * m + 1)


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, f) -> "GridFunction":
        return cls(grid, f(grid.x))

    def __mul__(self, k):
        return GridFunction(self.grid, self.values * k)

    __rmul__ = __mul__

    @property
    def center_value(self) -> complex:
        return complex(self.values[self.grid.center])

    def edge_ratio(self) -> float:
        """Largest boundary magnitude relative to the peak."""
        a = np.abs(self.values)
        peak = a.max()
        return 0.0 if peak == 0 else float(max(a[0], a[-1]) / peak)


def sample_soliton(grid: Grid, params: SolitonParams) -> GridFunction:
    return GridFunction(grid, profile_value(params, grid.x))


def _trapezoid(f: np.ndarray, h: float) -> float:
    return float(h * (f.sum() - 0.5 * (f[0] + f[-1])))


def _simpson_halves(f: np.ndarray, h: float, center: int) -> float:
    # panels meet at the origin so the kink of |v|^(p+1) never sits inside one
    return float(simpson(f[: center + 1], dx=h) + simpson(f[center:], dx=h))


@dataclass(frozen=True)
class FunctionalValues:
    mass: float
    grad_sq: float
    boundary_sq: float
    lp: float
    energy: float
    action_omega: float
    nehari_omega: float
    virial_P: float


def compose(mass, grad_sq, boundary_sq, lp, p, gamma, omega) -> FunctionalValues:
    alpha = (p - 1.0) / 2.0
    energy = grad_sq / 2.0 - gamma * boundary_sq / 2.0 - lp / (p + 1.0)
    return FunctionalValues(
        mass=mass,
        grad_sq=grad_sq,
        boundary_sq=boundary_sq,
        lp=lp,
        energy=energy,
        action_omega=energy + omega * mass / 2.0,
        nehari_omega=grad_sq + omega * mass - gamma * boundary_sq - lp,
        virial_P=grad_sq - gamma * boundary_sq / 2.0 - alpha * lp / (p + 1.0),
    )


def functionals(v: GridFunction, p: float, gamma: float, omega: float) -> FunctionalValues:
    """Discrete mass, gradient, boundary and ``L^{p+1}`` terms and their combinations.

    The ``L^{p+1}`` integrand of a soliton has a derivative jump at the origin
    ``p + 1`` times sharper than the mass integrand; plain trapezoid error
    there dominates everything else, hence Simpson on each half-line.
    """
    h = v.grid.h
    u = v.values
    a2 = u.real**2 + u.imag**2
    mass = _trapezoid(a2, h)
    lp = _simpson_halves(a2 ** ((p + 1.0) / 2.0), h, v.grid.center)
    du = np.diff(u)
    grad = float(np.sum(du.real**2 + du.imag**2) / h)
    return compose(mass, grad, abs(v.center_value) ** 2, lp, p, gamma, omega)


def scale(v: GridFunction, lam: float) -> GridFunction:
    """Mass-preserving dilation ``lam^(1/2) v(lam x)`` resampled on the same grid.

    Each half-line is interpolated by its own cubic spline so a derivative jump
    at the origin is not smeared.  Points mapped outside the window get 0.
    Emits :class:`TruncationWarning` when ``lam < 1`` pushes more than 1e-8 of
    the mass past the edges.
    """
    lam = float(lam)
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    g = v.grid
    if lam == 1.0:
        return GridFunction(g, v.values)
    x = g.x
    c = g.center
    u = v.values
    out = np.zeros(g.n, dtype=complex)
    for sl in (slice(c, None), slice(None, c + 1)):
        xs, us = x[sl], u[sl]
        # CubicSpline wants increasing abscissae; both halves already are
        spline = CubicSpline(xs, us)
        target = lam * xs
        inside = (target >= xs[0]) & (target <= xs[-1])
        out[sl][inside] = spline(target[inside])
    out *= math.sqrt(lam)

    if lam < 1.0:
        a2 = np.abs(u) ** 2
        total = _trapezoid(a2, g.h)
        lost = float(g.h * a2[np.abs(x) > lam * g.half_width].sum())
        if total > 0 and lost > 1e-8 * total:
            warnings.warn(
                f"scaling by {lam:g} moves {lost / total:.2e} of the mass outside the grid",
                TruncationWarning,
                stacklevel=2,
            )
    return GridFunction(g, out)


def scaled_energy(f: FunctionalValues, p: float, gamma: float, lam):
    """``E(v^lam) = a lam^2 - b lam - c lam^alpha`` from the functionals of ``v``."""
    lam = np.asarray(lam, dtype=float)
    alpha = (p - 1.0) / 2.0
    return f.grad_sq / 2.0 * lam**2 - gamma * f.boundary_sq / 2.0 * lam - f.lp / (p + 1.0) * lam**alpha


@dataclass(frozen=True)
class LambdaLandscape:
    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float
    a: float
    b: float
    c: float
    alpha: float

    def energy(self, lam):
        lam = np.asarray(lam, dtype=float)
        return self.a * lam**2 - self.b * lam - self.c * lam**self.alpha

    def slope(self, lam):
        lam = np.asarray(lam, dtype=float)
        return 2.0 * self.a * lam - self.b - self.c * self.alpha * lam ** (self.alpha - 1.0)


def _expand_up(f, start):
    hi = start
    for _ in range(200):
        hi *= 2.0
        if f(hi) < 0:
            return hi
    raise NoLandscape("could not bracket the large-lambda root")


def lambda_landscape(v: GridFunction, p: float, gamma: float) -> LambdaLandscape:
    """Critical points ``lambda1 < lambda3`` and zeros ``lambda2 < lambda4`` of ``lambda -> E(v^lambda)``."""
    alpha = (p - 1.0) / 2.0
    if not alpha > 2.0:
        raise NoLandscape(f"needs p > 5, got {p!r}")
    f = functionals(v, p, gamma, 0.0)
    a, b, c = f.grad_sq / 2.0, gamma * f.boundary_sq / 2.0, f.lp / (p + 1.0)
    if not (b > 0 and f.energy > 0):
        raise NoLandscape(f"needs E(v) > 0 and gamma |v(0)|^2 > 0 (E = {f.energy!r}, b = {b!r})")
    land = LambdaLandscape(0, 0, 0, 0, a, b, c, alpha)
    # E'' vanishes once, at lam_star: E' rises on (0, lam_star), falls afterwards
    lam_star = (2.0 * a / (c * alpha * (alpha - 1.0))) ** (1.0 / (alpha - 2.0))
    if not land.slope(lam_star) > 0:
        raise NoLandscape("E(v^lambda) has no increasing stretch")
    lam1 = brentq(land.slope, 0.0, lam_star, xtol=1e-15, rtol=1e-15)
    lam3 = brentq(land.slope, lam_star, _expand_up(land.slope, lam_star), xtol=1e-15, rtol=1e-15)
    lam2 = brentq(land.energy, lam1, lam3, xtol=1e-15, rtol=1e-15)
    lam4 = brentq(land.energy, lam3, _expand_up(land.energy, lam3), xtol=1e-15, rtol=1e-15)
    return LambdaLandscape(lam1, lam2, lam3, lam4, a, b, c, alpha)


@dataclass(frozen=True)
class MembershipTolerance:
    mass_rel: float = 1e-5
    margin: float = 1e-10


@dataclass(frozen=True)
class MembershipReport:
    energy_ok: bool
    mass_ok: bool
    virial_ok: bool
    nehari_ok: bool
    energy: float
    energy_ref: float
    mass_rel_err: float
    virial_P: float
    nehari: float

    @property
    def member(self) -> bool:
        return self.energy_ok and self.mass_ok and self.virial_ok and self.nehari_ok

    def __bool__(self):
        return self.member


def _reference(v: GridFunction, params: SolitonParams, reference):
    if reference is None:
        reference = sample_soliton(v.grid, params)
    if isinstance(reference, GridFunction):
        reference = functionals(reference, params.p, params.gamma, params.omega)
    return reference


def membership_B(
    v: GridFunction,
    params: SolitonParams,
    tol: MembershipTolerance | None = None,
    reference: FunctionalValues | GridFunction | None = None,
) -> MembershipReport:
    """Test ``0 < E(v) < E(phi)``, equal mass, ``P(v) < 0`` and ``K(v) < 0``.

    The comparison values for ``phi_omega`` default to the soliton sampled on
    ``v``'s own grid, so discretisation error cancels.  Strict inequalities
    are tested against ``tol.margin``.

    Raises
    ------
    UndefinedSet
        If ``E(phi_omega) <= 0`` (closed form).
    """
    tol = tol or MembershipTolerance()
    if not quantity_report(params).energy > 0:
        raise UndefinedSet(f"E(phi_omega) <= 0 at {params}")
    ref = _reference(v, params, reference)
    f = functionals(v, params.p, params.gamma, params.omega)
    rel = abs(f.mass - ref.mass) / ref.mass
    return MembershipReport(
        energy_ok=tol.margin < f.energy < ref.energy - tol.margin,
        mass_ok=rel <= tol.mass_rel,
        virial_ok=f.virial_P < -tol.margin,
        nehari_ok=f.nehari_omega < -tol.margin,
        energy=f.energy,
        energy_ref=ref.energy,
        mass_rel_err=rel,
        virial_P=f.virial_P,
        nehari=f.nehari_omega,
    )


def ep_gap(
    v: GridFunction,
    params: SolitonParams,
    tol: MembershipTolerance | None = None,
    reference: FunctionalValues | GridFunction | None = None,
) -> float:
    """``E(v) - P(v) - E(phi_omega)`` for a member ``v``; non-negative in theory."""
    ref = _reference(v, params, reference)
    rep = membership_B(v, params, tol, ref)
    if not rep.member:
        raise ValueError(f"v is not in the blowup set: {rep}")
    return rep.energy - rep.virial_P - ref.energy


def nehari_rescale(w: GridFunction, p: float, gamma: float, omega: float):
    """Amplitude ``mu > 0`` with ``K(mu w) = 0`` and the action there.

    Returns ``None`` when the quadratic part of ``K`` is not positive (no such
    ``mu``).
    """
    f = functionals(w, p, gamma, omega)
    quad = f.grad_sq + omega * f.mass - gamma * f.boundary_sq
    if not (quad > 0 and f.lp > 0):
        return None
    mu = (quad / f.lp) ** (1.0 / (p - 1.0))
    action = mu**2 * quad * (0.5 - 1.0 / (p + 1.0))
    return mu, action


def to_csv(v: GridFunction) -> str:
    """``x,re,im`` CSV at 15 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "re", "im"])
    for xi, u in zip(v.grid.x, v.values):
        w.writerow([f"{xi:.15g}", f"{u.real:.15g}", f"{u.imag:.15g}"])
    return buf.getvalue()


def from_csv(text: str) -> GridFunction:
    """Inverse of :func:`to_csv`; the grid is rebuilt from the ``x`` column."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or set(rows[0]) != {"x", "re", "im"}:
        raise ValueError("expected a CSV with header x,re,im")
    x = np.array([float(r["x"]) for r in rows])
    vals = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
    grid = Grid(-float(x[0]), len(x))
    if abs(x[-1] + x[0]) > 1e-9 * abs(x[0]) or not np.allclose(x, grid.x, rtol=0, atol=1e-9 * grid.h + 1e-13):
        raise ValueError("x column is not a uniform grid symmetric about 0")
    return GridFunction(grid, vals)
