"""Closed-form standing wave of the 1-D NLS with an attractive delta well.

The profile is

    phi(x) = { (p+1) omega / 2 * sech^2( (p-1) sqrt(omega) / 2 * |x| + artanh xi ) }^(1/(p-1))

with ``xi = gamma / (2 sqrt(omega))``.  Its norms reduce to the incomplete
integrals of :mod:`deltanls.special_integrals`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .special_integrals import incomplete_profile_integral

__all__ = [
    "SolitonParams",
    "QuantityReport",
    "NearThresholdWarning",
    "profile_value",
    "profile_log",
    "mass_closed_form",
    "boundary_value_sq",
    "lp_norm_closed_form",
    "gradient_sq_quadrature",
    "quantity_report",
    "energy_sign",
    "energy_sign_residual",
    "lambda_curvature",
    "mass_derivative",
]

# xi closer than this to 1 means omega is practically at gamma^2/4
NEAR_THRESHOLD = 1e-6


class NearThresholdWarning(UserWarning):
    """omega sits so close to gamma^2/4 that the profile is nearly zero."""


@dataclass(frozen=True)
class SolitonParams:
    """Nonlinearity power ``p``, delta coupling ``gamma`` and frequency ``omega``.

    ``gamma <= 0`` is accepted so the simulator can build repulsive or free
    initial data from the profile formula; the closed-form norms require
    ``gamma >= 0``.
    """

    p: float
    gamma: float
    omega: float

    def __post_init__(self):
        for name in ("p", "gamma", "omega"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)
        if not self.p > 1.0:
            raise ValueError(f"p must exceed 1, got {self.p!r}")
        if not self.omega > self.gamma**2 / 4.0:
            raise ValueError(
                f"omega must exceed gamma^2/4 = {self.gamma**2 / 4.0:g}, got {self.omega!r}"
            )

    @property
    def xi(self) -> float:
        return self.gamma / (2.0 * math.sqrt(self.omega))

    @property
    def alpha(self) -> float:
        return (self.p - 1.0) / 2.0

    @property
    def log_amplitude(self) -> float:
        """``log((p+1) omega / 2)``."""
        return math.log((self.p + 1.0) * self.omega / 2.0)

    @property
    def near_threshold(self) -> bool:
        return self.xi > 1.0 - NEAR_THRESHOLD


@dataclass(frozen=True)
class QuantityReport:
    mass: float
    boundary_sq: float
    lp_norm: float
    grad_sq: float
    energy: float
    action: float
    nehari: float
    virial: float
    near_threshold: bool = False


def _require_attractive(params: SolitonParams) -> None:
    if params.gamma < 0.0:
        raise ValueError("closed-form norms need gamma >= 0")
    if params.near_threshold:
        warnings.warn(
            f"xi = {params.xi!r} is within {NEAR_THRESHOLD:g} of 1", NearThresholdWarning, stacklevel=3
        )


def profile_log(params: SolitonParams, x):
    """Natural log of the profile, safe for large ``|x|`` and large ``omega``."""
    x = np.asarray(x, dtype=float)
    k = params.alpha * math.sqrt(params.omega)
    # |z| because sech is even; gamma < 0 makes the shift negative
    z = np.abs(k * np.abs(x) + math.atanh(params.xi))
    log_sech = math.log(2.0) - z - np.log1p(np.exp(-2.0 * z))
    return (params.log_amplitude + 2.0 * log_sech) / (params.p - 1.0)


def profile_value(params: SolitonParams, x):
    """Profile ``phi_omega(x)``; vectorised over ``x``."""
    out = np.exp(profile_log(params, x))
    return float(out) if out.ndim == 0 else out


def _prefactor(params: SolitonParams, power: float) -> float:
    # 4 / ((p-1) sqrt(omega)) * ((p+1) omega / 2)^power
    return math.exp(
        math.log(4.0 / ((params.p - 1.0) * math.sqrt(params.omega))) + power * params.log_amplitude
    )


def mass_closed_form(params: SolitonParams) -> float:
    """``||phi_omega||_2^2``."""
    _require_attractive(params)
    b = 2.0 / (params.p - 1.0)
    return _prefactor(params, b) * incomplete_profile_integral(params.xi, b - 1.0)


def lp_norm_closed_form(params: SolitonParams) -> float:
    """``||phi_omega||_{p+1}^{p+1}``."""
    _require_attractive(params)
    b = 2.0 / (params.p - 1.0)
    return _prefactor(params, 1.0 + b) * incomplete_profile_integral(params.xi, b)


def boundary_value_sq(params: SolitonParams) -> float:
    """``|phi_omega(0)|^2 = ((p+1) omega / 2 * (1 - xi^2))^(2/(p-1))``."""
    xi = params.xi
    if abs(xi) >= 1.0:
        return 0.0
    return math.exp(2.0 / (params.p - 1.0) * (params.log_amplitude + math.log1p(-xi * xi)))


def gradient_sq_quadrature(params: SolitonParams) -> float:
    """``||phi_omega'||_2^2`` by adaptive quadrature of the differentiated profile.

    Uses ``phi' = -sqrt(omega) tanh(z) phi sign(x)`` and integrates in the
    sech argument ``z``; independent of the incomplete-integral closed forms.
    """
    _require_attractive(params)
    b = 2.0 / (params.p - 1.0)
    k = params.alpha * math.sqrt(params.omega)
    z0 = math.atanh(params.xi)

    def f(z):
        log_sech = math.log(2.0) - z - math.log1p(math.exp(-2.0 * z))
        return math.tanh(z) ** 2 * math.exp(2.0 * b * log_sech)

    z1 = z0 + 40.0 / b
    head, _ = integrate.quad(f, z0, z1, epsabs=1e-15, epsrel=1e-13, limit=400)
    tail, _ = integrate.quad(f, z1, np.inf, epsabs=1e-15, epsrel=1e-13, limit=200)
    return 2.0 * params.omega / k * math.exp(b * params.log_amplitude) * (head + tail)


def quantity_report(params: SolitonParams) -> QuantityReport:
    """All scalar quantities of ``phi_omega`` from closed forms.

    ``grad_sq`` comes from ``P(phi_omega) = 0``; ``nehari`` and ``virial`` are
    kept as residuals (the latter against :func:`gradient_sq_quadrature`) and
    should both vanish to quadrature accuracy.
    """
    p, gamma, omega = params.p, params.gamma, params.omega
    mass = mass_closed_form(params)
    lp = lp_norm_closed_form(params)
    bsq = boundary_value_sq(params)
    grad = gamma * bsq / 2.0 + params.alpha * lp / (p + 1.0)
    energy = grad / 2.0 - gamma * bsq / 2.0 - lp / (p + 1.0)
    nehari = grad + omega * mass - gamma * bsq - lp
    virial = gradient_sq_quadrature(params) - gamma * bsq / 2.0 - params.alpha * lp / (p + 1.0)
    return QuantityReport(
        mass=mass,
        boundary_sq=bsq,
        lp_norm=lp,
        grad_sq=grad,
        energy=energy,
        action=energy + omega * mass / 2.0,
        nehari=nehari,
        virial=virial,
        near_threshold=params.near_threshold,
    )


def energy_sign_residual(params: SolitonParams) -> float:
    """``(p-5)/(p-1) J(xi, 2/(p-1)) - xi (1-xi^2)^(2/(p-1))``; same sign as the energy."""
    p = params.p
    if not p > 5.0:
        raise ValueError(f"energy sign criterion needs p > 5, got {p!r}")
    _require_attractive(params)
    b = 2.0 / (p - 1.0)
    xi = params.xi
    return (p - 5.0) / (p - 1.0) * incomplete_profile_integral(xi, b) - xi * (1.0 - xi * xi) ** b


def energy_sign(params: SolitonParams, tol: float = 1e-12) -> int:
    """Sign of ``E(phi_omega)`` for ``p > 5``: -1, 0 (within ``tol``) or +1."""
    r = energy_sign_residual(params)
    if abs(r) <= tol:
        return 0
    return 1 if r > 0 else -1


def lambda_curvature(params: SolitonParams) -> float:
    """``d^2/dlambda^2 E(phi^lambda)`` at ``lambda = 1`` from the closed forms."""
    p = params.p
    lp = lp_norm_closed_form(params)
    grad = params.gamma * boundary_value_sq(params) / 2.0 + params.alpha * lp / (p + 1.0)
    return grad - (p - 1.0) * (p - 3.0) / (4.0 * (p + 1.0)) * lp


def mass_derivative(params: SolitonParams, rel_step: float = 1e-5) -> float:
    """Centred finite difference of :func:`mass_closed_form` in ``omega``."""
    lo_omega = params.gamma**2 / 4.0
    h = rel_step * (params.omega - lo_omega)
    hi = SolitonParams(params.p, params.gamma, params.omega + h)
    lo = SolitonParams(params.p, params.gamma, params.omega - h)
    return (mass_closed_form(hi) - mass_closed_form(lo)) / (2.0 * h)
