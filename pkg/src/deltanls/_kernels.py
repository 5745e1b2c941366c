"""Compiled inner loops of the Strang / Crank-Nicolson stepper."""

import numpy as np
from numba import njit


def factor_cn(z, diag, off):
    """Thomas factorisation of ``I + z H`` with ``H = tridiag(off, diag, off)``.

    No pivoting: the Hermitian part of ``I + i s H`` is the identity, which
    keeps every pivot away from zero.  Returns the multipliers and inverted
    pivots consumed by :func:`cn_solve`.
    """
    m = diag.size
    zo = z * off
    lower = np.zeros(m, dtype=complex)
    inv_piv = np.empty(m, dtype=complex)
    piv = 1.0 + z * diag[0]
    inv_piv[0] = 1.0 / piv
    for j in range(1, m):
        lower[j] = zo / piv
        piv = 1.0 + z * diag[j] - lower[j] * zo
        inv_piv[j] = 1.0 / piv
    return lower, inv_piv


@njit(cache=True)
def cn_solve(u, z, diag, off, lower, inv_piv, out):
    """``out = (I + z H)^-1 (I - z H) u`` on the interior; ends are taken as 0."""
    m = u.size - 2
    zo = z * off
    prev = 0j
    for j in range(m):
        w = u[j + 1]
        left = u[j] if j > 0 else 0j
        right = u[j + 2] if j < m - 1 else 0j
        r = w - z * diag[j] * w - zo * (left + right)
        prev = r - lower[j] * prev
        out[j + 1] = prev
    out[0] = 0j
    out[m + 1] = 0j
    nxt = 0j
    for j in range(m - 1, -1, -1):
        nxt = (out[j + 1] - zo * nxt) * inv_piv[j]
        out[j + 1] = nxt


@njit(cache=True)
def phase_rotate(u, theta, expo):
    """``u *= exp(i theta |u|^(2 expo))``; returns ``max |u|^2``."""
    peak = 0.0
    for j in range(u.size):
        a2 = u[j].real * u[j].real + u[j].imag * u[j].imag
        if a2 > peak:
            peak = a2
        if theta != 0.0 and a2 > 0.0:
            th = theta * a2**expo
            u[j] = u[j] * complex(np.cos(th), np.sin(th))
    return peak


@njit(cache=True)
def strang_steps(u, nsteps, dt, coef, expo, z, diag, off, lower, inv_piv, peak_sq_stop):
    """Advance ``nsteps`` Strang steps, fusing adjacent nonlinear half-steps.

    Stops early after the first completed step whose ``max |u|^2`` reaches
    ``peak_sq_stop``.  Returns ``(u, steps_done)``; ``u`` may be a new array.
    """
    if nsteps <= 0:
        return u, 0
    buf = np.empty_like(u)
    half = 0.5 * dt * coef
    phase_rotate(u, half, expo)
    for k in range(nsteps):
        cn_solve(u, z, diag, off, lower, inv_piv, buf)
        u, buf = buf, u
        if k == nsteps - 1:
            phase_rotate(u, half, expo)
            return u, nsteps
        peak = phase_rotate(u, 2.0 * half, expo)
        if peak >= peak_sq_stop:
            # back out the half rotation that belongs to the next step
            phase_rotate(u, -half, expo)
            return u, k + 1
    return u, nsteps
