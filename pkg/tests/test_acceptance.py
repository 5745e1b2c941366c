"""Acceptance criteria 1-14.

Each test prints one ``[criterion N] PASS|FAIL ...`` line; the lines are also
repeated in the terminal summary by ``conftest.py``.
"""

import math
import time

import numpy as np
import pytest

from deltanls.evolve import BLOWUP, COMPLETED, SimConfig, blowup_experiment, run, virial_residual
from deltanls.grid import (
    Grid,
    GridFunction,
    ep_gap,
    functionals,
    membership_B,
    nehari_rescale,
    sample_soliton,
    scale,
)
from deltanls.soliton import SolitonParams, lambda_curvature, mass_derivative, quantity_report
from deltanls.special_integrals import incomplete_profile_integral, sech_power_tail_integral
from deltanls.thresholds import ThresholdKind, omega_threshold, sweep, threshold_xi

K0, K1, K2 = ThresholdKind.XI0, ThresholdKind.XI1, ThresholdKind.XI2
RESULTS = []


class Criterion:
    def __init__(self, number, title, budget):
        self.number, self.title, self.budget = number, title, budget

    def __enter__(self):
        self.detail = ""
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        ok = exc_type is None and elapsed < self.budget
        why = self.detail
        if exc_type is not None:
            why = f"{why} | {exc_type.__name__}: {exc}".strip(" |")
        elif elapsed >= self.budget:
            why = f"{why} | over time budget".strip(" |")
        line = f"[criterion {self.number:2d}] {'PASS' if ok else 'FAIL'} {self.title} ({elapsed:.2f}s / {self.budget:g}s) {why}"
        RESULTS.append(line)
        print(line)
        if exc_type is None and not ok:
            pytest.fail(line)
        return False


def test_c01_threshold_values():
    with Criterion(1, "xi1(6), xi2(6) digits", 1.0) as c:
        xi1, xi2 = threshold_xi(K1, 6), threshold_xi(K2, 6)
        c.detail = f"xi1={xi1:.8f} xi2={xi2:.8f}"
        assert 0.1370 <= xi1 < 0.1380
        assert 0.2790 <= xi2 < 0.2800


def test_c02_frequency_ordering():
    with Criterion(2, "omega2(6,1) < 4 < omega1(6,1)", 1.0) as c:
        om1, om2 = omega_threshold(K1, 6, 1), omega_threshold(K2, 6, 1)
        c.detail = f"omega2={om2:.6f} omega1={om1:.6f}"
        assert om2 < 4 < om1


def test_c03_sweep_ordering():
    with Criterion(3, "xi1 < xi2 < xi0 on (5,10] and [10,30]", 10.0) as c:
        rows = sweep(5.0 + 4.9 / 49, 10, 50) + sweep(10, 30, 50)
        bad = [r.p for r in rows if r.error or not (r.xi1 < r.xi2 < r.xi0)]
        c.detail = f"{len(rows)} rows, {len(bad)} out of order"
        assert not bad


def test_c04_energy_sign_equivalence():
    with Criterion(4, "sign E(phi) vs xi < xi1 on 20x20 sample", 5.0) as c:
        mismatches = checked = 0
        for p in np.linspace(5.5, 12, 20):
            xi1 = threshold_xi(K1, p)
            om1 = 1 / (4 * xi1 * xi1)
            for omega in np.geomspace(0.26, 400, 20):
                prm = SolitonParams(p, 1, omega)
                e = quantity_report(prm).energy
                if abs(e) > 1e-8:
                    checked += 1
                    mismatches += (e > 0) != (prm.xi < xi1)
                    mismatches += (e > 0) != (omega > om1)
        c.detail = f"{checked} points, {mismatches} mismatches"
        assert mismatches == 0


def test_c05_mass_derivative_sign_change():
    with Criterion(5, "d/domega mass changes sign at omega0", 5.0) as c:
        parts = []
        for p in (6, 8, 12):
            om0 = omega_threshold(K0, p, 1)
            lo = mass_derivative(SolitonParams(p, 1, om0 * (1 - 1e-4)))
            hi = mass_derivative(SolitonParams(p, 1, om0 * (1 + 1e-4)))
            parts.append(f"p={p}: {lo:+.2e}/{hi:+.2e}")
            assert lo > 0 > hi
        c.detail = "; ".join(parts)


def test_c06_lambda_curvature_sign_change():
    with Criterion(6, "d2/dlambda2 E(phi^lambda) changes sign at omega2", 5.0) as c:
        parts = []
        for p in (6, 8, 12):
            om2 = omega_threshold(K2, p, 1)
            lo = lambda_curvature(SolitonParams(p, 1, om2 * (1 - 1e-4)))
            hi = lambda_curvature(SolitonParams(p, 1, om2 * (1 + 1e-4)))
            parts.append(f"p={p}: {lo:+.2e}/{hi:+.2e}")
            assert lo > 0 > hi
        c.detail = "; ".join(parts)


def test_c07_sech_identity():
    with Criterion(7, "sech-power tail vs incomplete integral, 100 pairs", 5.0) as c:
        rng = np.random.default_rng(2024)
        worst = 0.0
        for a, beta in zip(rng.uniform(0.01, 0.99, 100), rng.uniform(0.1, 6.0, 100)):
            worst = max(worst, abs(sech_power_tail_integral(a, beta) - incomplete_profile_integral(a, beta - 1)))
        c.detail = f"max diff {worst:.2e}"
        assert worst <= 1e-10


def test_c08_stationary_residuals():
    with Criterion(8, "grid K and P of phi, second order", 5.0) as c:
        prm = SolitonParams(6, 1, 4)
        K, P = [], []
        for n in (12001, 24001, 48001):
            f = functionals(sample_soliton(Grid(30, n), prm), 6, 1, 4)
            K.append(abs(f.nehari_omega) / f.grad_sq)
            P.append(abs(f.virial_P) / f.grad_sq)
        rk = [K[0] / K[1], K[1] / K[2]]
        rp = [P[0] / P[1], P[1] / P[2]]
        c.detail = f"|K|/grad={K[0]:.2e} |P|/grad={P[0]:.2e} ratios K {rk[0]:.2f},{rk[1]:.2f} P {rp[0]:.2f},{rp[1]:.2f}"
        assert K[0] <= 1e-4 and P[0] <= 1e-4
        assert all(3.5 < r < 4.5 for r in rk + rp)


def test_c09_linear_bound_state():
    with Criterion(9, "linear delta bound state", 60.0) as c:
        prm = SolitonParams(6, 1, 1)
        g = Grid.from_step(30, 0.005)
        cfg = SimConfig(g, 1e-3, 5.0, prm, nonlinearity=0.0, record_stride=100)
        u0 = GridFunction(g, np.exp(-np.abs(g.x) / 2))
        tr = run(u0, cfg)
        # amplitude: |u(0,t)| against 1 at each record; phase rate from the final phase
        amp = max(abs(math.sqrt(r.boundary_sq) - 1.0) for r in tr.records)
        rate = np.angle(tr.final.values[g.center] * np.exp(-0.25j * 5.0)) / 5.0
        c.detail = f"amplitude dev {amp:.2e}, phase-rate err {abs(rate):.2e}"
        assert tr.outcome.kind == COMPLETED
        assert amp <= 1e-5 and abs(rate) <= 1e-4


def test_c10_virial_identity():
    with Criterion(10, "virial residual and its tau^2 decrease", 120.0) as c:
        prm = SolitonParams(3, 1, 4)
        g = Grid.from_step(20, 0.0025)
        u0 = GridFunction(g, 1.01 * sample_soliton(g, prm).values * np.exp(0.1j * g.x**2))
        res = []
        for dt in (1e-3, 5e-4):
            tr = run(u0, SimConfig(g, dt, 1.0, prm, record_stride=20))
            res.append(virial_residual(tr))
        c.detail = f"residual {res[0]:.2e} -> {res[1]:.2e} (x{res[0] / res[1]:.2f})"
        assert res[0] <= 1e-2
        assert 2.5 < res[0] / res[1] < 6


def _blowup_run(h, dt):
    prm = SolitonParams(6, 1, 20)
    g = Grid.from_step(6.5, h)
    cfg = SimConfig(g, dt, 0.2, prm, blowup_peak_factor=3.0, record_stride=int(round(1e-3 / dt)))
    return blowup_experiment(prm, 1.05, cfg)


def test_c11_blowup():
    with Criterion(11, "blowup of the dilated soliton above omega1", 600.0) as c:
        base = _blowup_run(1e-3, 2e-6)
        fine = _blowup_run(5e-4, 1e-6)
        recs = base.trace.records
        drift = abs(recs[-1].mass - recs[0].mass) / recs[0].mass
        change = abs(fine.t_star - base.t_star) / base.t_star
        c.detail = (
            f"member={base.member} outcome={base.outcome.kind} t*={base.t_star:.5f}/{fine.t_star:.5f} "
            f"(change {change:.1%}) mass drift {drift:.1e} P<0 throughout={base.P_always_negative and fine.P_always_negative}"
        )
        assert base.member and fine.member
        assert base.outcome.kind == BLOWUP and fine.outcome.kind == BLOWUP
        assert drift <= 1e-6
        assert base.P_always_negative and fine.P_always_negative
        assert change < 0.1


def test_c12_stable_control():
    with Criterion(12, "p=3 perturbed soliton stays bounded to t=20", 300.0) as c:
        prm = SolitonParams(3, 1, 4)
        g = Grid.from_step(30, 0.01)
        tr = run(sample_soliton(g, prm) * 1.01, SimConfig(g, 1e-3, 20.0, prm, record_stride=100))
        grad = tr.column("grad_sq")
        c.detail = f"outcome={tr.outcome.kind} max grad ratio {grad.max() / grad[0]:.4f}"
        assert tr.outcome.kind == COMPLETED
        assert grad.max() <= 2 * grad[0]


def _bump(g, rng):
    w, s = rng.uniform(0.05, 0.5), rng.uniform(-0.5, 0.5)
    return np.exp(-(((g.x - s) / w) ** 2)) * np.exp(1j * rng.uniform(0, 2 * np.pi))


def test_c13_ep_inequality():
    with Criterion(13, "E - P - E(phi) >= -1e-6 on 100 members", 60.0) as c:
        prm = SolitonParams(6, 1, 20)
        g = Grid(30, 12001)
        phi = sample_soliton(g, prm)
        ref = functionals(phi, 6, 1, 20)
        rng = np.random.default_rng(11)
        gaps, tries = [], 0
        while len(gaps) < 100 and tries < 2000:
            tries += 1
            lam = rng.uniform(1.005, 1.4)
            v = scale(phi, lam)
            if len(gaps) % 2:
                v = GridFunction(g, v.values + rng.uniform(0.0, 0.05) * _bump(g, rng))
                v = v * math.sqrt(ref.mass / functionals(v, 6, 1, 20).mass)
            if membership_B(v, prm, reference=ref).member:
                gaps.append(ep_gap(v, prm, reference=ref))
        c.detail = f"{len(gaps)} members from {tries} candidates, min gap {min(gaps):.3e}"
        assert len(gaps) == 100
        assert min(gaps) >= -1e-6


def test_c14_nehari_minimality():
    with Criterion(14, "S on the Nehari manifold >= d(omega) - 1e-4, 200 functions", 60.0) as c:
        prm = SolitonParams(6, 1, 4)
        d = quantity_report(prm).action
        g = Grid(30, 12001)
        phi = sample_soliton(g, prm)
        rng = np.random.default_rng(5)
        actions = []
        while len(actions) < 200:
            kind = len(actions) % 4
            if kind == 0:
                w = np.exp(-(((g.x - rng.normal(0, 0.5)) / rng.uniform(0.1, 3)) ** 2))
            elif kind == 1:
                w = 1 / np.cosh(rng.uniform(0.3, 5) * np.abs(g.x) + rng.uniform(0, 1))
            elif kind == 2:
                w = scale(phi, rng.uniform(0.6, 1.6)).values
            else:
                w = phi.values + rng.uniform(-0.3, 0.3) * _bump(g, rng)
            res = nehari_rescale(GridFunction(g, w), 6, 1, 4)
            if res is not None:
                actions.append(res[1])
        gap = min(actions) - d
        c.detail = f"min S - d = {gap:.3e}"
        assert gap >= -1e-4
