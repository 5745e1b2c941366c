"""Strang-split Crank-Nicolson integrator for

    i u_t = -u_xx - gamma delta(x) u - |u|^(p-1) u

on a truncated grid, with conservation monitoring and blowup detection.

The nonlinear half-steps are exact phase rotations; the linear step is the
Cayley transform of the Hermitian tridiagonal matrix ``-D^2 - (gamma/h) e_c e_c^T``
with Dirichlet ends.  Both preserve the trapezoid mass exactly (up to the
linear solve).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache

import numpy as np

from ._kernels import cn_solve, factor_cn, phase_rotate, strang_steps
from .grid import (
    FunctionalValues,
    Grid,
    GridFunction,
    MembershipReport,
    MembershipTolerance,
    UndefinedSet,
    functionals,
    membership_B,
    sample_soliton,
    scale,
)
from .soliton import SolitonParams, quantity_report

__all__ = [
    "SimConfig",
    "TraceRecord",
    "Trace",
    "Outcome",
    "SolverBreakdown",
    "InsufficientRecords",
    "Stepper",
    "step",
    "run",
    "virial_residual",
    "orbital_distance",
    "ExperimentReport",
    "blowup_experiment",
    "TRACE_HEADER",
]

log = logging.getLogger(__name__)

COMPLETED = "completed"
BLOWUP = "blowup_detected"
VIOLATION = "conservation_violation"

TRACE_HEADER = ["t", "mass", "energy", "grad_sq", "peak_sq", "boundary_sq", "virial", "P", "K", "in_B"]


class SolverBreakdown(ArithmeticError):
    """The Crank-Nicolson system could not be factorised or solved accurately."""


class InsufficientRecords(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    grid: Grid
    dt: float
    t_end: float
    params: SolitonParams
    blowup_gradient_factor: float = 10.0
    blowup_peak_factor: float = 8.0
    conservation_abort_rel: float = 1e-4
    linear_solver_tol: float = 1e-12
    record_stride: int = 10
    # 0 switches the focusing term off (linear delta problem)
    nonlinearity: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end!r}")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    # flat key=value text, one pair per line
    def to_text(self) -> str:
        d = {
            "L": self.grid.half_width,
            "n": self.grid.n,
            "p": self.params.p,
            "gamma": self.params.gamma,
            "omega": self.params.omega,
        }
        for f in fields(self):
            if f.name not in ("grid", "params"):
                d[f.name] = getattr(self, f.name)
        return "".join(f"{k}={v!r}\n" for k, v in d.items())

    @classmethod
    def from_text(cls, text: str, **overrides) -> "SimConfig":
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            raw[k] = v
        raw.update({k: str(v) for k, v in overrides.items() if v is not None})
        try:
            grid = Grid(float(raw.pop("L")), int(raw.pop("n")))
            params = SolitonParams(float(raw.pop("p")), float(raw.pop("gamma")), float(raw.pop("omega")))
            dt = float(raw.pop("dt"))
            t_end = float(raw.pop("t_end"))
        except KeyError as exc:
            raise ValueError(f"missing config key {exc.args[0]!r}") from None
        kw = {}
        types = {f.name: f.type for f in fields(cls)}
        for k, v in raw.items():
            if k not in types or k in ("grid", "params", "dt", "t_end"):
                raise ValueError(f"unknown config key {k!r}")
            kw[k] = int(v) if k == "record_stride" else float(v)
        return cls(grid=grid, dt=dt, t_end=t_end, params=params, **kw)


class Stepper:
    """Pre-factorised Strang step for a fixed grid, time step and equation."""

    def __init__(self, config: SimConfig):
        self.config = config
        g = config.grid
        h = g.h
        m = g.n - 2  # interior unknowns; both ends are held at 0
        self.expo = (config.params.p - 1.0) / 2.0
        self.coef = float(config.nonlinearity)
        self.off = -1.0 / h**2
        diag = np.full(m, 2.0 / h**2)
        diag[g.center - 1] -= config.params.gamma / h
        self.diag = diag
        self.z = 0.5j * config.dt
        self.lower, self.inv_piv = factor_cn(self.z, diag, self.off)
        if not np.all(np.isfinite(self.inv_piv)):
            raise SolverBreakdown("zero pivot in the Crank-Nicolson factorisation")

    def apply_h(self, u: np.ndarray) -> np.ndarray:
        """Discrete ``-d^2/dx^2 - gamma delta`` on the interior (Dirichlet ends)."""
        w = u[1:-1]
        out = np.zeros_like(u)
        out[1:-1] = self.diag * w + self.off * (u[:-2] + u[2:])
        return out

    def linear(self, u: np.ndarray, check: bool = False) -> np.ndarray:
        out = np.empty_like(u)
        cn_solve(u, self.z, self.diag, self.off, self.lower, self.inv_piv, out)
        if check:
            resid = (out + self.z * self.apply_h(out)) - (u - self.z * self.apply_h(u))
            ref = max(float(np.max(np.abs(u[1:-1]))), 1e-300)
            if float(np.max(np.abs(resid[1:-1]))) > self.config.linear_solver_tol * ref:
                raise SolverBreakdown("Crank-Nicolson residual above linear_solver_tol")
        return out

    def advance(self, u: np.ndarray, nsteps: int = 1, peak_sq_stop: float = np.inf):
        """Take up to ``nsteps`` steps; returns ``(u, steps_done)``.

        Stops after the first step whose peak ``|u|^2`` reaches ``peak_sq_stop``.
        ``u`` is modified in place or replaced.
        """
        cfg = self.config
        return strang_steps(
            u, int(nsteps), cfg.dt, self.coef, self.expo, self.z,
            self.diag, self.off, self.lower, self.inv_piv, float(peak_sq_stop),
        )


@lru_cache(maxsize=8)
def _stepper(config: SimConfig) -> Stepper:
    return Stepper(config)


def step(u: GridFunction, config: SimConfig) -> GridFunction:
    """One Strang step of size ``config.dt``."""
    if u.grid != config.grid:
        raise ValueError("u does not live on config.grid")
    st = _stepper(config)
    w = np.array(u.values)
    w[0] = w[-1] = 0.0
    phase_rotate(w, 0.5 * config.dt * st.coef, st.expo)
    w = st.linear(w, check=True)
    phase_rotate(w, 0.5 * config.dt * st.coef, st.expo)
    return GridFunction(u.grid, w)


@dataclass(frozen=True)
class TraceRecord:
    t: float
    mass: float
    energy: float
    grad_sq: float
    peak_sq: float
    boundary_sq: float
    virial: float
    P: float
    K: float
    in_B: bool | None

    def row(self):
        flag = "" if self.in_B is None else str(int(self.in_B))
        # shortest round-trip repr: the virial check differences these values twice
        return [repr(float(getattr(self, k))) for k in TRACE_HEADER[:-1]] + [flag]


@dataclass(frozen=True)
class Outcome:
    kind: str
    t_star: float | None = None
    reason: str = ""

    def to_json(self) -> str:
        return json.dumps({"outcome": self.kind, "t_star": self.t_star, "reason": self.reason})

    @classmethod
    def from_json(cls, text: str) -> "Outcome":
        d = json.loads(text)
        return cls(d["outcome"], d.get("t_star"), d.get("reason", ""))


@dataclass
class Trace:
    records: list = field(default_factory=list)
    outcome: Outcome = field(default_factory=lambda: Outcome(COMPLETED))
    final: GridFunction | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.records:
            w.writerow(r.row())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, outcome: Outcome | None = None) -> "Trace":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header!r}")
        recs = []
        for row in reader:
            if not row:
                continue
            nums = [float(v) for v in row[:-1]]
            flag = None if row[-1] == "" else bool(int(row[-1]))
            recs.append(TraceRecord(*nums, flag))
        return cls(recs, outcome or Outcome(COMPLETED))


def _record(t, v: GridFunction, cfg: SimConfig, ref: FunctionalValues | None, tol) -> TraceRecord:
    prm = cfg.params
    f = functionals(v, prm.p, prm.gamma, prm.omega)
    if cfg.nonlinearity != 1.0:
        # energy of the equation actually being solved
        lp_term = cfg.nonlinearity * f.lp / (prm.p + 1.0)
        energy = f.grad_sq / 2.0 - prm.gamma * f.boundary_sq / 2.0 - lp_term
    else:
        energy = f.energy
    a2 = np.abs(v.values) ** 2
    x = v.grid.x
    virial = float(v.grid.h * np.sum(x * x * a2))
    in_b = None
    if ref is not None:
        in_b = bool(membership_B(v, prm, tol, ref).member)
    return TraceRecord(
        t=t,
        mass=f.mass,
        energy=energy,
        grad_sq=f.grad_sq,
        peak_sq=float(a2.max()),
        boundary_sq=f.boundary_sq,
        virial=virial,
        P=f.virial_P,
        K=f.nehari_omega,
        in_B=in_b,
    )


def _blowup_reference(cfg: SimConfig):
    """Functionals of the sampled soliton when the blowup set is defined, else None."""
    prm = cfg.params
    if cfg.nonlinearity != 1.0 or prm.p <= 5.0 or prm.gamma <= 0.0:
        return None
    try:
        if not quantity_report(prm).energy > 0:
            return None
    except ValueError:
        return None
    return functionals(sample_soliton(cfg.grid, prm), prm.p, prm.gamma, prm.omega)


def run(u0: GridFunction, config: SimConfig, tol: MembershipTolerance | None = None) -> Trace:
    """Integrate to ``config.t_end`` or until blowup / loss of conservation.

    A record is kept every ``record_stride`` steps.  Blowup is declared when
    the gradient norm has grown by ``blowup_gradient_factor`` and the peak
    modulus by ``blowup_peak_factor`` while mass is still conserved to
    ``conservation_abort_rel``; mass or energy drift beyond that bound without
    the growth signature ends the run as a conservation violation.  Energy
    drift is measured against ``max(|E(u0)|, grad_sq(t)/2)``.
    """
    cfg = config
    if u0.grid != cfg.grid:
        raise ValueError("u0 does not live on config.grid")
    stepper = _stepper(cfg)
    ref = _blowup_reference(cfg)
    u = np.array(u0.values)
    u[0] = u[-1] = 0.0
    first = _record(0.0, GridFunction(cfg.grid, u), cfg, ref, tol)
    trace = Trace([first])
    m0, e0, g0, pk0 = first.mass, first.energy, first.grad_sq, first.peak_sq

    grad_stop = cfg.blowup_gradient_factor**2 * g0
    peak_stop = cfg.blowup_peak_factor**2 * pk0
    h = cfg.grid.h

    def finish(kind, t, reason):
        trace.outcome = Outcome(kind, t, reason)

    done = 0
    total = cfg.n_steps
    # once the peak has crossed its threshold, check the signature every step
    stepwise = False
    while done < total:
        if stepwise:
            chunk = 1
        else:
            chunk = min(cfg.record_stride - done % cfg.record_stride, total - done)
        u, taken = stepper.advance(u, chunk, peak_stop)
        done += taken
        t = done * cfg.dt
        at_record = done % cfg.record_stride == 0 or done == total
        if not (stepwise or taken < chunk or at_record):
            continue
        du = np.diff(u)
        grad = float(np.sum(du.real**2 + du.imag**2) / h)
        peak = float(np.max(u.real**2 + u.imag**2))
        stepwise = peak >= peak_stop
        grew = g0 > 0 and grad >= grad_stop and stepwise
        if not (grew or at_record):
            continue
        rec = _record(t, GridFunction(cfg.grid, u), cfg, ref, tol)
        trace.records.append(rec)
        mass_drift = abs(rec.mass - m0) / m0 if m0 > 0 else 0.0
        # E is a difference of terms of size grad_sq/2; its discretisation
        # error grows with them as the solution concentrates
        energy_drift = abs(rec.energy - e0) / max(abs(e0), 0.5 * rec.grad_sq, 1e-300)
        if grew and mass_drift <= cfg.conservation_abort_rel:
            finish(
                BLOWUP, t,
                f"grad_sq x{rec.grad_sq / g0:.3g}, peak x{math.sqrt(rec.peak_sq / pk0):.3g}, "
                f"mass drift {mass_drift:.2e}",
            )
            break
        if mass_drift > cfg.conservation_abort_rel or energy_drift > cfg.conservation_abort_rel:
            finish(VIOLATION, t, f"mass drift {mass_drift:.2e}, energy drift {energy_drift:.2e}")
            break
    trace.final = GridFunction(cfg.grid, u)
    log.debug("run finished: %s", trace.outcome)
    return trace


def virial_residual(trace: Trace) -> float:
    """``max |V'' - 8 P| / max(1, |8 P|)`` with ``V''`` from centred second differences."""
    recs = trace.records
    if trace.outcome.kind == BLOWUP:
        # the detection record is past the point where the run is trusted
        recs = recs[:-1]
    if len(recs) < 3:
        raise InsufficientRecords(f"need at least 3 records, got {len(recs)}")
    t = np.array([r.t for r in recs])
    tau = np.diff(t)
    if not np.allclose(tau, tau[0], rtol=1e-9, atol=0):
        # a final partial stride breaks uniform spacing; drop it
        keep = np.concatenate([[True], np.isclose(tau, tau[0], rtol=1e-9, atol=0)])
        stop = int(np.argmin(keep)) if not keep.all() else len(keep)
        recs = recs[:stop]
        if len(recs) < 3:
            raise InsufficientRecords("fewer than 3 uniformly spaced records")
        tau = np.diff([r.t for r in recs])
    tau = float(tau[0])
    V = np.array([r.virial for r in recs])
    P8 = 8.0 * np.array([r.P for r in recs[1:-1]])
    d2 = (V[2:] - 2.0 * V[1:-1] + V[:-2]) / tau**2
    return float(np.max(np.abs(d2 - P8) / np.maximum(1.0, np.abs(P8))))


def orbital_distance(u: GridFunction, phi: GridFunction) -> float:
    """Discrete H^1 distance from ``u`` to the orbit ``{e^{i theta} phi}``.

    The phase is the L^2-optimal one, ``arg <phi, u>``.
    """
    h = u.grid.h
    theta = np.angle(np.vdot(phi.values, u.values))
    d = u.values - np.exp(1j * theta) * phi.values
    dd = np.diff(d)
    return float(math.sqrt(h * np.sum(np.abs(d) ** 2) + np.sum(np.abs(dd) ** 2) / h))


@dataclass
class ExperimentReport:
    params: SolitonParams
    lam: float
    membership: MembershipReport | None
    undefined_set: bool
    trace: Trace | None = None

    @property
    def member(self) -> bool:
        return self.membership is not None and self.membership.member

    @property
    def outcome(self) -> Outcome | None:
        return None if self.trace is None else self.trace.outcome

    @property
    def t_star(self):
        return None if self.trace is None else self.trace.outcome.t_star

    @property
    def P_always_negative(self) -> bool:
        return self.trace is not None and all(r.P < 0 for r in self.trace.records)


def blowup_experiment(
    params: SolitonParams,
    lam: float,
    config: SimConfig,
    tol: MembershipTolerance | None = None,
    evolve: bool = True,
) -> ExperimentReport:
    """Evolve ``phi_omega^lam`` sampled on ``config.grid`` and report the outcome.

    Membership of the initial datum in the blowup set is recorded first; when
    the set is undefined (``E(phi_omega) <= 0``) the report says so and the
    run still goes ahead if ``evolve`` is true.
    """
    if not params.p > 5.0:
        raise ValueError(f"blowup experiments need p > 5, got {params.p!r}")
    if config.params != params:
        config = replace(config, params=params)
    phi = sample_soliton(config.grid, params)
    u0 = scale(phi, lam)
    try:
        membership = membership_B(u0, params, tol, phi)
        undefined = False
    except UndefinedSet:
        membership, undefined = None, True
    report = ExperimentReport(params, float(lam), membership, undefined)
    if evolve:
        report.trace = run(u0, config, tol)
    return report
