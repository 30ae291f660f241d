"""Explicit time integration of the radial chemotaxis system.

The cell equation is the conservative form

    w_i du_i/dt = -(G_{i+1/2} - G_{i-1/2}) + w_i (kappa u_i - mu u_i^2)

where the face flux ``G`` combines drift ``u A v_r`` and diffusion
``-eps A u_r``.  By default ``G`` is the exponentially fitted
(Scharfetter-Gummel) flux, which reduces to upwinding when eps = 0 and is
second order for eps > 0; ``advection="upwind"`` selects upwind drift plus
central diffusion.  The chemotactic flux ``A v_r`` comes from summing the elliptic cell equations,
so both boundary fluxes vanish identically and the flux terms telescope in
the mass balance.  Time stepping is Heun's method (explicit trapezoidal
RK2) with a fresh elliptic solve per stage.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .elliptic import chemotactic_flux, radial_bound_margin, solve_v
from .grid import RadialGrid, build_grid
from .params import ModelParams

__all__ = [
    "SimState",
    "StepReport",
    "Trajectory",
    "FAULTS",
    "initial_state",
    "stable_dt",
    "step",
    "simulate",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_VERSION = 1

RUNNING, FINISHED, BLOWN_UP, DT_UNDERFLOW = "running", "finished", "blown_up", "dt_underflow"

# Deliberately broken variants of the stepper, used to test that the
# verification harness notices scheme defects.
FAULTS = ("flip_mu", "drop_logistic", "downwind", "leaky_boundary", "half_step")

Source = Callable[[float, np.ndarray], np.ndarray]


@dataclass
class SimState:
    grid: RadialGrid
    t: float
    u: np.ndarray
    v: np.ndarray
    step_count: int = 0
    status: str = RUNNING
    note: str = ""


@dataclass
class StepReport:
    dt: float
    cfl_advective: float
    cfl_diffusive: float
    cfl_reaction: float
    max_reaction_rate: float
    mass_before: float
    mass_after: float
    mass_law_residual: float
    clip_mass: float
    radial_margin: float


@dataclass
class Trajectory:
    state: SimState
    records: list = field(default_factory=list)
    steps: int = 0
    clip_mass: float = 0.0
    worst_mass_residual: float = 0.0
    worst_radial_margin: float = math.inf
    linf_max: float = 0.0
    cap: float = math.inf

    @property
    def status(self) -> str:
        return self.state.status


def initial_state(u0, g: RadialGrid, t0: float = 0.0) -> SimState:
    u0 = np.array(u0, dtype=float)
    return SimState(g, float(t0), u0, solve_v(u0, g))


def _rates(s: SimState, p: ModelParams):
    g = s.grid
    F = chemotactic_flux(s.u, s.v, g)
    vr_max = float(np.max(np.abs(F[1:-1]) / g.face_areas[1:-1])) if g.cells > 1 else 0.0
    umax = float(s.u.max())
    react = p.kappa + 2.0 * p.mu * umax + float(np.max(np.abs(s.v - s.u)))
    return vr_max, react


def _raw_dt(s: SimState, p: ModelParams) -> float:
    g = s.grid
    vr_max, react = _rates(s, p)
    limits = [math.inf]
    if vr_max > 0:
        limits.append(g.h / vr_max)
    if p.eps > 0:
        limits.append(g.h**2 / (2.0 * g.dim * p.eps))
    if react > 0:
        limits.append(1.0 / react)
    return p.cfl_safety * min(limits)


def stable_dt(s: SimState, p: ModelParams) -> float:
    """CFL-limited step, clamped to ``[dt_min, dt_max]``."""
    return float(min(max(_raw_dt(s, p), p.dt_min), p.dt_max))


def _bernoulli(x: np.ndarray) -> np.ndarray:
    """``x / (exp(x) - 1)`` with the removable singularity at 0 filled in."""
    out = np.ones_like(x)
    nz = x != 0
    with np.errstate(over="ignore"):
        out[nz] = x[nz] / np.expm1(x[nz])
    return out


def _fitted_flux(F, left, right, D):
    """Exponentially fitted drift-diffusion flux.

    ``F`` is the drift flux per unit density (``A v_r``) and ``D`` the
    diffusive conductance ``eps A / h``.  Tends to the upwind flux as
    ``F / D -> inf`` and to central differencing as ``F / D -> 0``.
    """
    P = F / D
    return D * (_bernoulli(-P) * left - _bernoulli(P) * right)


def _tendency(u, v, t, g: RadialGrid, p: ModelParams, source: Source | None, fault: str | None):
    """Return ``(du/dt, integral of the reaction and source terms)``."""
    F = chemotactic_flux(u, v, g)[1:-1]
    left, right = u[:-1], u[1:]
    G = np.zeros(g.cells + 1)
    if p.eps > 0 and p.advection == "fitted" and fault != "downwind":
        G[1:-1] = _fitted_flux(F, left, right, p.eps * g.face_areas[1:-1] / g.h)
    else:
        if fault == "downwind":
            up = np.where(F > 0, right, left)
        else:
            up = np.where(F > 0, left, right)
        G[1:-1] = up * F
        if p.eps > 0:
            G[1:-1] -= p.eps * g.face_areas[1:-1] * (right - left) / g.h
    if fault == "leaky_boundary":
        # outflow through r = R as if the exterior were empty
        G[-1] = p.eps * g.face_areas[-1] * u[-1] / g.h + g.face_areas[-1] * u[-1]
    mu = -p.mu if fault == "flip_mu" else p.mu
    reaction = p.kappa * u if fault == "drop_logistic" else p.kappa * u - mu * u * u
    if source is not None:
        reaction = reaction + source(t, g.centers)
    du = reaction - np.diff(G) / g.shell_volumes
    # the balance uses the unperturbed law so that faults show up as residuals
    law = p.kappa * u - p.mu * u * u
    if source is not None:
        law = law + source(t, g.centers)
    return du, float(np.dot(law, g.shell_volumes))


def step(
    s: SimState,
    p: ModelParams,
    dt: float,
    source: Source | None = None,
    fault: str | None = None,
    cap: float | None = None,
) -> tuple[SimState, StepReport]:
    """One Heun step.  Negative values are clipped to zero and the clipped mass reported."""
    if s.status != RUNNING:
        raise ValueError(f"cannot step a simulation with status {s.status!r}")
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}")
    g = s.grid
    limit = stable_dt(s, p)
    if dt > limit * (1 + 1e-9):
        raise ValueError(f"dt = {dt:.3e} exceeds the stable step {limit:.3e}")
    cap = p.cap_for(float(s.u.max())) if cap is None else cap
    w = g.shell_volumes

    vr_max, react = _rates(s, p)
    mass0 = float(np.dot(s.u, w))
    umax0 = float(s.u.max())
    margin = radial_bound_margin(chemotactic_flux(s.u, s.v, g) / np.where(g.face_areas > 0, g.face_areas, 1.0), umax0, g)

    k1, law1 = _tendency(s.u, s.v, s.t, g, p, source, fault)
    eff_dt = 0.5 * dt if fault == "half_step" else dt
    clip = 0.0
    with np.errstate(all="ignore"):
        ustar = s.u + eff_dt * k1
    if not np.all(np.isfinite(ustar)):
        return _blown(s, dt, "non-finite predictor"), _empty_report(dt, mass0)
    neg = ustar < 0
    if neg.any():
        clip += float(-np.dot(ustar[neg], w[neg]))
        ustar[neg] = 0.0
    vstar = solve_v(ustar, g)
    Fstar = chemotactic_flux(ustar, vstar, g)
    margin = min(margin, radial_bound_margin(Fstar / np.where(g.face_areas > 0, g.face_areas, 1.0), float(ustar.max()), g))
    k2, law2 = _tendency(ustar, vstar, s.t + dt, g, p, source, fault)
    with np.errstate(all="ignore"):
        unew = s.u + 0.5 * eff_dt * (k1 + k2)
    if not np.all(np.isfinite(unew)):
        return _blown(s, dt, "non-finite update"), _empty_report(dt, mass0)
    neg = unew < 0
    if neg.any():
        clip += float(-np.dot(unew[neg], w[neg]))
        unew[neg] = 0.0

    mass1 = float(np.dot(unew, w))
    predicted = mass0 + 0.5 * dt * (law1 + law2)
    residual = abs(mass1 - predicted) / max(abs(mass0), abs(mass1), np.finfo(float).tiny)

    t_new = s.t + dt
    umax = float(unew.max())
    if umax > cap:
        new = SimState(g, t_new, unew, s.v, s.step_count + 1, BLOWN_UP, f"max u = {umax:.6e} exceeds cap {cap:.3e}")
    else:
        new = SimState(g, t_new, unew, solve_v(unew, g), s.step_count + 1, RUNNING)
        if _raw_dt(new, p) < p.dt_min:
            new.status, new.note = DT_UNDERFLOW, "stable step fell below dt_min"

    report = StepReport(
        dt=dt,
        cfl_advective=dt * vr_max / g.h,
        cfl_diffusive=dt * 2.0 * g.dim * p.eps / g.h**2,
        cfl_reaction=dt * react,
        max_reaction_rate=p.kappa + p.mu * umax0,
        mass_before=mass0,
        mass_after=mass1,
        mass_law_residual=residual,
        clip_mass=clip,
        radial_margin=margin,
    )
    return new, report


def _blown(s: SimState, dt: float, why: str) -> SimState:
    return SimState(s.grid, s.t + dt, s.u, s.v, s.step_count + 1, BLOWN_UP, why)


def _empty_report(dt: float, mass: float) -> StepReport:
    return StepReport(dt, math.nan, math.nan, math.nan, math.nan, mass, math.nan, 0.0, 0.0, math.inf)


def simulate(
    u0,
    p: ModelParams,
    g: RadialGrid,
    t_end: float,
    record_every: float,
    sink=None,
    *,
    state: SimState | None = None,
    source: Source | None = None,
    fault: str | None = None,
    cap: float | None = None,
    max_steps: int | None = None,
) -> Trajectory:
    """Advance to ``t_end``, blow-up or step underflow.

    ``sink`` (optional) receives ``on_step(state, report)`` after each step
    and ``record(state)`` at every multiple of ``record_every`` and at the
    final time; whatever ``record`` returns is collected in the trajectory.
    Pass ``state`` (e.g. from a checkpoint) to resume instead of ``u0``.
    """
    if g.dim != p.dim or g.radius != p.radius:
        raise ValueError("grid and parameters disagree on dimension or radius")
    if not record_every > 0:
        raise ValueError("record_every must be positive")
    s = initial_state(u0, g) if state is None else state
    if cap is None:
        cap = p.cap_for(float(np.max(u0 if state is None else s.u)))
    traj = Trajectory(state=s, cap=cap, linf_max=float(s.u.max()))

    def emit(st):
        if sink is not None:
            rec = sink.record(st)
            if rec is not None:
                traj.records.append(rec)

    k = int(math.floor(s.t / record_every + 1e-9)) + 1
    if state is None:
        emit(s)
    while s.status == RUNNING:
        if s.t >= t_end:
            s.status = FINISHED
            break
        if max_steps is not None and traj.steps >= max_steps:
            break
        t_rec = k * record_every
        if abs(t_rec - t_end) <= 1e-9 * record_every:
            t_rec = t_end
        target = min(t_rec, t_end)
        dt = stable_dt(s, p)
        land = s.t + dt >= target - 1e-12 * max(abs(target), 1.0)
        if land:
            dt = target - s.t
        s, rep = step(s, p, dt, source=source, fault=fault, cap=cap)
        if land and s.status == RUNNING:
            s.t = target
        traj.steps += 1
        traj.clip_mass += rep.clip_mass
        traj.worst_mass_residual = max(traj.worst_mass_residual, rep.mass_law_residual)
        traj.worst_radial_margin = min(traj.worst_radial_margin, rep.radial_margin)
        traj.linf_max = max(traj.linf_max, float(s.u.max()))
        if sink is not None and hasattr(sink, "on_step"):
            sink.on_step(s, rep)
        if s.status != RUNNING:
            emit(s)
        elif land:
            emit(s)
            if target == t_rec:
                k += 1
    traj.state = s
    return traj


def save_checkpoint(path, s: SimState, p: ModelParams, extra: dict | None = None) -> None:
    """Write a versioned JSON checkpoint; floats are stored in hex for exact round-trips."""
    doc = {
        "format": "ksradial-checkpoint",
        "version": CHECKPOINT_VERSION,
        "params": {k: (float.hex(float(v)) if isinstance(v, float) else v) for k, v in p.to_dict().items()},
        "grid": s.grid.spec() | {"R": float.hex(float(s.grid.radius))},
        "t": float.hex(float(s.t)),
        "step_count": s.step_count,
        "status": s.status,
        "u": [float.hex(float(x)) for x in s.u],
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def _unhex(x):
    return float.fromhex(x) if isinstance(x, str) and x.startswith(("0x", "-0x", "inf", "-inf", "nan")) else x


def load_checkpoint(path) -> tuple[SimState, ModelParams, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "ksradial-checkpoint":
        raise ValueError(f"{path}: not a ksradial checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    params = ModelParams(**{k: _unhex(v) for k, v in doc["params"].items()})
    gs = doc["grid"]
    g = build_grid(gs["n"], _unhex(gs["R"]), gs["I"])
    u = np.array([float.fromhex(x) for x in doc["u"]])
    s = SimState(g, float.fromhex(doc["t"]), u, solve_v(u, g), doc["step_count"], doc["status"])
    return s, params, doc.get("extra", {})
