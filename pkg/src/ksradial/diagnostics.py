"""Per-run functionals and the bounds they are compared against.

A :class:`Recorder` is handed to :func:`ksradial.evolution.simulate` as its
sink.  After every step it accumulates time integrals with the trapezoid
rule (the same rule Heun's method uses), and at each recording time it
produces a :class:`DiagnosticRecord`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .elliptic import flux_gradient_v, radial_bound_margin
from .grid import RadialGrid, grad_q_functional, integrate
from .oracles import gradient_coefficient, logistic_bound, lp_power_bound, mass_bound
from .params import ModelParams

__all__ = ["DiagnosticRecord", "Recorder", "record_columns", "record_row", "lp_rhs_terms"]


@dataclass
class DiagnosticRecord:
    t: float
    step: int
    status: str
    dt: float
    mass: float
    linf: float
    r_at_max: float
    umin: float
    vmin: float
    grad_q: float
    grad_q_eta: float
    upow: dict
    lp_norm: dict
    bound_mass: float
    bound_lp: dict
    bound_linf: float
    bound_grad_q: float
    dlp: dict
    rhs_int: dict
    rhs_scale: dict
    window_dt: float
    clip_mass: float
    mass_law_residual: float
    radial_margin: float
    margins: dict = field(default_factory=dict)


def lp_rhs_terms(u: np.ndarray, g: RadialGrid, p: float, params: ModelParams) -> tuple[float, float]:
    """Right-hand side of the ``int u^p`` differential inequality, moved to one side.

    Returns ``(value, scale)`` with
    ``value = p kappa int u^p - (1 - p + mu p) int u^(p+1) - p (p-1) eps int u^(p-2) |grad u|^2``
    and ``scale`` the sum of the absolute values of the three terms.
    """
    w = g.shell_volumes
    up = u**p
    a = p * params.kappa * float(np.dot(up, w))
    b = (1.0 - p + params.mu * p) * float(np.dot(up * u, w))
    c = 0.0
    if params.eps > 0 and p != 1:
        d = np.diff(u) / g.h
        m = 0.5 * (u[:-1] + u[1:])
        weight = np.zeros_like(m)
        pos = m > 0
        weight[pos] = m[pos] ** (p - 2.0)
        c = p * (p - 1.0) * params.eps * float(np.dot(g.face_areas[1:-1] * g.h * weight, d * d))
    return a - b - c, abs(a) + abs(b) + abs(c)


class Recorder:
    """Builds :class:`DiagnosticRecord` objects for one run.

    ``K_hat`` (elliptic constant) enables the gradient bound; ``variant``
    selects its growth coefficient (``"5q"`` or ``"reduced"``).
    """

    def __init__(
        self,
        params: ModelParams,
        g: RadialGrid,
        u0,
        lp_set=(1.0, 2.0),
        K_hat: float | None = None,
        variant: str = "5q",
        extra_p=(),
    ):
        self.params = params
        self.grid = g
        self.lp_set = tuple(sorted({float(p) for p in (*lp_set, *extra_p)}))
        self.K_hat = K_hat
        self.q = params.q
        self.coef = gradient_coefficient(self.q, variant, g.dim)
        u0 = np.asarray(u0, dtype=float)
        self.mass0 = integrate(u0, g)
        self.linf0 = float(u0.max())
        self.upow0 = {p: integrate(u0**p, g) for p in self.lp_set}
        self.grad0 = grad_q_functional(u0, g, self.q, 0.0)
        # cumulative integrals over [0, t]
        self.int_linf = 0.0
        self.int_linf_pow = 0.0
        self.int_upow_next = {p: 0.0 for p in self.lp_set}
        self.int_mass_pow = {p: 0.0 for p in self.lp_set}
        self._t = 0.0
        self._point = self._pointwise(u0)
        self._reset_window(u0)

    # -- state carried between records, also used for checkpointing
    def state_dict(self) -> dict:
        return {
            "t": self._t,
            "int_linf": self.int_linf,
            "int_linf_pow": self.int_linf_pow,
            "int_upow_next": {repr(k): v for k, v in self.int_upow_next.items()},
            "int_mass_pow": {repr(k): v for k, v in self.int_mass_pow.items()},
        }

    def load_state_dict(self, d: dict, u) -> None:
        self._t = d["t"]
        self.int_linf = d["int_linf"]
        self.int_linf_pow = d["int_linf_pow"]
        self.int_upow_next = {float(k): v for k, v in d["int_upow_next"].items()}
        self.int_mass_pow = {float(k): v for k, v in d["int_mass_pow"].items()}
        self._point = self._pointwise(np.asarray(u, dtype=float))
        self._reset_window(u)

    def _pointwise(self, u):
        g, prm = self.grid, self.params
        linf = float(u.max())
        mass = float(np.dot(u, g.shell_volumes))
        rhs = {p: lp_rhs_terms(u, g, p, prm) for p in self.lp_set}
        upow_next = {p: float(np.dot(u ** (p + 1.0), g.shell_volumes)) for p in self.lp_set}
        return linf, mass, rhs, upow_next

    def _reset_window(self, u):
        self.window_upow = {p: integrate(np.asarray(u) ** p, self.grid) for p in self.lp_set}
        self.window_rhs = {p: 0.0 for p in self.lp_set}
        self.window_scale = {p: 0.0 for p in self.lp_set}
        self.window_dt = 0.0
        self.window_clip = 0.0
        self.window_residual = 0.0
        self.window_radial = math.inf
        self.last_dt = 0.0

    def on_step(self, state, report) -> None:
        if not np.all(np.isfinite(state.u)):
            return
        dt = report.dt
        old = self._point
        new = self._pointwise(state.u)
        q = self.q
        self.int_linf += 0.5 * dt * (old[0] + new[0])
        self.int_linf_pow += 0.5 * dt * (old[0] ** (1 + q) + new[0] ** (1 + q))
        for p in self.lp_set:
            self.int_upow_next[p] += 0.5 * dt * (old[3][p] + new[3][p])
            self.int_mass_pow[p] += 0.5 * dt * (old[1] ** (p + 1) + new[1] ** (p + 1))
            self.window_rhs[p] += 0.5 * dt * (old[2][p][0] + new[2][p][0])
            self.window_scale[p] += 0.5 * dt * (old[2][p][1] + new[2][p][1])
        self.window_dt = max(self.window_dt, dt)
        self.window_clip += report.clip_mass
        self.window_residual = max(self.window_residual, report.mass_law_residual)
        self.window_radial = min(self.window_radial, report.radial_margin)
        self.last_dt = dt
        self._point = new
        self._t = state.t

    def record(self, state) -> DiagnosticRecord:
        g, prm = self.grid, self.params
        u, v, t = state.u, state.v, state.t
        finite = bool(np.all(np.isfinite(u)))
        linf = float(u.max()) if finite else math.inf
        imax = int(np.argmax(u)) if finite else 0
        upow = {p: integrate(u**p, g) for p in self.lp_set}
        vr = flux_gradient_v(u, v, g) if finite else np.zeros(g.cells + 1)
        radial_now = radial_bound_margin(vr, linf, g) if finite else math.inf

        bound_lp = {}
        for p in self.lp_set:
            ok = prm.mu >= 1 or p < 1.0 / (1.0 - prm.mu)
            bound_lp[p] = lp_power_bound(p, prm.kappa, prm.mu, self.upow0[p], g.volume) if ok else math.nan
        bound_linf = math.nan
        if prm.mu >= 1 and self.linf0 > 0:
            bound_linf = logistic_bound(prm.kappa, prm.mu, self.linf0, t)
        elif prm.mu >= 1:
            bound_linf = 0.0
        bound_grad = math.nan
        if self.K_hat is not None:
            growth = self.coef * self.int_linf + prm.kappa * self.q * t
            bound_grad = (self.grad0 + self.K_hat * g.volume * self.int_linf_pow) * math.exp(min(growth, 700.0))

        rec = DiagnosticRecord(
            t=t,
            step=state.step_count,
            status=state.status,
            dt=self.last_dt,
            mass=integrate(u, g) if finite else math.inf,
            linf=linf,
            r_at_max=float(g.centers[imax]),
            umin=float(u.min()) if finite else math.nan,
            vmin=float(v.min()),
            grad_q=grad_q_functional(u, g, self.q, 0.0) if finite else math.inf,
            grad_q_eta=grad_q_functional(u, g, self.q, prm.eta) if finite else math.inf,
            upow=upow,
            lp_norm={p: upow[p] ** (1.0 / p) for p in self.lp_set},
            bound_mass=mass_bound(prm.kappa, prm.mu, self.mass0, g.volume),
            bound_lp=bound_lp,
            bound_linf=bound_linf,
            bound_grad_q=bound_grad,
            dlp={p: upow[p] - self.window_upow[p] for p in self.lp_set},
            rhs_int=dict(self.window_rhs),
            rhs_scale=dict(self.window_scale),
            window_dt=self.window_dt,
            clip_mass=self.window_clip,
            mass_law_residual=self.window_residual,
            radial_margin=min(self.window_radial, radial_now),
        )
        if finite:
            self._reset_window(u)
        return rec


_SCALAR_COLUMNS = (
    "t", "step", "status", "dt", "mass", "linf", "r_at_max", "umin", "vmin", "grad_q", "grad_q_eta",
    "bound_mass", "bound_linf", "bound_grad_q", "window_dt", "clip_mass", "mass_law_residual", "radial_margin",
)
_DICT_COLUMNS = ("upow", "lp_norm", "bound_lp", "dlp", "rhs_int", "rhs_scale")


def _p_label(p: float) -> str:
    return f"{p:g}"


def record_columns(lp_set, check_ids=()) -> list[str]:
    cols = list(_SCALAR_COLUMNS)
    for name in _DICT_COLUMNS:
        cols += [f"{name}_p{_p_label(p)}" for p in lp_set]
    cols += [f"margin_{c}" for c in check_ids]
    return cols


def record_row(rec: DiagnosticRecord, lp_set, check_ids=()) -> list:
    row = [getattr(rec, c) for c in _SCALAR_COLUMNS]
    for name in _DICT_COLUMNS:
        d = getattr(rec, name)
        row += [d.get(float(p), math.nan) for p in lp_set]
    row += [rec.margins.get(c, math.nan) for c in check_ids]
    return row
