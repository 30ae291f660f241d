"""Closed-form bounds and scalar ODE comparison machinery.

Everything here is a pure function of its arguments.  Non-constructive
constants (elliptic regularity constant ``K``, embedding constants ``c1``,
``c3``, the lower-bound constant ``B``) are explicit inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ScalarTrajectory",
    "ComparisonVerdict",
    "ExistenceWindow",
    "logistic_bound",
    "lp_power_bound",
    "mass_bound",
    "gradient_coefficient",
    "solve_scalar_ode",
    "comparison_check",
    "blowup_time_bound",
    "blowup_threshold",
    "common_existence_time",
    "ESCAPE_LEVEL",
]

ESCAPE_LEVEL = 1e12

Rate = Callable[[float], float]


@dataclass
class ScalarTrajectory:
    times: np.ndarray
    values: np.ndarray
    escaped: bool = False
    escape_time: float = math.inf

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("trajectory values must be finite")


@dataclass
class ComparisonVerdict:
    hypothesis_holds: bool
    conclusion_holds: bool | None
    worst_margin: float
    reason: str = ""

    @property
    def inconclusive(self) -> bool:
        return not self.hypothesis_holds


@dataclass
class ExistenceWindow:
    T_of_D: float
    M_of_D: float
    constants_used: dict = field(default_factory=dict)


def logistic_bound(kappa: float, mu: float, m: float, t: float) -> float:
    """Solution of ``y' = kappa y - (mu - 1) y^2``, ``y(0) = m`` (valid for ``mu >= 1``)."""
    if mu < 1:
        raise ValueError(f"the explicit bound needs mu >= 1, got {mu}")
    if not m > 0:
        raise ValueError(f"m must be positive, got {m}")
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if kappa < 0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    if mu > 1 and kappa > 0:
        ratio = kappa / (mu - 1)
        return ratio / (1.0 + (ratio / m - 1.0) * math.exp(-kappa * t))
    if mu > 1:
        return m / (1.0 + (mu - 1) * m * t)
    if kappa > 0:
        return m * math.exp(kappa * t)
    return m


def lp_power_bound(p: float, kappa: float, mu: float, u0_power: float, volume: float) -> float:
    """Upper bound for ``int u^p``, valid when ``1 <= p < 1/(1 - mu)_+``."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if mu < 1 and not p < 1.0 / (1.0 - mu):
        raise ValueError(f"bound needs p < 1/(1-mu) = {1 / (1 - mu):.6g}, got p = {p}")
    steady = (p * kappa / (1.0 - (1.0 - mu) * p)) ** p * volume
    return max(u0_power, steady)


def mass_bound(kappa: float, mu: float, mass0: float, volume: float) -> float:
    return max(mass0, kappa * volume / mu)


def gradient_coefficient(q: float, variant: str = "5q", dim: int | None = None) -> float:
    """Growth coefficient of the gradient estimate: ``5q`` or ``(5 - 1/n) q - 2``."""
    if variant == "5q":
        return 5.0 * q
    if variant == "reduced":
        if dim is None:
            raise ValueError("the reduced coefficient needs the dimension")
        return (5.0 - 1.0 / dim) * q - 2.0
    raise ValueError(f"unknown coefficient variant {variant!r}")


def _rk4_step(f: Rate, y: float, dt: float) -> float:
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def solve_scalar_ode(f: Rate, y0: float, t_end: float, dt: float) -> ScalarTrajectory:
    """Classical fixed-step RK4 for an autonomous rate ``y' = f(y)``.

    Stops early, with ``escaped=True``, once ``|y|`` exceeds ``ESCAPE_LEVEL``;
    the escaping sample is not stored.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    y = float(y0)
    times, values = [0.0], [y]
    nsteps = int(math.ceil(t_end / dt - 1e-9))
    for k in range(1, nsteps + 1):
        rate = f(y)
        if not math.isfinite(rate):
            raise ValueError(f"rate function returned {rate} at y = {y}")
        t_next = min(k * dt, t_end)
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                y = _rk4_step(f, y, t_next - times[-1])
            except OverflowError:
                y = math.inf
        if not math.isfinite(y) or abs(y) > ESCAPE_LEVEL:
            return ScalarTrajectory(times, values, escaped=True, escape_time=t_next)
        times.append(t_next)
        values.append(y)
    return ScalarTrajectory(times, values)


def _integrate_between(f: Rate, y: float, t0: float, t1: float, dt: float) -> float:
    n = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    h = (t1 - t0) / n
    for _ in range(n):
        y = _rk4_step(f, y, h)
        if not math.isfinite(y) or abs(y) > ESCAPE_LEVEL:
            return math.inf
    return y


def comparison_check(
    z: ScalarTrajectory, f: Rate, y0: float, dt: float | None = None, rel_tol: float = 1e-9
) -> ComparisonVerdict:
    """Check ``z(t) <= z(0) + int_0^t f(z)`` and, if it holds, ``z <= y`` for ``y' = f(y), y(0) = y0``.

    The hypothesis integral uses the trapezoid rule on the samples of ``z``;
    it only counts as satisfied with a margin of ``rel_tol (1 + |z|)``, so
    quadrature noise can only turn a verdict into "inconclusive".
    """
    t, zv = z.times, z.values
    if not zv[0] < y0:
        return ComparisonVerdict(False, None, math.nan, "z(0) < y0 fails")
    fz = np.array([f(x) for x in zv])
    integral = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(t) * (fz[1:] + fz[:-1]))))
    slack = zv[0] + integral - zv
    tol = rel_tol * (1.0 + np.abs(zv))
    bad = np.nonzero(slack[1:] < tol[1:])[0]
    if bad.size:
        k = bad[0] + 1
        return ComparisonVerdict(
            False, None, math.nan, f"integral hypothesis not established at t = {t[k]:.6g} (slack {slack[k]:.3e})"
        )
    step = dt if dt is not None else float(np.min(np.diff(t)))
    y = np.empty_like(zv)
    y[0] = y0
    for k in range(1, len(t)):
        y[k] = _integrate_between(f, y[k - 1], t[k - 1], t[k], step) if math.isfinite(y[k - 1]) else math.inf
    finite = np.isfinite(y)
    margin = float(np.min(y[finite] - zv[finite]))
    return ComparisonVerdict(True, margin >= -rel_tol, margin)


def blowup_time_bound(a: float, b: float, d: float, kappa: float) -> float:
    """Upper bound ``2 / ((kappa - 1) a^(kappa - 1) d)`` on the life span of any
    nonnegative ``y >= a - b t + d int y^kappa``; requires ``a > (2b/d)^(1/kappa)``.
    """
    if not (a > 0 and b >= 0 and d > 0 and kappa > 1):
        raise ValueError(f"need a > 0, b >= 0, d > 0, kappa > 1; got {(a, b, d, kappa)}")
    if not a > (2.0 * b / d) ** (1.0 / kappa):
        raise ValueError(f"a = {a} does not exceed (2b/d)^(1/kappa) = {(2 * b / d) ** (1 / kappa):.6g}")
    return 2.0 / ((kappa - 1.0) * a ** (kappa - 1.0) * d)


def blowup_threshold(p: float, mu: float, volume: float, B_hat: float) -> float:
    """``(4B / ((1-mu)p - 1))^(1/(p+1)) |Omega|^(1 + 1/(p(p+1)))`` with ``B = B_hat``."""
    if not 0 < mu < 1:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")
    gap = (1.0 - mu) * p - 1.0
    if not gap > 0:
        raise ValueError(f"need p > 1/(1-mu) = {1 / (1 - mu):.6g}, got p = {p}")
    if B_hat < 0 or volume <= 0:
        raise ValueError("B_hat must be nonnegative and volume positive")
    return (4.0 * B_hat / gap) ** (1.0 / (p + 1.0)) * volume ** (1.0 + 1.0 / (p * (p + 1.0)))


def _existence_time(rate: Rate, y_start: float, y_stop: float, dt: float) -> float:
    k, y = 0, y_start
    while True:
        y_next = _rk4_step(rate, y, dt)
        if y_next > y_stop:
            lo, hi = 0.0, dt
            while hi - lo > 1e-10 * max(dt, 1e-300) and hi - lo > 1e-16:
                mid = 0.5 * (lo + hi)
                if _rk4_step(rate, y, mid) > y_stop:
                    hi = mid
                else:
                    lo = mid
            # the rate exceeds 1, so the exact crossing is before t = 1; only rounding can pass it
            return min(k * dt + 0.5 * (lo + hi), 1.0)
        k, y = k + 1, y_next


def common_existence_time(
    D: float,
    q: float,
    kappa: float,
    volume: float,
    c1: float,
    c3: float,
    K: float,
    steps: int = 1000,
    growth: float | None = None,
) -> ExistenceWindow:
    """Window ``(T(D), M(D))`` on which every regularised solution stays bounded.

    ``T(D)`` is the first time the comparison function ``y_D`` rises by 1 above
    its start ``(sqrt(2) D)^q + 1``; ``growth`` overrides the ``6q`` coefficient.
    The RK4 step is ``1 / (steps * y_D'(0))``, so about ``steps`` steps span T(D).
    """
    if not (D > 0 and q > 1 and volume > 0 and c1 > 0 and c3 > 0 and K > 0 and kappa >= 0):
        raise ValueError("need D, volume, c1, c3, K > 0, q > 1 and kappa >= 0")
    six_q = 6.0 * q if growth is None else growth
    a1 = six_q * c1 + K * volume * (2.0 * c1) ** (1.0 + q)
    a2 = six_q * c3 + kappa * q
    a0 = volume * K * (2.0 * c3) ** (1.0 + q) + 1.0

    def rate(y):
        return a1 * y ** (1.0 + 1.0 / q) + a2 * y + a0

    base = (math.sqrt(2.0) * D) ** q
    y_start, y_stop = base + 1.0, base + 2.0
    dt = 1.0 / (steps * rate(y_start))
    T = _existence_time(rate, y_start, y_stop, dt)
    M = c1 * (base + 2.0) ** (1.0 / q) + c3
    used = {"c1": c1, "c3": c3, "K": K, "q": q, "kappa": kappa, "volume": volume, "D": D, "growth": six_q}
    return ExistenceWindow(T, M, used)
