"""Model and scheme parameters."""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

__all__ = ["ModelParams"]


@dataclass(frozen=True)
class ModelParams:
    """Parameters of ``u_t = eps Lap u - div(u grad v) + kappa u - mu u^2``, ``0 = Lap v - v + u``.

    ``blowup_cap=None`` means ``1e6 * max(u0)`` (resolved when a run starts).
    ``q_exponent=None`` means ``n + 1``.
    """

    dim: int = 3
    radius: float = 1.0
    kappa: float = 0.0
    mu: float = 1.0
    eps: float = 0.01
    p_exponent: float = 2.0
    q_exponent: float | None = None
    eta: float = 0.0
    cfl_safety: float = 0.4
    blowup_cap: float | None = None
    dt_min: float = 1e-12
    dt_max: float = 1e-2
    advection: str = "fitted"

    def __post_init__(self):
        errors = []
        if int(self.dim) != self.dim or self.dim < 1:
            errors.append(("dim", "must be an integer >= 1"))
        if not self.radius > 0:
            errors.append(("radius", "must be positive"))
        if not self.kappa >= 0:
            errors.append(("kappa", "must be >= 0"))
        if not self.mu > 0:
            errors.append(("mu", "must be > 0"))
        if not self.eps >= 0:
            errors.append(("eps", "must be >= 0"))
        if not self.p_exponent >= 1:
            errors.append(("p_exponent", "must be >= 1"))
        if self.q_exponent is not None and not self.q_exponent > self.dim:
            errors.append(("q_exponent", "must exceed the dimension n"))
        if not self.eta >= 0:
            errors.append(("eta", "must be >= 0"))
        if not 0 < self.cfl_safety < 1:
            errors.append(("cfl_safety", "must lie in (0, 1)"))
        if self.blowup_cap is not None and not self.blowup_cap > 0:
            errors.append(("blowup_cap", "must be positive"))
        if self.advection not in ("fitted", "upwind"):
            errors.append(("advection", "must be 'fitted' or 'upwind'"))
        if not 0 < self.dt_min < self.dt_max:
            errors.append(("dt_min", "need 0 < dt_min < dt_max"))
        for name in ("radius", "kappa", "mu", "eps", "p_exponent", "eta", "dt_max"):
            if not np.isfinite(getattr(self, name)):
                errors.append((name, "must be finite"))
        if errors:
            raise ValueError("; ".join(f"{k}: {msg}" for k, msg in errors))

    @property
    def q(self) -> float:
        return float(self.dim + 1) if self.q_exponent is None else float(self.q_exponent)

    def cap_for(self, u0_max: float) -> float:
        if self.blowup_cap is not None:
            return float(self.blowup_cap)
        return 1e6 * max(float(u0_max), 1.0)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)
