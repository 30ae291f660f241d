"""Radial Neumann problem ``-Lap v + v = u`` in flux (finite-volume) form.

For every cell ``F_{i+1/2} - F_{i-1/2} = w_i (v_i - u_i)`` with face flux
``F_{i+1/2} = A_{i+1/2} (v_{i+1} - v_i) / h`` and ``F = 0`` on both boundary
faces.  The matrix is a strictly diagonally dominant M-matrix; it depends
only on the grid, so its LU factors are computed once per grid and cached.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import lapack

from .grid import RadialGrid, cell_gradient, lp_norm

__all__ = [
    "EllipticSystem",
    "assemble",
    "solve_v",
    "chemotactic_flux",
    "flux_gradient_v",
    "radial_bound_margin",
    "elliptic_ratios",
    "estimate_elliptic_constant",
    "random_probe_fields",
    "young_gradient_terms",
]

# roundoff allowance for the discrete maximum principle, relative to max u
_MAXPRINCIPLE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EllipticSystem:
    grid: RadialGrid
    lower: np.ndarray  # lower[i] couples row i + 1 to column i
    diag: np.ndarray
    upper: np.ndarray  # upper[i] couples row i to column i + 1
    _lu: tuple

    def matrix(self) -> np.ndarray:
        """Dense copy, for tests and small diagnostics."""
        return np.diag(self.diag) + np.diag(self.upper, 1) + np.diag(self.lower, -1)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        dl, d, du, du2, ipiv = self._lu
        x, info = lapack.dgttrs(dl, d, du, du2, ipiv, np.asarray(rhs, dtype=float))
        if info != 0:
            raise RuntimeError(f"tridiagonal back-substitution failed (info={info})")
        return x


@lru_cache(maxsize=32)
def assemble(g: RadialGrid) -> EllipticSystem:
    coupling = g.face_areas[1:-1] / g.h
    diag = g.shell_volumes.copy()
    diag[:-1] += coupling
    diag[1:] += coupling
    off = -coupling
    dl, d, du, du2, ipiv, info = lapack.dgttrf(off.copy(), diag.copy(), off.copy())
    # singular is impossible for a valid grid: every row carries +w_i > 0
    assert info == 0, f"elliptic matrix factorisation failed (info={info})"
    for arr in (diag, off, dl, d, du, du2, ipiv):
        arr.setflags(write=False)
    return EllipticSystem(g, off, diag, off, (dl, d, du, du2, ipiv))


def solve_v(u, g: RadialGrid) -> np.ndarray:
    """Solve for ``v`` given a nonnegative ``u``; asserts ``min u <= v <= max u``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (g.cells,):
        raise ValueError(f"u has shape {u.shape}, grid has {g.cells} cells")
    if not np.all(np.isfinite(u)):
        raise ValueError("u contains non-finite values")
    umin, umax = u.min(), u.max()
    if umin < 0:
        raise ValueError(f"u must be nonnegative (min u = {umin:.3e})")
    v = assemble(g).solve(g.shell_volumes * u)
    tol = _MAXPRINCIPLE_TOL * umax
    vmin, vmax = v.min(), v.max()
    assert vmin >= umin - tol and vmax <= umax + tol, (
        f"discrete maximum principle violated: v in [{vmin}, {vmax}], u in [{umin}, {umax}]"
    )
    if vmin < 0:
        np.maximum(v, 0.0, out=v)
    return v


def chemotactic_flux(u, v, g: RadialGrid) -> np.ndarray:
    """Face fluxes ``A_f v_r(r_f)`` obtained by summing the cell equations outward.

    Length ``cells + 1``; both boundary entries are exactly zero.
    """
    F = np.zeros(g.cells + 1)
    F[1:-1] = np.cumsum(g.shell_volumes * (np.asarray(v) - np.asarray(u)))[:-1]
    return F


def flux_gradient_v(u, v, g: RadialGrid) -> np.ndarray:
    """Face values of ``v_r`` from ``r^{n-1} v_r = int_0^r rho^{n-1} (v - u)``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (g.cells,) or v.shape != (g.cells,):
        raise ValueError("u and v must both have one value per cell")
    F = chemotactic_flux(u, v, g)
    vr = np.zeros_like(F)
    vr[1:-1] = F[1:-1] / g.face_areas[1:-1]
    return vr


def radial_bound_margin(vr_faces: np.ndarray, umax: float, g: RadialGrid) -> float:
    """``min_f (r_f umax / n - v_r(r_f))``; nonnegative when ``v_r <= r ||u||_inf / n`` holds."""
    return float(np.min(g.faces * umax / g.dim - vr_faces))


def elliptic_ratios(fields, g: RadialGrid, q: float) -> np.ndarray:
    """``(|v|_q + |v_r|_q + |Lap v|_q) / |u|_q`` per field, with ``Lap v = v - u``."""
    out = []
    for u in fields:
        v = solve_v(u, g)
        num = lp_norm(v, g, q) + lp_norm(cell_gradient(v, g), g, q) + lp_norm(v - u, g, q)
        out.append(num / lp_norm(u, g, q))
    return np.array(out)


def random_probe_fields(g: RadialGrid, probes: int, rng: np.random.Generator) -> list:
    """The constant field followed by random bump mixtures and rough fields."""
    r = g.centers / g.radius
    fields = [np.ones(g.cells)]
    while len(fields) < probes:
        kind = rng.integers(3)
        if kind == 0:
            k = rng.integers(1, 4)
            c = rng.uniform(0.0, 1.0, size=k)
            s = rng.uniform(0.02, 0.5, size=k)
            a = rng.uniform(0.1, 10.0, size=k)
            u = (a[:, None] * np.exp(-(((r[None, :] - c[:, None]) / s[:, None]) ** 2))).sum(axis=0)
        elif kind == 1:
            u = rng.uniform(0.0, 1.0, size=g.cells) ** rng.uniform(1.0, 6.0)
        else:
            edge = rng.uniform(0.05, 0.95)
            u = np.where(r < edge, rng.uniform(0.5, 20.0), rng.uniform(0.0, 0.1))
        if u.max() > 0:
            fields.append(u)
    return fields


def estimate_elliptic_constant(
    g: RadialGrid, q: float, probes: int, seed: int = 0, safety: float = 2.0
) -> float:
    """Empirical stand-in for the maximal-regularity constant (safety factor 2)."""
    if probes < 10:
        raise ValueError(f"need at least 10 probes, got {probes}")
    rng = np.random.default_rng(seed)
    ratios = elliptic_ratios(random_probe_fields(g, probes, rng), g, q)
    return float(safety * ratios.max())


def young_gradient_terms(u, v, g: RadialGrid, p: float) -> tuple[float, float]:
    """``(4p/(p+1) int |grad v^((p+1)/2)|^2, int u^(p+1))`` on the discrete level."""
    psi = np.asarray(v, dtype=float) ** ((p + 1.0) / 2.0)
    dpsi = np.diff(psi) / g.h
    dirichlet = float(np.dot(g.face_areas[1:-1] * g.h, dpsi * dpsi))
    return 4.0 * p / (p + 1.0) * dirichlet, float(np.dot(np.asarray(u) ** (p + 1.0), g.shell_volumes))
