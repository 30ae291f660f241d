"""Cell-centred radial mesh on a ball, quadrature, norms and initial data.

Cells are the spherical shells ``[r_{i-1/2}, r_{i+1/2}]`` of the ball
``B_R(0)`` in ``R^n``.  Shell volumes are computed exactly, so piecewise
constant fields integrate without quadrature error and constants integrate
to ``c * |Omega|`` up to roundoff.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np

__all__ = [
    "RadialGrid",
    "build_grid",
    "sphere_area",
    "integrate",
    "lp_norm",
    "radial_derivative",
    "cell_gradient",
    "grad_q_functional",
    "make_initial_data",
    "INITIAL_KINDS",
]

INITIAL_KINDS = ("poly_bump", "gaussian_bump", "constant", "mollified_step")


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere ``S^{n-1}`` (equals 2 for n = 1)."""
    return 2.0 * pi ** (n / 2.0) / gamma(n / 2.0)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Radial finite-volume mesh with ``cells`` shells of width ``h = R / cells``.

    Arrays are read-only so a grid can be shared between workers.
    """

    dim: int
    radius: float
    cells: int
    h: float = field(init=False)
    centers: np.ndarray = field(init=False, repr=False)
    faces: np.ndarray = field(init=False, repr=False)
    shell_volumes: np.ndarray = field(init=False, repr=False)
    face_areas: np.ndarray = field(init=False, repr=False)
    sigma: float = field(init=False, repr=False)
    volume: float = field(init=False, repr=False)

    def __post_init__(self):
        n, R, I = self.dim, float(self.radius), self.cells
        h = R / I
        faces = np.arange(I + 1, dtype=float) * h
        faces[-1] = R
        centers = (np.arange(I, dtype=float) + 0.5) * h
        sigma = sphere_area(n)
        fn = faces**n
        w = sigma * (fn[1:] - fn[:-1]) / n
        area = sigma * faces ** (n - 1)
        for name, value in (
            ("h", h),
            ("centers", centers),
            ("faces", faces),
            ("shell_volumes", w),
            ("face_areas", area),
            ("sigma", sigma),
            ("volume", sigma * R**n / n),
        ):
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def interior_faces(self) -> np.ndarray:
        return self.faces[1:-1]

    def spec(self) -> dict:
        return {"n": self.dim, "R": self.radius, "I": self.cells}

    def __eq__(self, other):
        return isinstance(other, RadialGrid) and self.spec() == other.spec()

    def __hash__(self):
        return hash((self.dim, self.radius, self.cells))


def build_grid(n: int, R: float, I: int) -> RadialGrid:
    if int(n) != n or n < 1:
        raise ValueError(f"dimension n must be an integer >= 1, got {n!r}")
    if not np.isfinite(R) or R <= 0:
        raise ValueError(f"radius R must be positive, got {R!r}")
    if int(I) != I or I < 4:
        raise ValueError(f"cell count I must be an integer >= 4, got {I!r}")
    return RadialGrid(int(n), float(R), int(I))


def _values(f, g: RadialGrid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (g.cells,):
        raise ValueError(f"field has shape {f.shape}, grid has {g.cells} cells")
    return f


def integrate(f, g: RadialGrid) -> float:
    """Exact integral of the piecewise-constant field ``f`` over the ball."""
    return float(np.dot(_values(f, g), g.shell_volumes))


def lp_norm(f, g: RadialGrid, p: float) -> float:
    """Discrete ``L^p`` norm; ``p = inf`` gives the cell maximum of ``|f|``."""
    f = np.abs(_values(f, g))
    if p == np.inf:
        return float(f.max())
    if not p >= 1:
        raise ValueError(f"p must be >= 1 or inf, got {p!r}")
    if p == 1:
        return float(np.dot(f, g.shell_volumes))
    scale = f.max()
    if scale == 0:
        return 0.0
    # rescale before powering to avoid overflow near blow-up
    return float(scale * np.dot((f / scale) ** p, g.shell_volumes) ** (1.0 / p))


def radial_derivative(f, g: RadialGrid) -> np.ndarray:
    """Face-centred derivative, length ``cells + 1``.

    Both boundary faces are zero: the symmetry condition at ``r = 0`` and the
    homogeneous Neumann condition at ``r = R``.
    """
    f = _values(f, g)
    d = np.zeros(g.cells + 1)
    d[1:-1] = np.diff(f) / g.h
    return d


def cell_gradient(f, g: RadialGrid) -> np.ndarray:
    """Cell-centred gradient: mean of the two adjacent face derivatives."""
    d = radial_derivative(f, g)
    return 0.5 * (d[:-1] + d[1:])


def grad_q_functional(f, g: RadialGrid, q: float, eta: float = 0.0) -> float:
    """``sum_i (D_i^2 + eta)^(q/2) w_i`` with ``D`` the cell-centred gradient."""
    if not q > 1:
        raise ValueError(f"q must exceed 1, got {q!r}")
    if eta < 0:
        raise ValueError(f"eta must be nonnegative, got {eta!r}")
    D = cell_gradient(f, g)
    return float(np.dot((D * D + eta) ** (q / 2.0), g.shell_volumes))


def _mollifier_rule(nodes: int = 400):
    """Gauss-Legendre nodes/weights for the standard bump on (-1, 1), normalised."""
    s, wq = np.polynomial.legendre.leggauss(nodes)
    bump = np.exp(-1.0 / (1.0 - s * s))
    wq = wq * bump
    return s, wq / wq.sum()


def _mollify(profile, r: np.ndarray, width: float) -> np.ndarray:
    # even extension through r = 0 keeps the derivative at the origin zero
    s, wq = _mollifier_rule()
    pts = np.abs(r[:, None] - width * s[None, :])
    return profile(pts) @ wq


def make_initial_data(
    kind: str,
    amplitude: float,
    g: RadialGrid,
    center: float = 0.0,
    width: float | None = None,
) -> np.ndarray:
    """Nonnegative radial initial profile sampled at cell centres.

    ``poly_bump``       A (1 - (r/R)^2)^2
    ``gaussian_bump``   A exp(-((r - center) / width)^2)
    ``constant``        A
    ``mollified_step``  A 1{r < center}, flattened near R and mollified with
                        a standard bump of radius ``width``
    """
    if kind not in INITIAL_KINDS:
        raise ValueError(f"unknown initial data kind {kind!r}; expected one of {INITIAL_KINDS}")
    if not amplitude >= 0:
        raise ValueError(f"amplitude must be nonnegative, got {amplitude!r}")
    R = g.radius
    if not 0 <= center <= R:
        raise ValueError(f"center must lie in [0, R], got {center!r}")
    r = g.centers
    A = float(amplitude)

    if kind == "constant":
        return np.full(g.cells, A)
    if kind == "poly_bump":
        return A * (1.0 - (r / R) ** 2) ** 2
    if width is None or not 0 < width <= R:
        raise ValueError(f"{kind} needs a width in (0, R], got {width!r}")
    if kind == "gaussian_bump":
        return A * np.exp(-(((r - center) / width) ** 2))

    # Flatten beyond R - delta/2 with delta = 4 width, so the mollified
    # profile is constant on [R - width, R] and its derivative vanishes at R.
    r_flat = R - 2.0 * width
    if r_flat <= 0:
        raise ValueError("mollified_step width too large for the radius")

    def step(x):
        x = np.minimum(x, r_flat)
        return np.where(x < center, A, 0.0)

    return np.maximum(_mollify(step, r, width), 0.0)
