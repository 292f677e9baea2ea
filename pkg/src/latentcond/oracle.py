"""Brute-force references: grid-normalized EBM densities, finite differences,
closed-form Gaussian MLE and total-variation distances.

Nothing here imports the autodiff tape; energies are consumed as plain
callables mapping an (n, d) array of points to n energies.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from latentcond.errors import GridTooSmallError, NonFiniteError, ShapeError

BOUNDARY_MASS = 1e-6


@dataclass(frozen=True)
class Grid1D:
    lo: float
    hi: float
    n: int = 4096
    mass: np.ndarray | None = None

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.n

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.n) + 0.5) * self.width

    def with_mass(self, mass) -> "Grid1D":
        return Grid1D(self.lo, self.hi, self.n, np.asarray(mass, dtype=np.float64))

    def coarsen(self, factor: int) -> "Grid1D":
        """Merge runs of ``factor`` adjacent cells, summing their mass."""
        if self.n % factor:
            raise ValueError(f"{factor} does not divide {self.n} cells")
        mass = None if self.mass is None else self.mass.reshape(-1, factor).sum(axis=1)
        return Grid1D(self.lo, self.hi, self.n // factor, mass)

    def mean(self) -> float:
        return float(self.mass @ self.centers)

    def var(self) -> float:
        m = self.mean()
        return float(self.mass @ (self.centers - m) ** 2)

    def cell_index(self, x: np.ndarray) -> np.ndarray:
        """Cell of each point; ``self.n`` marks points outside the grid."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        inside = (x >= self.lo) & (x < self.hi)
        idx = np.full(x.shape, self.n, dtype=np.int64)
        idx[inside] = np.minimum(np.floor((x[inside] - self.lo) / self.width).astype(np.int64), self.n - 1)
        return idx


@dataclass(frozen=True)
class Grid2D:
    lo: tuple[float, float]
    hi: tuple[float, float]
    n: tuple[int, int] = (256, 256)
    mass: np.ndarray | None = None

    @property
    def widths(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / np.asarray(self.n)

    @property
    def centers(self) -> np.ndarray:
        """All cell centers as an (nx*ny, 2) array, x-major."""
        w = self.widths
        cx = self.lo[0] + (np.arange(self.n[0]) + 0.5) * w[0]
        cy = self.lo[1] + (np.arange(self.n[1]) + 0.5) * w[1]
        gx, gy = np.meshgrid(cx, cy, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def with_mass(self, mass) -> "Grid2D":
        return Grid2D(self.lo, self.hi, self.n, np.asarray(mass, dtype=np.float64))

    def cell_index(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
        w = self.widths
        finite = np.isfinite(x)
        ij = np.floor((np.where(finite, x, self.lo) - np.asarray(self.lo)) / w).astype(np.int64)
        total = self.n[0] * self.n[1]
        inside = (
            (ij[:, 0] >= 0) & (ij[:, 0] < self.n[0]) & (ij[:, 1] >= 0) & (ij[:, 1] < self.n[1])
            & np.all(finite, axis=1)
        )
        flat = np.where(inside, ij[:, 0] * self.n[1] + ij[:, 1], total)
        return flat

    @property
    def size(self) -> int:
        return self.n[0] * self.n[1]


def _boundary_mass_1d(mass: np.ndarray) -> float:
    return float(mass[0] + mass[-1])


def _boundary_mass_2d(mass: np.ndarray, n) -> float:
    m = mass.reshape(n)
    edge = m[0, :].sum() + m[-1, :].sum() + m[1:-1, 0].sum() + m[1:-1, -1].sum()
    return float(edge)


def grid_ebm_density(energy: Callable[[np.ndarray], np.ndarray], beta: float, grid):
    """Normalize exp(-beta * energy) over the cells of ``grid``.

    ``energy`` maps an (n, d) array to n values.  Returns a copy of ``grid``
    carrying the normalized cell masses.  Raises :class:`GridTooSmallError`
    when the outermost cells hold more than 1e-6 of the mass.
    """
    if isinstance(grid, Grid1D):
        pts = grid.centers[:, None]
    elif isinstance(grid, Grid2D):
        pts = grid.centers
    else:
        raise TypeError(f"unsupported grid {type(grid).__name__}")
    e = np.asarray(energy(pts), dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(e)):
        raise NonFiniteError("grid_ebm_density", "energy is not finite on the grid")
    logw = -beta * e
    w = np.exp(logw - logw.max())
    mass = w / w.sum()
    edge = _boundary_mass_1d(mass) if isinstance(grid, Grid1D) else _boundary_mass_2d(mass, grid.n)
    if edge >= BOUNDARY_MASS:
        raise GridTooSmallError(f"boundary cells carry mass {edge:.3g} >= {BOUNDARY_MASS}")
    return grid.with_mass(mass)


def empirical_tv(samples, grid) -> float:
    """Total variation between the histogram of ``samples`` and ``grid.mass``.

    Samples outside the grid land in one extra cell whose reference mass is 0.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ShapeError("empirical_tv needs at least one sample")
    idx = grid.cell_index(samples)
    n_cells = grid.n if isinstance(grid, Grid1D) else grid.size
    counts = np.bincount(idx, minlength=n_cells + 1).astype(np.float64)
    emp = counts / counts.sum()
    ref = np.append(grid.mass, 0.0)
    return 0.5 * float(np.abs(emp - ref).sum())


def tv_between(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def finite_diff_grad(fn: Callable[[np.ndarray], float], z, h: float = 1e-5) -> np.ndarray:
    """Central differences, one coordinate at a time."""
    if h <= 0:
        raise ValueError("step h must be positive")
    z = np.array(z, dtype=np.float64)
    g = np.empty_like(z)
    flat, gflat = z.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(fn(z))
        flat[i] = orig - h
        down = float(fn(z))
        flat[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NonFiniteError("finite_diff_grad", f"coordinate {i}")
        gflat[i] = (up - down) / (2 * h)
    return g


def gaussian_mle_closed_form(samples) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis sample mean and biased (1/n) variance."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ShapeError("need at least two samples")
    mean = x.mean(axis=0)
    return mean, ((x - mean) ** 2).mean(axis=0)


def relative_error(a, b, floor: float = 1e-12) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / scale)
