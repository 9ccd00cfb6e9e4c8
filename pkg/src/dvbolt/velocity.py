"""Truncated velocity lattice, quadrature, Maxwellians and weighted norms.

All velocity integrals in the solver are tensor-trapezoid sums over a closed
uniform grid on [-v_max, v_max]^3.  The closed grid (endpoints included) is
chosen so that specular reflection at an axis-aligned wall is an exact node
permutation; the trapezoid weights (halved on faces) keep the +-v symmetry
that makes odd moments vanish identically.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "VelocityGrid",
    "WeightSpec",
    "DistributionField",
    "build_grid",
    "maxwellian",
    "integrate",
    "norm_H",
    "norm_Linf_omega",
    "admissible_zeta_window",
    "write_snapshot",
    "read_snapshot",
]


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform closed tensor lattice with trapezoid quadrature weights."""

    n_per_axis: int
    v_max: float
    axis: np.ndarray          # (n,) 1D node coordinates, symmetric
    nodes: np.ndarray         # (N, 3) with N = n**3, C-order (ix, iy, iz)
    weights: np.ndarray       # (N,) positive, sum = (2 v_max)^3
    spacing: float

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def speed2(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.nodes, self.nodes)

    def index_coords(self) -> np.ndarray:
        """Integer lattice coordinates of each node, shape (N, 3)."""
        return np.rint((self.nodes + self.v_max) / self.spacing).astype(np.int64)

    def reflect_axis(self, axis: int) -> np.ndarray:
        """Node permutation realizing v[axis] -> -v[axis] (exact on a closed grid)."""
        n = self.n_per_axis
        ic = self.index_coords().copy()
        ic[:, axis] = n - 1 - ic[:, axis]
        return (ic[:, 0] * n + ic[:, 1]) * n + ic[:, 2]

    def maxwellian(self, theta: float = 1.0) -> np.ndarray:
        return maxwellian(theta, self.nodes)


def build_grid(n_per_axis: int, v_max: float) -> VelocityGrid:
    """Build the closed uniform lattice with tensor-trapezoid weights.

    Spacing is h = 2 v_max / (n_per_axis - 1); 1D weights are h in the
    interior and h/2 at the two endpoints, so the tensor weights tile the
    cube exactly: sum(weights) == (2 v_max)^3.
    """
    if not isinstance(n_per_axis, (int, np.integer)) or n_per_axis < 2:
        raise ValueError(f"n_per_axis must be an integer >= 2, got {n_per_axis!r}")
    if not np.isfinite(v_max) or v_max <= 0:
        raise ValueError(f"v_max must be a finite positive real, got {v_max!r}")
    ax = np.linspace(-v_max, v_max, n_per_axis)
    h = ax[1] - ax[0]
    w1 = np.full(n_per_axis, h)
    w1[0] *= 0.5
    w1[-1] *= 0.5
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    nodes = np.ascontiguousarray(np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1))
    weights = (w1[:, None, None] * w1[None, :, None] * w1[None, None, :]).ravel()
    return VelocityGrid(
        n_per_axis=int(n_per_axis),
        v_max=float(v_max),
        axis=ax,
        nodes=nodes,
        weights=np.ascontiguousarray(weights),
        spacing=float(h),
    )


def maxwellian(theta: float, v: np.ndarray) -> np.ndarray | float:
    """Gaussian equilibrium at temperature theta: (2 pi theta)^{-3/2} exp(-|v|^2 / 2 theta)."""
    if theta <= 0 or not np.isfinite(theta):
        raise ValueError(f"temperature must be positive, got {theta!r}")
    v = np.asarray(v, dtype=float)
    v2 = np.einsum("...i,...i->...", v, v)
    out = (2.0 * np.pi * theta) ** -1.5 * np.exp(-v2 / (2.0 * theta))
    return out if out.ndim else float(out)


def integrate(grid: VelocityGrid, f: np.ndarray) -> float:
    """Quadrature sum over the lattice; f indexed like grid.nodes."""
    f = np.asarray(f)
    if f.shape[-1] != grid.size:
        raise ValueError(f"size mismatch: {f.shape[-1]} values vs {grid.size} nodes")
    return float(np.sum(grid.weights * f, axis=-1))


def admissible_zeta_window(theta0: float) -> tuple[float, float]:
    """Open interval of Gaussian-weight exponents compatible with wall temperatures 1 +- theta0."""
    return 1.0 / (4.0 * (1.0 - theta0)), 1.0 / (2.0 * (1.0 + theta0))


@dataclass(frozen=True)
class WeightSpec:
    """Gaussian weight omega(v) = exp(zeta |v|^2) with admissibility window tied to theta0."""

    zeta: float
    theta0: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.theta0 <= 0.125:
            raise ValueError(f"theta0 must lie in [0, 1/8], got {self.theta0}")
        lo, hi = admissible_zeta_window(self.theta0)
        if not lo < self.zeta < hi:
            raise ValueError(
                f"zeta={self.zeta} outside the admissible window ({lo:.6f}, {hi:.6f}) "
                f"for theta0={self.theta0}"
            )

    def omega(self, grid_or_v) -> np.ndarray:
        v = grid_or_v.nodes if isinstance(grid_or_v, VelocityGrid) else np.asarray(grid_or_v)
        v2 = np.einsum("...i,...i->...", v, v)
        return np.exp(self.zeta * v2)


@dataclass
class DistributionField:
    """Kinetic density sampled on (spatial cell) x (velocity node).

    `values` has shape (n_cells, grid.size); `cell_measure` is the volume of
    one spatial cell (uniform decompositions only) so that spatial integrals
    are cell_measure * sum over cells.
    """

    values: np.ndarray
    grid: VelocityGrid
    cell_measure: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[None, :]
        if self.values.shape[1] != self.grid.size:
            raise ValueError("field/grid size mismatch")

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "DistributionField":
        return DistributionField(self.values.copy(), self.grid, self.cell_measure)

    def total_mass(self) -> float:
        return float(self.cell_measure * (self.values @ self.grid.weights).sum())


def norm_H(f: DistributionField) -> float:
    """Maxwellian-weighted L2 norm: (sum_cells m_c sum_i w_i f^2 / M)^(1/2)."""
    if not np.all(np.isfinite(f.values)):
        raise ValueError("field contains non-finite entries")
    minv = 1.0 / f.grid.maxwellian(1.0)
    q = np.einsum("cn,n,cn->", f.values, f.grid.weights * minv, f.values)
    return float(np.sqrt(f.cell_measure * q))


def norm_Linf_omega(f: DistributionField, w: WeightSpec) -> float:
    """Weighted sup norm: max over (cell, node) of |omega(v) f|."""
    if not np.all(np.isfinite(f.values)):
        raise ValueError("field contains non-finite entries")
    return float(np.abs(f.values * w.omega(f.grid)[None, :]).max())


def write_snapshot(f: DistributionField, csv_path, meta: dict | None = None) -> None:
    """CSV snapshot (cell_index, vx_index, vy_index, vz_index, value) + JSON sidecar."""
    csv_path = Path(csv_path)
    n = f.grid.n_per_axis
    ic = f.grid.index_coords()
    ncell, nv = f.values.shape
    cells = np.repeat(np.arange(ncell), nv)
    idx = np.tile(ic, (ncell, 1))
    data = np.column_stack([cells, idx, f.values.ravel()])
    header = "cell_index,vx_index,vy_index,vz_index,value"
    fmt = ["%d", "%d", "%d", "%d", "%.17g"]
    np.savetxt(csv_path, data, delimiter=",", header=header, comments="", fmt=fmt)
    sidecar = {
        "n_per_axis": n,
        "v_max": f.grid.v_max,
        "n_cells": ncell,
        "cell_measure": f.cell_measure,
    }
    if meta:
        sidecar.update(meta)
    csv_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def read_snapshot(csv_path) -> tuple[DistributionField, dict]:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    grid = build_grid(meta["n_per_axis"], meta["v_max"])
    raw = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    ncell = int(meta["n_cells"])
    vals = np.empty((ncell, grid.size))
    n = grid.n_per_axis
    flat = (raw[:, 1].astype(int) * n + raw[:, 2].astype(int)) * n + raw[:, 3].astype(int)
    vals[raw[:, 0].astype(int), flat] = raw[:, 4]
    return DistributionField(vals, grid, meta["cell_measure"]), meta
