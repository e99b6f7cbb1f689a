"""Uniform box lattices and trilinear interpolation.

The spatial lattice is the common sampling structure of the source history,
the force field, and the moment snapshots: a uniform grid with a single
scalar spacing, an origin corner, and per-axis extents.  Values sampled on
a lattice are interpolated trilinearly; queries outside the box return 0,
which is consistent with compactly supported fields whose support the
lattice is required to cover.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import HAVE_NUMBA, trilinear_multi_nb


@dataclass(frozen=True)
class BoxLattice:
    origin: tuple[float, float, float]
    spacing: float
    shape: tuple[int, int, int]

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("lattice spacing must be positive")
        if any(n < 2 for n in self.shape):
            raise ValueError("lattice needs at least 2 nodes per axis")

    @classmethod
    def cube(cls, radius: float, spacing: float) -> "BoxLattice":
        """Symmetric cube [-radius, radius]^3 with nodes at multiples of spacing."""
        n = int(np.ceil(radius / spacing))
        m = 2 * n + 1
        o = -n * spacing
        return cls((o, o, o), spacing, (m, m, m))

    @property
    def n_points(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        o = self.origin
        return tuple(o[i] + self.spacing * np.arange(self.shape[i]) for i in range(3))

    def points(self) -> np.ndarray:
        """All lattice nodes, shape (n_points, 3), x-major row order."""
        ax, ay, az = self.axes()
        X, Y, Z = np.meshgrid(ax, ay, az, indexing="ij")
        return np.stack([X, Y, Z], axis=-1).reshape(-1, 3)

    def max_radius(self) -> float:
        """Largest r such that the ball B_r(0) lies inside the box."""
        ax, ay, az = self.axes()
        return min(min(-a[0], a[-1]) for a in (ax, ay, az))

    def require_radius(self, radius: float, what: str = "field support") -> None:
        have = self.max_radius()
        if have < radius - 1e-12:
            raise ValueError(
                f"lattice too small for {what}: covers |x| <= {have:.6g}, "
                f"needs |x| <= {radius:.6g}"
            )

    def ball_mask(self, radius: float) -> np.ndarray:
        """Boolean mask over flattened nodes with |x| <= radius."""
        pts = self.points()
        return np.einsum("ij,ij->i", pts, pts) <= radius**2


def trilinear(lattice: BoxLattice, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of node values at arbitrary points.

    `values` has shape lattice.shape (or flattened n_points); `points` has
    shape (..., 3).  Points outside the box evaluate to 0.
    """
    vals = values.reshape(lattice.shape)
    pts = np.asarray(points, dtype=float)
    out_shape = pts.shape[:-1]
    p = pts.reshape(-1, 3)

    u = (p - np.asarray(lattice.origin)) / lattice.spacing
    nx, ny, nz = lattice.shape
    inside = (
        (u[:, 0] >= 0) & (u[:, 0] <= nx - 1)
        & (u[:, 1] >= 0) & (u[:, 1] <= ny - 1)
        & (u[:, 2] >= 0) & (u[:, 2] <= nz - 1)
    )
    u = np.clip(u, 0.0, np.array(lattice.shape) - 1.000000001)

    i0 = u.astype(np.int64)
    f = u - i0
    i1 = i0 + 1

    def gather(ix, iy, iz):
        return vals[ix, iy, iz]

    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    x1, y1, z1 = i1[:, 0], i1[:, 1], i1[:, 2]

    out = (
        gather(x0, y0, z0) * gx * gy * gz
        + gather(x1, y0, z0) * fx * gy * gz
        + gather(x0, y1, z0) * gx * fy * gz
        + gather(x0, y0, z1) * gx * gy * fz
        + gather(x1, y1, z0) * fx * fy * gz
        + gather(x1, y0, z1) * fx * gy * fz
        + gather(x0, y1, z1) * gx * fy * fz
        + gather(x1, y1, z1) * fx * fy * fz
    )
    out[~inside] = 0.0
    return out.reshape(out_shape)


def trilinear_vec(lattice: BoxLattice, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of vector-valued node data (shape + (k,)).

    Shares index/weight computation across the k components; points outside
    the box evaluate to 0.
    """
    k = values.shape[-1]
    vals = values.reshape(lattice.shape + (k,))
    pts = np.asarray(points, dtype=float)
    out_shape = pts.shape[:-1] + (k,)
    p = pts.reshape(-1, 3)

    u = (p - np.asarray(lattice.origin)) / lattice.spacing
    nx, ny, nz = lattice.shape
    inside = (
        (u[:, 0] >= 0) & (u[:, 0] <= nx - 1)
        & (u[:, 1] >= 0) & (u[:, 1] <= ny - 1)
        & (u[:, 2] >= 0) & (u[:, 2] <= nz - 1)
    )
    u = np.clip(u, 0.0, np.array(lattice.shape) - 1.000000001)
    i0 = u.astype(np.int64)
    f = u - i0
    i1 = i0 + 1
    fx, fy, fz = f[:, 0:1], f[:, 1:2], f[:, 2:3]
    gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    x1, y1, z1 = i1[:, 0], i1[:, 1], i1[:, 2]
    out = (
        vals[x0, y0, z0] * (gx * gy * gz)
        + vals[x1, y0, z0] * (fx * gy * gz)
        + vals[x0, y1, z0] * (gx * fy * gz)
        + vals[x0, y0, z1] * (gx * gy * fz)
        + vals[x1, y1, z0] * (fx * fy * gz)
        + vals[x1, y0, z1] * (fx * gy * fz)
        + vals[x0, y1, z1] * (gx * fy * fz)
        + vals[x1, y1, z1] * (fx * fy * fz)
    )
    out[~inside] = 0.0
    return out.reshape(out_shape)


def lattice_sum(lattice: BoxLattice, values: np.ndarray) -> float:
    """Integral of a lattice-sampled compactly supported function.

    Plain node sum times the cell volume; for smooth functions vanishing
    well inside the box this converges super-algebraically in the spacing.
    """
    return float(np.sum(values)) * lattice.spacing**3
