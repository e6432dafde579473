"""Space-time grids on the periodic unit torus.

A grid discretizes [0, T] x [0, 1]^d.  Each spatial axis stores X_i points
x = 0, 1/X_i, ..., (X_i-1)/X_i with the endpoint identified with 0 (FFT
convention, no duplicated point).  Spatial fields are plain float64 arrays of
shape (X_1, ..., X_d); space-time fields carry a leading time axis with
N_t + 1 slices (t = 0, dt, ..., T).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid:
    spatial_dim: int
    spatial_sizes: tuple[int, ...]
    time_steps: int
    horizon: float

    @property
    def dt(self) -> float:
        return self.horizon / self.time_steps

    @property
    def dx(self) -> tuple[float, ...]:
        return tuple(1.0 / x for x in self.spatial_sizes)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    @property
    def space_shape(self) -> tuple[int, ...]:
        return self.spatial_sizes

    @property
    def spacetime_shape(self) -> tuple[int, ...]:
        return (self.time_steps + 1, *self.spatial_sizes)

    def times(self) -> np.ndarray:
        return np.arange(self.time_steps + 1) * self.dt

    def coordinates(self, axis: int) -> np.ndarray:
        """Normalized coordinates of axis points, in [0, 1)."""
        if not 0 <= axis < self.spatial_dim:
            raise ValueError(f"axis {axis} out of range for d={self.spatial_dim}")
        x = self.spatial_sizes[axis]
        return np.arange(x, dtype=np.float64) / x

    def meshgrid(self) -> list[np.ndarray]:
        axes = [self.coordinates(i) for i in range(self.spatial_dim)]
        return list(np.meshgrid(*axes, indexing="ij"))


def make(d: int, sizes, time_steps: int, horizon: float) -> Grid:
    """Build a grid, validating dimensions and positivity."""
    if d not in (1, 2):
        raise ValueError(f"spatial dimension must be 1 or 2, got {d}")
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != d:
        raise ValueError(f"expected {d} spatial sizes, got {len(sizes)}")
    if any(s < 2 for s in sizes):
        raise ValueError(f"spatial sizes must be >= 2, got {sizes}")
    if time_steps < 1:
        raise ValueError(f"time_steps must be >= 1, got {time_steps}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    return Grid(d, sizes, int(time_steps), float(horizon))


def check_spatial(grid: Grid, field: np.ndarray, name: str = "field") -> np.ndarray:
    field = np.asarray(field, dtype=np.float64)
    if field.shape != grid.space_shape:
        raise ValueError(f"{name} shape {field.shape} != grid {grid.space_shape}")
    return field


def check_spacetime(grid: Grid, field: np.ndarray, name: str = "field") -> np.ndarray:
    field = np.asarray(field, dtype=np.float64)
    if field.shape != grid.spacetime_shape:
        raise ValueError(f"{name} shape {field.shape} != grid {grid.spacetime_shape}")
    return field
