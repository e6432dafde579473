"""Heat-semigroup operators on the periodic torus, diagonal in Fourier space.

Two primitives back everything else:

* ``heat_evolve``: u0 -> e^{t nu Lap} u0 evaluated on every grid time.
* ``duhamel_integral``: f -> int_0^t e^{(t-s) nu Lap} f(s) ds, computed by the
  exponential-integrator recursion with f piecewise constant on time cells,

      J_{n+1,k} = e^{-lam_k dt} J_{n,k} + dt phi1(lam_k dt) f_{n,k},

  which is exact per step for cell-constant f (in particular for discretized
  white noise) and stable for any stiffness.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .grid import Grid, check_spacetime, check_spatial
from .spectral import laplacian_symbol


def phi1(z: np.ndarray) -> np.ndarray:
    """phi1(z) = (1 - e^{-z}) / z with the removable singularity phi1(0) = 1."""
    z = np.asarray(z, dtype=np.float64)
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = -np.expm1(-z[nz]) / z[nz]
    return out


@dataclass(frozen=True)
class SemigroupContext:
    """Grid plus diffusion coefficient, with precomputed spectral multipliers."""

    grid: Grid
    nu: float = 1.0
    eigenvalues: np.ndarray = field(init=False, repr=False)
    step_decay: np.ndarray = field(init=False, repr=False)
    step_phi1: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lam = self.nu * laplacian_symbol(self.grid.spatial_sizes)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "step_decay", np.exp(-lam * self.grid.dt))
        object.__setattr__(self, "step_phi1", phi1(lam * self.grid.dt))

    @property
    def spatial_axes(self) -> tuple[int, ...]:
        d = self.grid.spatial_dim
        return tuple(range(-d, 0))


def heat_evolve(ctx: SemigroupContext, u0: np.ndarray) -> np.ndarray:
    """Flow the initial condition: slice n is e^{-lam n dt} applied to u0.

    Slice 0 returns u0 itself (no FFT round-trip), so t=0 is bit-exact.
    """
    u0 = check_spatial(ctx.grid, u0, "u0")
    axes = ctx.spatial_axes
    u0_hat = np.fft.fftn(u0, axes=axes)
    times = ctx.grid.times()
    decay = np.exp(-np.multiply.outer(times[1:], ctx.eigenvalues))
    out = np.empty(ctx.grid.spacetime_shape, dtype=np.float64)
    out[0] = u0
    out[1:] = np.fft.ifftn(decay * u0_hat[None], axes=axes).real
    return out


def duhamel_integral(ctx: SemigroupContext, f: np.ndarray) -> np.ndarray:
    """Integrate the forcing against the semigroup; slice 0 is zero.

    Slices 0..N_t-1 of ``f`` are used (one value per time cell); the final
    slice of a space-time field is ignored.
    """
    f = check_spacetime(ctx.grid, f, "f")
    axes = ctx.spatial_axes
    n_t = ctx.grid.time_steps
    f_hat = np.fft.fftn(f[:n_t], axes=axes)
    gain = ctx.grid.dt * ctx.step_phi1
    j_hat = np.zeros_like(f_hat)
    acc = np.zeros(ctx.grid.spatial_sizes, dtype=complex)
    for n in range(n_t):
        acc = ctx.step_decay * acc + gain * f_hat[n]
        j_hat[n] = acc
    out = np.empty(ctx.grid.spacetime_shape, dtype=np.float64)
    out[0] = 0.0
    out[1:] = np.fft.ifftn(j_hat, axes=axes).real
    return out


def pointwise_product(*fields: np.ndarray) -> np.ndarray:
    """Entrywise product, evaluated left to right in the given order."""
    if not fields:
        raise ValueError("need at least one field")
    shape = fields[0].shape
    for g in fields[1:]:
        if g.shape != shape:
            raise ValueError(f"shape mismatch: {g.shape} != {shape}")
    return reduce(np.multiply, fields)
