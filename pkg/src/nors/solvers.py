"""Ground-truth solvers for the three benchmark equations.

The 1d reaction equations step with a first-order exponential integrator:
the diffusion factor is applied exactly per step (same propagator and phi1
weight the Duhamel integral uses), the reaction and noise explicitly.  This
keeps the discrete solution consistent with the mild form

    u_{n+1} = e^{-lam dt} u_n + dt phi1(lam dt) (mu(u_n) + noise_n)

so the zero-reaction, zero-noise limit reproduces the heat flow to roundoff.

The 2d vorticity equation is pseudo-spectral: velocity from the stream
function, 2/3-dealiased advection, Crank-Nicolson diffusion, explicit
forcing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, check_spacetime, check_spatial
from .semigroup import phi1
from .spectral import dealias_mask, laplacian_symbol, wavenumbers


class BlowupError(RuntimeError):
    """Solution magnitude exceeded the configured bound."""


@dataclass(frozen=True)
class SolverConfig:
    nu: float = 1.0
    sigma: float = 0.1
    substeps: int = 1  # solver dt = storage dt / substeps
    reaction_scale: float = 1.0  # scales 3u - u^3; 0 turns the reaction off
    blowup_bound: float = 1e6

    def __post_init__(self):
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


def _check_blowup(u: np.ndarray, step: int, bound: float) -> None:
    m = np.max(np.abs(u))
    if not np.isfinite(m) or m > bound:
        raise BlowupError(f"|u| reached {m:.3g} at step {step} (bound {bound:.3g})")


def _solve_reaction_1d(grid: Grid, u0: np.ndarray, xi: np.ndarray,
                       cfg: SolverConfig, multiplicative: bool) -> np.ndarray:
    u0 = check_spatial(grid, u0, "u0")
    xi = check_spacetime(grid, xi, "xi")
    if grid.spatial_dim != 1:
        raise ValueError("reaction solvers are 1d")
    dt = grid.dt / cfg.substeps
    lam = cfg.nu * laplacian_symbol(grid.spatial_sizes)
    decay = np.exp(-lam * dt)
    gain = dt * phi1(lam * dt)

    out = np.empty(grid.spacetime_shape)
    out[0] = u0
    u = u0.copy()
    for n in range(grid.time_steps):
        xi_n = xi[n]  # held constant across substeps of one storage cell
        for _ in range(cfg.substeps):
            forcing = cfg.reaction_scale * (3.0 * u - u**3)
            if multiplicative:
                forcing = forcing + cfg.sigma * u * xi_n
            else:
                forcing = forcing + cfg.sigma * xi_n
            u_hat = decay * np.fft.fft(u) + gain * np.fft.fft(forcing)
            u = np.fft.ifft(u_hat).real
        _check_blowup(u, n + 1, cfg.blowup_bound)
        out[n + 1] = u
    return out


def solve_phi41(grid: Grid, u0: np.ndarray, xi: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """d_t u - nu Lap u = 3u - u^3 + sigma xi, periodic."""
    return _solve_reaction_1d(grid, u0, xi, cfg, multiplicative=False)


def solve_rd_mult(grid: Grid, u0: np.ndarray, xi: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """d_t u - nu Lap u = 3u - u^3 + sigma u xi, periodic."""
    return _solve_reaction_1d(grid, u0, xi, cfg, multiplicative=True)


def velocity_from_vorticity(grid: Grid, w_hat: np.ndarray):
    """Spectral velocity components from the vorticity transform.

    psi_hat = w_hat / (4 pi^2 |k|^2) with the mean mode zeroed;
    u = (d2 psi, -d1 psi), divergence-free by construction.
    """
    lap = laplacian_symbol(grid.spatial_sizes)
    inv = np.zeros_like(lap)
    nz = lap > 0
    inv[nz] = 1.0 / lap[nz]
    psi_hat = w_hat * inv
    k1, k2 = derivative_wavenumbers(grid)
    u1_hat = (2j * np.pi) * k2 * psi_hat
    u2_hat = -(2j * np.pi) * k1 * psi_hat
    return u1_hat, u2_hat


def derivative_wavenumbers(grid: Grid):
    """Wavenumber meshes used for first derivatives (Nyquist zeroed)."""
    ks = []
    for s in grid.spatial_sizes:
        k = wavenumbers(s)
        if s % 2 == 0:
            k = k.copy()
            k[s // 2] = 0.0  # Nyquist zeroed for odd-order derivatives
        ks.append(k)
    return np.meshgrid(*ks, indexing="ij")


def solve_ns2d(grid: Grid, w0: np.ndarray, xi: np.ndarray, f: np.ndarray,
               cfg: SolverConfig) -> np.ndarray:
    """Vorticity form d_t w - nu Lap w = -u.grad(w) + f + sigma xi, periodic."""
    w0 = check_spatial(grid, w0, "w0")
    xi = check_spacetime(grid, xi, "xi")
    f = check_spatial(grid, f, "f")
    if grid.spatial_dim != 2:
        raise ValueError("the vorticity solver is 2d")
    dt = grid.dt / cfg.substeps
    lam = cfg.nu * laplacian_symbol(grid.spatial_sizes)
    cn_num = 1.0 - 0.5 * dt * lam
    cn_den = 1.0 + 0.5 * dt * lam
    mask = dealias_mask(grid.spatial_sizes)
    k1, k2 = derivative_wavenumbers(grid)
    f_hat = np.fft.fft2(f)

    out = np.empty(grid.spacetime_shape)
    out[0] = w0
    w_hat = np.fft.fft2(w0)
    for n in range(grid.time_steps):
        xi_hat = np.fft.fft2(xi[n])
        for _ in range(cfg.substeps):
            u1_hat, u2_hat = velocity_from_vorticity(grid, w_hat)
            wx_hat = (2j * np.pi) * k1 * w_hat
            wy_hat = (2j * np.pi) * k2 * w_hat
            advect = (
                np.fft.ifft2(u1_hat).real * np.fft.ifft2(wx_hat).real
                + np.fft.ifft2(u2_hat).real * np.fft.ifft2(wy_hat).real
            )
            rhs_hat = -(mask * np.fft.fft2(advect)) + f_hat + cfg.sigma * xi_hat
            w_hat = (cn_num * w_hat + dt * rhs_hat) / cn_den
        w = np.fft.ifft2(w_hat).real
        _check_blowup(w, n + 1, cfg.blowup_bound)
        out[n + 1] = w
        w_hat = np.fft.fft2(w)
    return out
