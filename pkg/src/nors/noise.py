"""Samplers for driving noise, initial conditions, and forcing terms.

Everything here is a pure function of (grid, spec, stream): re-sampling with
an equal stream replays the same field, and per-sample streams make dataset
generation order-independent.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid
from .rng import RngStream
from .spectral import laplacian_symbol


@dataclass(frozen=True)
class GrfSpec:
    """Mean-zero periodic Gaussian random field, sampled spectrally.

    ``power`` is the decay exponent of the covariance: covariance eigenvalues
    are amp^2 (4 pi^2 |k|^2 + shift)^(-power/2), so the filter applied to
    complex mode noise decays like (.)^(-power/4).  The defaults reproduce
    the usual vorticity initial-condition convention for operator-learning
    benchmarks (power 5 = 2*2.5, shift 49 = 7^2, amp 7^{3/2}).
    """

    power: float = 5.0
    shift: float = 49.0
    amp: float = 7.0**1.5


@dataclass(frozen=True)
class InitialConditionSpec:
    kind: str = "phi41_poly_plus_eta"  # or "grf_vorticity"
    kappa: float = 0.0  # perturbation scale; 0 = fixed initial condition
    lam: float = 2.0  # frequency scale of the sine perturbation
    modes: int = 10  # mode cutoff K of the sine perturbation
    grf: GrfSpec = field(default_factory=GrfSpec)

    def __post_init__(self):
        if self.kappa < 0 or self.lam <= 0 or self.modes < 0:
            raise ValueError("require kappa >= 0, lam > 0, modes >= 0")


@dataclass(frozen=True)
class ForcingSpec:
    sigma: float = 0.1
    kind: str = "white"  # or "smoothed_white"
    deterministic: bool = False
    deterministic_amplitude: float = 0.1
    smoothing: GrfSpec = field(default_factory=GrfSpec)

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.kind not in ("white", "smoothed_white"):
            raise ValueError(f"unknown forcing kind {self.kind!r}")


def sample_white_noise(grid: Grid, stream: RngStream) -> np.ndarray:
    """Space-time white noise: i.i.d. N(0, 1/(dt * prod dx)) per grid entry.

    This is the density whose integrals over disjoint cells are independent
    with variance equal to the cell volume.  Shape (N_t + 1, X...); the final
    slice exists for shape uniformity and is ignored by the integrators.
    """
    scale = 1.0 / np.sqrt(grid.dt * grid.cell_volume)
    return scale * stream.normal(grid.spacetime_shape)


def sample_eta(grid: Grid, stream: RngStream, lam: float = 2.0, modes: int = 10) -> np.ndarray:
    """Random sine perturbation sum_{k=-K..K} a_k/(1+k^2) sin(k pi (x-1/2)/lam).

    The a_k ~ N(0,1) are drawn in the fixed order k = -K..K (the k=0 draw is
    consumed even though sin(0) kills its term, keeping the order stable).
    """
    if grid.spatial_dim != 1:
        raise ValueError("eta perturbation is defined on 1d grids")
    x = grid.coordinates(0)
    coeffs = stream.normal(2 * modes + 1)
    out = np.zeros_like(x)
    for i, k in enumerate(range(-modes, modes + 1)):
        out += coeffs[i] / (1.0 + k * k) * np.sin(k * np.pi * (x - 0.5) / lam)
    return out


def phi41_initial(grid: Grid, kappa: float, stream: RngStream,
                  lam: float = 2.0, modes: int = 10) -> np.ndarray:
    """Initial condition x(1-x) + kappa * eta(x); kappa=0 is the fixed case."""
    if grid.spatial_dim != 1:
        raise ValueError("this initial condition is defined on 1d grids")
    x = grid.coordinates(0)
    u0 = x * (1.0 - x)
    if kappa != 0.0:
        u0 = u0 + kappa * sample_eta(grid, stream, lam=lam, modes=modes)
    return u0


def _grf_filter(grid: Grid, spec: GrfSpec) -> np.ndarray:
    filt = spec.amp * (laplacian_symbol(grid.spatial_sizes) + spec.shift) ** (-spec.power / 4.0)
    filt.flat[0] = 0.0  # zero-mean field
    return filt


def sample_grf_vorticity(grid: Grid, spec: GrfSpec, stream: RngStream) -> np.ndarray:
    """Gaussian random field via spectral filtering of complex mode noise.

    Complex noise a + ib (a drawn first, then b) is shaped by the covariance
    square root and inverse-transformed; taking the real part is the Hermitian
    symmetrization.  The spatial mean is exactly zero by construction.
    """
    if grid.spatial_dim != 2:
        raise ValueError("vorticity fields are defined on 2d grids")
    n_points = int(np.prod(grid.spatial_sizes))
    sqrt_eig = n_points * np.sqrt(2.0) * _grf_filter(grid, spec)
    a = stream.normal(grid.spatial_sizes)
    b = stream.normal(grid.spatial_sizes)
    return np.fft.ifftn(sqrt_eig * (a + 1j * b)).real


def smooth_noise(grid: Grid, white: np.ndarray, spec: GrfSpec) -> np.ndarray:
    """Filter each time slice of white noise by the GRF spectral amplitude."""
    d = grid.spatial_dim
    axes = tuple(range(-d, 0))
    filt = _grf_filter(grid, spec)
    return np.fft.ifftn(filt * np.fft.fftn(white, axes=axes), axes=axes).real


def ns_deterministic_force(grid: Grid, amplitude: float = 0.1) -> np.ndarray:
    """Steady force a (sin(2 pi (x1+x2)) + cos(2 pi (x1+x2)))."""
    x1, x2 = grid.meshgrid()
    s = 2.0 * np.pi * (x1 + x2)
    return amplitude * (np.sin(s) + np.cos(s))


def ns_forcing(grid: Grid, spec: ForcingSpec, stream: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Forcing pair (steady f, stochastic xi) for the 2d vorticity equation.

    xi is unscaled; the solver multiplies by sigma.  ``smoothed_white``
    passes per-time-step white noise through the GRF spectral filter.
    """
    if grid.spatial_dim != 2:
        raise ValueError("this forcing is defined on 2d grids")
    f = ns_deterministic_force(grid, spec.deterministic_amplitude) if spec.deterministic \
        else np.zeros(grid.space_shape)
    xi = sample_white_noise(grid, stream)
    if spec.kind == "smoothed_white":
        xi = smooth_noise(grid, xi, spec.smoothing)
    return f, xi
