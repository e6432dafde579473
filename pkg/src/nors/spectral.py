"""Spectral utilities on periodic grids: wavenumbers, derivatives, dealiasing,
and band-limited resampling between resolutions.

All transforms use numpy's unnormalized fftn / normalized ifftn pair over the
trailing ``d`` axes, so these helpers work on single fields and on stacks of
time slices alike.
"""
from __future__ import annotations

import numpy as np


def wavenumbers(size: int) -> np.ndarray:
    """Integer wavenumbers in FFT layout: 0, 1, ..., -1."""
    return np.fft.fftfreq(size, d=1.0 / size)


def laplacian_symbol(sizes: tuple[int, ...]) -> np.ndarray:
    """Eigenvalues of -Laplacian on the unit torus: 4 pi^2 |k|^2, fftn layout."""
    ks = np.meshgrid(*[wavenumbers(s) for s in sizes], indexing="ij")
    k2 = np.zeros(sizes, dtype=np.float64)
    for k in ks:
        k2 += k * k
    return 4.0 * np.pi**2 * k2


def derivative(field: np.ndarray, axis: int, d: int) -> np.ndarray:
    """Spectral d/dx_axis of a real periodic field.

    ``d`` is the number of trailing spatial axes; leading axes (time, batch)
    pass through.  The Nyquist mode is zeroed, the standard choice for real
    odd-order spectral derivatives.
    """
    if not 0 <= axis < d:
        raise ValueError(f"axis {axis} out of range for d={d}")
    arr_axis = field.ndim - d + axis
    size = field.shape[arr_axis]
    k = wavenumbers(size)
    if size % 2 == 0:
        k = k.copy()
        k[size // 2] = 0.0
    shape = [1] * field.ndim
    shape[arr_axis] = size
    mult = (1j * 2.0 * np.pi * k).reshape(shape)
    spatial_axes = tuple(range(field.ndim - d, field.ndim))
    fhat = np.fft.fftn(field, axes=spatial_axes)
    return np.fft.ifftn(mult * fhat, axes=spatial_axes).real


def dealias_mask(sizes: tuple[int, ...]) -> np.ndarray:
    """2/3-rule mask: True where every |k_i| < X_i/3."""
    mask = np.ones(sizes, dtype=bool)
    ks = np.meshgrid(*[wavenumbers(s) for s in sizes], indexing="ij")
    for k, s in zip(ks, sizes):
        mask &= np.abs(k) < s / 3.0
    return mask


def resample(field: np.ndarray, new_sizes: tuple[int, ...], d: int | None = None) -> np.ndarray:
    """Trigonometric resampling of a real periodic field to ``new_sizes``.

    Fourier coefficients are preserved; upsampling zero-pads the spectrum
    (band-limited interpolation) and downsampling truncates it.  Nyquist
    bins are split on the way up and folded on the way down so real fields
    stay real and up-then-down round-trips are exact.  Leading axes pass
    through.
    """
    new_sizes = tuple(int(s) for s in new_sizes)
    if d is None:
        d = len(new_sizes)
    old_sizes = field.shape[field.ndim - d:]
    if tuple(old_sizes) == new_sizes:
        return np.array(field, dtype=np.float64, copy=True)
    spatial_axes = tuple(range(field.ndim - d, field.ndim))
    coeff = np.fft.fftn(field, axes=spatial_axes) / np.prod(old_sizes)
    for ax_i, (old, new) in enumerate(zip(old_sizes, new_sizes)):
        if old == new:
            continue
        axis = field.ndim - d + ax_i
        shape = list(coeff.shape)
        shape[axis] = new
        out = np.zeros(shape, dtype=complex)

        def sl(a, lo, hi):
            idx = [slice(None)] * a.ndim
            idx[axis] = slice(lo, hi)
            return a[tuple(idx)]

        npos = (min(old, new) - 1) // 2  # interior positive modes 1..npos
        sl(out, 0, npos + 1)[...] = sl(coeff, 0, npos + 1)
        if npos > 0:
            sl(out, new - npos, new)[...] = sl(coeff, old - npos, old)
        if new > old:
            if old % 2 == 0:  # split the source Nyquist pair
                nyq = sl(coeff, old // 2, old // 2 + 1)
                sl(out, old // 2, old // 2 + 1)[...] += 0.5 * nyq
                sl(out, new - old // 2, new - old // 2 + 1)[...] += 0.5 * np.conj(nyq)
        else:
            if new % 2 == 0:  # fold both source modes at the target Nyquist
                sl(out, new // 2, new // 2 + 1)[...] = sl(
                    coeff, new // 2, new // 2 + 1
                ) + sl(coeff, old - new // 2, old - new // 2 + 1)
        coeff = out
    coeff *= np.prod(new_sizes)
    out = np.fft.ifftn(coeff, axes=spatial_axes).real
    return np.ascontiguousarray(out)
