import numpy as np
import pytest

from nors import grid as gridmod
from nors.noise import (
    ForcingSpec,
    GrfSpec,
    InitialConditionSpec,
    ns_deterministic_force,
    ns_forcing,
    phi41_initial,
    sample_eta,
    sample_grf_vorticity,
    sample_white_noise,
    smooth_noise,
)
from nors.rng import RngStream, derive


@pytest.fixture
def g128():
    return gridmod.make(1, [128], 100, 0.05)


def test_white_noise_entry_variance(g128):
    # oracle: per-entry variance 1/(dt dx); ~1.3e6 entries -> stderr ~0.12%
    target = 1.0 / (g128.dt * g128.dx[0])
    assert target == pytest.approx(256000.0)
    samples = np.stack([
        sample_white_noise(g128, derive(42, i)) for i in range(100)
    ])
    assert samples.var() == pytest.approx(target, rel=0.01)
    stderr = np.sqrt(target**2 / samples.size) * 3
    assert abs(samples.mean()) < 3 * np.sqrt(target / samples.size) * 10


def test_white_noise_variance_scales_with_dx():
    coarse = gridmod.make(1, [64], 50, 0.05)
    fine = gridmod.make(1, [128], 50, 0.05)
    v_coarse = np.stack([sample_white_noise(coarse, derive(1, i)) for i in range(200)]).var()
    v_fine = np.stack([sample_white_noise(fine, derive(2, i)) for i in range(200)]).var()
    assert v_fine / v_coarse == pytest.approx(2.0, rel=0.05)


def test_white_noise_cell_integral_variance(g128):
    # sum of entry*dt*dx over a region has variance ~ dt*dx*cell_count
    region = (slice(0, 20), slice(0, 32))
    cell = g128.dt * g128.dx[0]
    sums = np.array([
        sample_white_noise(g128, derive(9, i))[region].sum() * cell
        for i in range(400)
    ])
    expected = cell * 20 * 32
    assert sums.var() == pytest.approx(expected, rel=0.25)


def test_eta_zero_coefficients(g128, monkeypatch):
    class ZeroStream:
        def normal(self, shape=()):
            return np.zeros(shape)

    assert np.all(sample_eta(g128, ZeroStream()) == 0.0)


def test_eta_k0_term_vanishes(g128):
    # only the k=0 coefficient nonzero -> field is identically zero
    class OneHot:
        def __init__(self):
            self.calls = 0

        def normal(self, shape=()):
            out = np.zeros(shape)
            out[10] = 1.0  # k = 0 position in the -10..10 draw order
            return out

    assert np.max(np.abs(sample_eta(g128, OneHot()))) == 0.0


def test_eta_pointwise_variance(g128):
    # closed-form oracle at x = 0.75, lam = 2, K = 10
    ks = np.arange(-10, 11)
    target = np.sum(np.sin(ks * np.pi / 8.0) ** 2 / (1.0 + ks**2) ** 2)
    idx = 96  # x = 0.75 on a 128 grid
    assert g128.coordinates(0)[idx] == 0.75
    draws = np.array([
        sample_eta(g128, derive(11, i))[idx] for i in range(100_000)
    ])
    assert draws.var() == pytest.approx(target, rel=0.02)


def test_phi41_initial(g128):
    x = g128.coordinates(0)
    u0 = phi41_initial(g128, 0.0, derive(0, 0))
    assert np.array_equal(u0, x * (1 - x))
    assert u0[64] == 0.25  # x = 0.5

    class ZeroStream:
        def normal(self, shape=()):
            return np.zeros(shape)

    u0k = phi41_initial(g128, 0.1, ZeroStream())
    assert np.array_equal(u0k, x * (1 - x))


@pytest.fixture
def g2d():
    return gridmod.make(2, [64, 64], 100, 0.05)


def test_grf_zero_mean_and_determinism(g2d):
    spec = GrfSpec()
    w = sample_grf_vorticity(g2d, spec, derive(5, 1))
    assert abs(w.mean()) < 1e-13 * max(1.0, np.abs(w).max())
    w2 = sample_grf_vorticity(g2d, spec, derive(5, 1))
    assert np.array_equal(w, w2)


def test_grf_spectral_ratio(g2d):
    # amplitude-ratio oracle: E|w_hat(k)|^2 ~ sqrt_eig(k)^2
    spec = GrfSpec()
    n = 10_000
    e1 = 0.0
    e4 = 0.0
    for i in range(n):
        w_hat = np.fft.fft2(sample_grf_vorticity(g2d, spec, derive(21, i)))
        e1 += abs(w_hat[1, 0]) ** 2 + abs(w_hat[0, 1]) ** 2
        e4 += abs(w_hat[4, 0]) ** 2 + abs(w_hat[0, 4]) ** 2
    lam1 = 4 * np.pi**2
    lam4 = 4 * np.pi**2 * 16
    # squared filter ratio: [(lam1+shift)/(lam4+shift)]^(-power/2)
    predicted = ((lam1 + spec.shift) / (lam4 + spec.shift)) ** (-spec.power / 2.0)
    assert (e1 / e4) == pytest.approx(predicted, rel=0.05)


def test_grf_real_valued(g2d):
    # imaginary residue after the inverse transform is below 1e-12
    spec = GrfSpec()
    n_points = 64 * 64
    from nors.noise import _grf_filter

    sqrt_eig = n_points * np.sqrt(2.0) * _grf_filter(g2d, spec)
    s = derive(3, 3)
    coeff = sqrt_eig * (s.normal((64, 64)) + 1j * s.normal((64, 64)))
    z = np.fft.ifftn(coeff)
    w = sample_grf_vorticity(g2d, spec, derive(3, 3))
    assert np.array_equal(w, z.real)


def test_ns_deterministic_force(g2d):
    f = ns_deterministic_force(g2d)
    assert f[0, 0] == pytest.approx(0.1)
    x1, x2 = g2d.meshgrid()
    # constant along x1 + x2 = const: compare two points on the same diagonal
    assert f[3, 5] == pytest.approx(f[5, 3], abs=1e-15)
    assert f[0, 8] == pytest.approx(f[8, 0], abs=1e-15)


def test_ns_forcing_kinds(g2d):
    spec = ForcingSpec(sigma=0.05, kind="white", deterministic=True,
                       deterministic_amplitude=0.1)
    f, xi = ns_forcing(g2d, spec, derive(2, 0))
    assert f.shape == (64, 64) and xi.shape == (101, 64, 64)
    f2, xi2 = ns_forcing(g2d, spec, derive(2, 0))
    assert np.array_equal(xi, xi2)
    smooth = ForcingSpec(sigma=0.05, kind="smoothed_white")
    f3, xi3 = ns_forcing(g2d, smooth, derive(2, 0))
    assert np.all(f3 == 0.0)
    # smoothing kills high-frequency energy relative to white noise
    sp_w = np.abs(np.fft.fft2(xi[0])) ** 2
    sp_s = np.abs(np.fft.fft2(xi3[0])) ** 2
    ratio_w = sp_w[20:30, 0].mean() / sp_w[1:4, 0].mean()
    ratio_s = sp_s[20:30, 0].mean() / sp_s[1:4, 0].mean()
    assert ratio_s < 0.05 * ratio_w
    # each slice stays zero-mean under the filter
    assert np.max(np.abs(xi3.mean(axis=(1, 2)))) < 1e-10 * np.abs(xi3).max()


def test_spec_validation():
    with pytest.raises(ValueError):
        ForcingSpec(sigma=-1.0)
    with pytest.raises(ValueError):
        ForcingSpec(kind="pink")
    with pytest.raises(ValueError):
        InitialConditionSpec(kappa=-0.1)
