"""Fourier neural operator with hand-derived reverse-mode gradients.

Forward pass (input shape (B, X_1, ..., X_d, C_in)):

    v0 = P(input)                                   pointwise linear
    v  <- act( W v + b + irfft( R . truncate(rfft(v)) ) )   K times
    out = Q2( relu( Q1(v) ) )                       pointwise two-layer head

The last Fourier layer carries no activation.  Spectral weights act on the
real-signal half spectrum: the retained low modes are bins [0:m) on the rfft
axis, and for d=2 additionally the top/bottom row blocks [0:m1) and [-m1:).
Weights are stored as real arrays with a trailing (re, im) axis so the whole
parameter set is a flat dict of real float64 tensors.

The backward pass composes exact adjoints of every stage.  The only
non-obvious pieces are the adjoints of numpy's rfft/irfft pair under the
real pairing <A, B> = sum(Re A Re B + Im A Im B):

    adjoint(rfft)(G)  = N * Re(ifft(G zero-padded to length N))
    adjoint(irfft)(g) = (1/N) * c . rfft(g),  c = [1, 2, ..., 2, 1],
                        imaginary parts zeroed at the self-conjugate bins

(irfft ignores the imaginary parts of the DC/Nyquist bins, hence the zeroing;
interior bins appear twice in the implicit Hermitian extension, hence the 2).
Complex fft/ifft along the remaining axes have adjoints N*ifft and fft/N.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from . import ntensor
from .rng import RngStream


class CheckpointError(Exception):
    """Manifest or configuration mismatch in a stored parameter set."""


@dataclass(frozen=True)
class FnoConfig:
    spatial_dim: int
    in_channels: int
    hidden: int = 32
    layers: int = 4
    modes: tuple[int, ...] = (16,)
    proj_hidden: int = 128
    activation: str = "relu"
    dtype: str = "f64"

    def __post_init__(self):
        if self.spatial_dim not in (1, 2):
            raise ValueError("spatial_dim must be 1 or 2")
        modes = self.modes
        if isinstance(modes, int):
            modes = (modes,) * self.spatial_dim
        modes = tuple(int(m) for m in modes)
        if len(modes) == 1 and self.spatial_dim == 2:
            modes = modes * 2
        if len(modes) != self.spatial_dim or any(m < 1 for m in modes):
            raise ValueError(f"bad modes {self.modes} for d={self.spatial_dim}")
        object.__setattr__(self, "modes", modes)
        if min(self.in_channels, self.hidden, self.layers, self.proj_hidden) < 1:
            raise ValueError("channel/layer counts must be >= 1")
        if self.activation != "relu":
            raise ValueError("only relu is supported")
        if self.dtype not in ("f64", "f32"):
            raise ValueError("dtype must be f64 or f32")

    def spectral_shape(self) -> tuple[int, ...]:
        """Stored shape of one layer's spectral weight (without h, h, 2)."""
        if self.spatial_dim == 1:
            return (self.modes[0],)
        return (2 * self.modes[0], self.modes[1])

    def tensor_names(self) -> list[str]:
        names = ["p_w", "p_b"]
        for i in range(self.layers):
            names += [f"r{i}", f"w{i}", f"b{i}"]
        names += ["q_w1", "q_b1", "q_w2", "q_b2"]
        return names


def init_params(config: FnoConfig, stream: RngStream) -> dict[str, np.ndarray]:
    """Uniform init: spectral weights scaled by 1/h^2 per part, pointwise maps
    by +-sqrt(1/fan_in), biases zero.  Deterministic in the stream."""
    h = config.hidden
    params: dict[str, np.ndarray] = {}
    s_in = np.sqrt(1.0 / config.in_channels)
    params["p_w"] = s_in * (2.0 * stream.uniform((config.in_channels, h)) - 1.0)
    params["p_b"] = np.zeros(h)
    scale = 1.0 / (h * h)
    for i in range(config.layers):
        shape = (*config.spectral_shape(), h, h)
        re = scale * stream.uniform(shape)
        im = scale * stream.uniform(shape)
        params[f"r{i}"] = np.stack([re, im], axis=-1)
        s_h = np.sqrt(1.0 / h)
        params[f"w{i}"] = s_h * (2.0 * stream.uniform((h, h)) - 1.0)
        params[f"b{i}"] = np.zeros(h)
    s_h = np.sqrt(1.0 / h)
    params["q_w1"] = s_h * (2.0 * stream.uniform((h, config.proj_hidden)) - 1.0)
    params["q_b1"] = np.zeros(config.proj_hidden)
    s_p = np.sqrt(1.0 / config.proj_hidden)
    params["q_w2"] = s_p * (2.0 * stream.uniform((config.proj_hidden, 1)) - 1.0)
    params["q_b2"] = np.zeros(1)
    return params


# ---------------------------------------------------------------------------
# spectral block plumbing


def _effective_modes(config: FnoConfig, sizes: tuple[int, ...]) -> tuple[int, ...]:
    """Retained modes at this resolution: config modes clamped to floor(X/2)."""
    return tuple(min(m, s // 2) for m, s in zip(config.modes, sizes))


def _blocks(config: FnoConfig, sizes: tuple[int, ...]):
    """Pairs (field indexer, weight indexer) for every retained mode block.

    Field indexers address the half spectrum (B, X..., Xr_last, h); weight
    indexers address the stored weight array.
    """
    eff = _effective_modes(config, sizes)
    if config.spatial_dim == 1:
        m = eff[0]
        return [((slice(0, m),), (slice(0, m),))]
    m1, m2 = eff
    big_m1 = config.modes[0]
    x1 = sizes[0]
    return [
        ((slice(0, m1), slice(0, m2)), (slice(0, m1), slice(0, m2))),
        ((slice(x1 - m1, x1), slice(0, m2)),
         (slice(2 * big_m1 - m1, 2 * big_m1), slice(0, m2))),
    ]


_MIX_FWD = {1: "bki,kio->bko", 2: "bxyi,xyio->bxyo"}
_MIX_GRAD_R = {1: "bki,bko->kio", 2: "bxyi,bxyo->xyio"}
_MIX_GRAD_X = {1: "bko,kio->bki", 2: "bxyo,xyio->bxyi"}


def _spectral_forward(config, r_cplx, v, sizes):
    axes = tuple(range(1, 1 + config.spatial_dim))
    f_hat = np.fft.rfftn(v, axes=axes)
    out_ft = np.zeros_like(f_hat)
    x_blocks = []
    for fix, wix in _blocks(config, sizes):
        sl = (slice(None), *fix, slice(None))
        x_blk = f_hat[sl]
        x_blocks.append(x_blk)
        out_ft[sl] = np.einsum(_MIX_FWD[config.spatial_dim], x_blk, r_cplx[wix])
    out = np.fft.irfftn(out_ft, s=sizes, axes=axes)
    return out, x_blocks


def _spectral_backward(config, r_cplx, x_blocks, g, sizes):
    """Gradients of the spectral block: (g_v, r_bar as complex array)."""
    d = config.spatial_dim
    g_hat = _irfftn_adjoint(g, d)
    r_bar = np.zeros_like(r_cplx)
    gx_hat = np.zeros_like(g_hat)
    for (fix, wix), x_blk in zip(_blocks(config, sizes), x_blocks):
        sl = (slice(None), *fix, slice(None))
        ds = g_hat[sl]
        r_bar[wix] = np.einsum(_MIX_GRAD_R[d], np.conj(x_blk), ds)
        gx_hat[sl] = np.einsum(_MIX_GRAD_X[d], ds, np.conj(r_cplx[wix]))
    g_v = _rfftn_adjoint(gx_hat, d, sizes)
    return g_v, r_bar


def _irfftn_adjoint(g: np.ndarray, d: int) -> np.ndarray:
    axes = tuple(range(1, 1 + d))
    last = axes[-1]
    n_last = g.shape[last]
    y = np.fft.rfft(g, axis=last) / n_last
    n_r = y.shape[last]
    c = np.full(n_r, 2.0)
    c[0] = 1.0
    if n_last % 2 == 0:
        c[-1] = 1.0
    shape = [1] * y.ndim
    shape[last] = n_r
    y = y * c.reshape(shape)
    idx = [slice(None)] * y.ndim
    idx[last] = 0
    y[tuple(idx)] = y[tuple(idx)].real
    if n_last % 2 == 0:
        idx[last] = n_r - 1
        y[tuple(idx)] = y[tuple(idx)].real
    for ax in axes[:-1]:
        y = np.fft.fft(y, axis=ax) / g.shape[ax]
    return y


def _rfftn_adjoint(g_hat: np.ndarray, d: int, sizes: tuple[int, ...]) -> np.ndarray:
    axes = tuple(range(1, 1 + d))
    last = axes[-1]
    for ax in axes[:-1]:
        g_hat = np.fft.ifft(g_hat, axis=ax) * g_hat.shape[ax]
    n_last = sizes[-1]
    shape = list(g_hat.shape)
    shape[last] = n_last
    z = np.zeros(shape, dtype=complex)
    idx = [slice(None)] * len(shape)
    idx[last] = slice(0, g_hat.shape[last])
    z[tuple(idx)] = g_hat
    return (np.fft.ifft(z, axis=last) * n_last).real


# ---------------------------------------------------------------------------
# forward / backward


def _as_complex(r: np.ndarray) -> np.ndarray:
    return r[..., 0] + 1j * r[..., 1]


def _check_input(config: FnoConfig, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == config.spatial_dim + 1:  # single sample
        x = x[None]
    if x.ndim != config.spatial_dim + 2 or x.shape[-1] != config.in_channels:
        raise ValueError(
            f"input shape {x.shape} does not match d={config.spatial_dim}, "
            f"in_channels={config.in_channels}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    dtype = np.float32 if config.dtype == "f32" else np.float64
    return np.ascontiguousarray(x, dtype=dtype)


def fno_forward(params: dict, config: FnoConfig, x: np.ndarray,
                return_cache: bool = False):
    """Apply the operator; returns (B, X..., 1), or (out, cache) for backward."""
    x = _check_input(config, x)
    if config.dtype == "f32":
        params = {k: np.asarray(v, dtype=np.float32) for k, v in params.items()}
    sizes = x.shape[1:-1]
    cache = {"x": x, "sizes": sizes, "layers": []}
    v = x @ params["p_w"] + params["p_b"]
    cache["v0"] = v
    for i in range(config.layers):
        r_cplx = _as_complex(params[f"r{i}"])
        spec, x_blocks = _spectral_forward(config, r_cplx, v, sizes)
        pre = v @ params[f"w{i}"] + params[f"b{i}"] + spec
        last = i == config.layers - 1
        out = pre if last else np.maximum(pre, 0.0)
        cache["layers"].append({"x_in": v, "x_blocks": x_blocks,
                                "mask": None if last else pre > 0})
        v = out
    cache["vk"] = v
    q1pre = v @ params["q_w1"] + params["q_b1"]
    q1 = np.maximum(q1pre, 0.0)
    cache["q_mask"] = q1pre > 0
    cache["q1"] = q1
    out = q1 @ params["q_w2"] + params["q_b2"]
    return (out, cache) if return_cache else out


def _pointwise_grads(x_in, g, w):
    """(w_bar, b_bar, g_x) for a pointwise linear y = x w + b."""
    flat_x = x_in.reshape(-1, x_in.shape[-1])
    flat_g = g.reshape(-1, g.shape[-1])
    return flat_x.T @ flat_g, flat_g.sum(axis=0), g @ w.T


def fno_backward(params: dict, config: FnoConfig, cache: dict,
                 upstream: np.ndarray) -> dict[str, np.ndarray]:
    """Exact parameter gradients for a cotangent of the prediction."""
    g = np.asarray(upstream, dtype=cache["q1"].dtype)
    if g.shape != (*cache["x"].shape[:-1], 1):
        raise ValueError(f"upstream shape {g.shape} does not match the output")
    if config.dtype == "f32":
        params = {k: np.asarray(v, dtype=np.float32) for k, v in params.items()}
    sizes = cache["sizes"]
    grads: dict[str, np.ndarray] = {}

    grads["q_w2"], grads["q_b2"], g_q1 = _pointwise_grads(cache["q1"], g, params["q_w2"])
    g_q1pre = g_q1 * cache["q_mask"]
    grads["q_w1"], grads["q_b1"], g_v = _pointwise_grads(cache["vk"], g_q1pre, params["q_w1"])

    for i in reversed(range(config.layers)):
        layer = cache["layers"][i]
        g_pre = g_v if layer["mask"] is None else g_v * layer["mask"]
        r_cplx = _as_complex(params[f"r{i}"])
        g_spec, r_bar = _spectral_backward(config, r_cplx, layer["x_blocks"], g_pre, sizes)
        grads[f"r{i}"] = np.stack([r_bar.real, r_bar.imag], axis=-1)
        grads[f"w{i}"], grads[f"b{i}"], g_x = _pointwise_grads(layer["x_in"], g_pre, params[f"w{i}"])
        g_v = g_x + g_spec

    grads["p_w"], grads["p_b"], _ = _pointwise_grads(cache["x"], g_v, params["p_w"])
    return grads


# ---------------------------------------------------------------------------
# checkpoints


def save_params(path: str | os.PathLike, config: FnoConfig, params: dict,
                extra: dict | None = None) -> None:
    """Checkpoint directory: manifest.json + one tensor file per parameter."""
    path = os.fspath(path)
    os.makedirs(path, exist_ok=True)
    names = config.tensor_names()
    missing = set(names) ^ set(params)
    if missing:
        raise CheckpointError(f"parameter set does not match config: {missing}")
    manifest = {
        "config": dataclasses.asdict(config),
        "tensors": {name: f"{name}.nt" for name in names},
        "extra": extra or {},
    }
    for name in names:
        ntensor.write(np.asarray(params[name], dtype=np.float64),
                      os.path.join(path, f"{name}.nt"))
    tmp = os.path.join(path, "manifest.json.tmp")
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, os.path.join(path, "manifest.json"))


def load_params(path: str | os.PathLike,
                expect: FnoConfig | None = None):
    """Load (config, params, extra); error on any manifest/config mismatch."""
    path = os.fspath(path)
    with open(os.path.join(path, "manifest.json")) as fh:
        manifest = json.load(fh)
    cfg_dict = dict(manifest["config"])
    cfg_dict["modes"] = tuple(cfg_dict["modes"])
    config = FnoConfig(**cfg_dict)
    if expect is not None and expect != config:
        raise CheckpointError(f"checkpoint config {config} != expected {expect}")
    if set(manifest["tensors"]) != set(config.tensor_names()):
        raise CheckpointError("manifest tensor list does not match the config")
    params = {}
    for name, fname in manifest["tensors"].items():
        params[name] = ntensor.read(os.path.join(path, fname))
    shapes = {n: p.shape for n, p in init_params(config, RngStream(0, 0)).items()}
    for name, arr in params.items():
        if arr.shape != shapes[name]:
            raise CheckpointError(
                f"tensor {name} has shape {arr.shape}, config implies {shapes[name]}"
            )
    return config, params, manifest.get("extra", {})
