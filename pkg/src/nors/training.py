"""Loss, optimizer, training loop, and the two evaluation protocols.

Training consumes a generated dataset, builds per-sample network inputs
(either feature-vector channels or the raw-field ablation), splits 5:1 by a
seeded permutation, and runs Adam with the halving learning-rate schedule.
Evaluation reloads a checkpoint and remeasures the test split, optionally at
a different resolution: stored fields are spectrally resampled, features are
recomputed on the evaluation grid, and the spectral weights address whatever
mode range the new grid supports (zero-shot super-resolution).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fno, ntensor
from .dataset import Dataset
from .features import (
    DegreeRules,
    ModelBasis,
    ModelSpec,
    assemble_input,
    evaluate_features,
    generate_model,
)
from .grid import Grid, make as grid_make
from .rng import RngStream
from .semigroup import SemigroupContext
from .spectral import resample


class NumericalError(RuntimeError):
    """Non-finite loss or gradient during optimization."""


# ---------------------------------------------------------------------------
# metrics


def per_sample_rel_l2(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    axes = tuple(range(1, pred.ndim))
    t_norm = np.sqrt(np.sum(target**2, axis=axes))
    for i, tn in enumerate(t_norm):
        if tn == 0.0:
            raise ValueError(f"sample {i} has a zero-norm target")
    d_norm = np.sqrt(np.sum((pred - target) ** 2, axis=axes))
    return d_norm / t_norm


def relative_l2(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over the batch of ||pred - target|| / ||target||."""
    return float(per_sample_rel_l2(pred, target).mean())


def lr_at(epoch: int, lr0: float, halve_every: int) -> float:
    """lr0 * 2^-floor(epoch / halve_every)."""
    return lr0 * 2.0 ** (-(epoch // halve_every))


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def adam_init(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        step=0,
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
    )


def adam_step(state: AdamState, params: dict, grads: dict, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> dict:
    """One bias-corrected Adam update; mutates the state, returns new params."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    out = {}
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        out[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return out


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    lr: float = 1e-3
    halve_every: int = 100
    batch_size: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle_seed: int = 0
    input_mode: str = "features"  # or "raw"
    resolution: tuple[int, ...] | None = None  # train grid; None = storage grid
    normalize_inputs: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or not self.lr > 0:
            raise ValueError("bad epochs/batch/lr")
        if self.input_mode not in ("features", "raw"):
            raise ValueError(f"unknown input mode {self.input_mode!r}")
        if self.resolution is not None:
            object.__setattr__(self, "resolution", tuple(int(s) for s in self.resolution))


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic 5:1 split: (train, test), disjoint, test size n // 6."""
    order = np.argsort(RngStream(seed, 0xD15C).uniform(n), kind="stable")
    n_test = n // 6
    return order[n_test:].copy(), order[:n_test].copy()


# ---------------------------------------------------------------------------
# input preparation


def _eval_grid(ds: Dataset, sizes: tuple[int, ...] | None) -> Grid:
    g = ds.grid()
    if sizes is None or tuple(sizes) == g.spatial_sizes:
        return g
    return grid_make(g.spatial_dim, sizes, g.time_steps, g.horizon)


def _sample_fields(ds: Dataset, grid: Grid, index: int):
    """(u0, xi) of one sample, spectrally resampled to the working grid."""
    d = grid.spatial_dim
    u0 = np.asarray(ds.u0()[index], dtype=np.float64)
    xi = np.asarray(ds.xi()[index], dtype=np.float64)
    storage = u0.shape
    if tuple(storage) != grid.spatial_sizes:
        u0 = resample(u0, grid.spatial_sizes, d)
        xi = resample(xi, grid.spatial_sizes, d)
    return u0, xi


_WORKER_STATE: dict = {}


def _feature_worker_init(ds_path, sizes, spec_dict):
    _WORKER_STATE["ds"] = Dataset(ds_path)
    _WORKER_STATE["grid"] = _eval_grid(_WORKER_STATE["ds"], sizes)
    _WORKER_STATE["spec"] = model_spec_from_dict(spec_dict)
    _WORKER_STATE["basis"] = generate_model(_WORKER_STATE["spec"])
    _WORKER_STATE["ctx"] = SemigroupContext(
        _WORKER_STATE["grid"], nu=_WORKER_STATE["ds"].meta["nu"]
    )


def _feature_worker(index: int) -> np.ndarray:
    ds = _WORKER_STATE["ds"]
    grid = _WORKER_STATE["grid"]
    u0, xi = _sample_fields(ds, grid, index)
    vals = evaluate_features(_WORKER_STATE["basis"], u0, xi, _WORKER_STATE["ctx"])
    return assemble_input(vals, grid)


def feature_inputs(ds: Dataset, basis: ModelBasis, grid: Grid,
                   workers: int = 1, cache_dir: str | None = None) -> np.ndarray:
    """(N, X..., m + d) feature channels for every sample, cached on disk."""
    key_src = json.dumps(
        [ds.content_id(), basis.content_hash(), list(grid.spatial_sizes)]
    ).encode()
    key = hashlib.sha256(key_src).hexdigest()[:16]
    cache_root = cache_dir or os.environ.get("NORS_CACHE_DIR") or os.path.join(ds.path, ".cache")
    cache_path = os.path.join(cache_root, f"features_{key}.nt")
    if os.path.exists(cache_path):
        return ntensor.read(cache_path)
    spec_dict = model_spec_to_dict(basis.spec)
    if workers > 1:
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_feature_worker_init,
            initargs=(ds.path, grid.spatial_sizes, spec_dict),
        ) as pool:
            rows = list(pool.map(_feature_worker, range(ds.n), chunksize=4))
    else:
        _feature_worker_init(ds.path, grid.spatial_sizes, spec_dict)
        rows = [_feature_worker(i) for i in range(ds.n)]
        _WORKER_STATE.clear()
    out = np.stack(rows)
    os.makedirs(cache_root, exist_ok=True)
    ntensor.write(out, cache_path)
    return out


def raw_inputs(ds: Dataset, grid: Grid) -> np.ndarray:
    """Ablation channels: u0, the time mean of the driving noise, coordinates."""
    rows = []
    coords = grid.meshgrid()
    for i in range(ds.n):
        u0, xi = _sample_fields(ds, grid, i)
        rows.append(np.stack([u0, xi[:-1].mean(axis=0), *coords], axis=-1))
    return np.stack(rows)


def targets(ds: Dataset, grid: Grid) -> np.ndarray:
    ut = np.asarray(ds.u_final(), dtype=np.float64)
    if ut.shape[1:] != grid.spatial_sizes:
        ut = resample(ut, grid.spatial_sizes, grid.spatial_dim)
    return ut[..., None]


def build_inputs(ds: Dataset, train_config: TrainConfig,
                 model_spec: ModelSpec | None, grid: Grid,
                 workers: int = 1) -> np.ndarray:
    if train_config.input_mode == "features":
        if model_spec is None:
            raise ValueError("features mode needs a model spec")
        basis = generate_model(model_spec)
        return feature_inputs(ds, basis, grid, workers=workers)
    return raw_inputs(ds, grid)


# ---------------------------------------------------------------------------
# model-spec (de)serialization, shared by checkpoints and the CLI


def model_spec_to_dict(spec: ModelSpec) -> dict:
    return {
        "spatial_dim": spec.spatial_dim,
        "alpha": list(spec.alpha),
        "height": spec.height,
        "mode": spec.mode,
        "rules": dataclasses.asdict(spec.rules),
    }


def model_spec_from_dict(d: dict) -> ModelSpec:
    m, l, p, q = d["alpha"]
    return ModelSpec(
        spatial_dim=d["spatial_dim"],
        additive_width=m,
        multiplicative_width=l,
        forcing_order=p,
        derivative_order=q,
        height=d["height"],
        rules=DegreeRules(**d["rules"]),
        mode=d["mode"],
    )


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    fno_config: fno.FnoConfig
    history: list[dict]
    extra: dict
    checkpoint_dir: str | None = None

    @property
    def final_test_rel_l2(self) -> float:
        return self.extra["final_test_rel_l2"]


def _normalize_stats(x_train: np.ndarray) -> dict:
    axes = tuple(range(x_train.ndim - 1))
    mean = x_train.mean(axis=axes)
    std = x_train.std(axis=axes)
    std = np.maximum(std, 1e-12)
    return {"mean": [float(v) for v in mean], "std": [float(v) for v in std]}


def _apply_normalize(x: np.ndarray, stats: dict) -> np.ndarray:
    mean = np.array(stats["mean"])
    std = np.array(stats["std"])
    return (x - mean) / std


def _metric(params, config, x, y, batch_size: int) -> tuple[float, float]:
    errs = []
    for lo in range(0, len(x), batch_size):
        pred = fno.fno_forward(params, config, x[lo:lo + batch_size])
        errs.append(per_sample_rel_l2(pred, y[lo:lo + batch_size]))
    errs = np.concatenate(errs)
    return float(errs.mean()), float(errs.std())


def train(ds: Dataset, model_spec: ModelSpec | None, fno_config: fno.FnoConfig,
          train_config: TrainConfig, out_dir: str | None = None,
          workers: int = 1) -> TrainResult:
    grid = _eval_grid(ds, train_config.resolution)
    x = build_inputs(ds, train_config, model_spec, grid, workers=workers)
    y = targets(ds, grid)
    if x.shape[-1] != fno_config.in_channels:
        raise ValueError(
            f"inputs have {x.shape[-1]} channels, config expects {fno_config.in_channels}"
        )

    train_idx, test_idx = split_indices(ds.n, train_config.shuffle_seed)
    stats = _normalize_stats(x[train_idx]) if train_config.normalize_inputs else None
    if stats is not None:
        x = _apply_normalize(x, stats)
    x_train, y_train = x[train_idx], y[train_idx]
    x_test, y_test = x[test_idx], y[test_idx]

    params = fno.init_params(fno_config, RngStream(train_config.shuffle_seed, 0x1217))
    opt = adam_init(params)
    history: list[dict] = []
    batch = train_config.batch_size

    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        lr = lr_at(epoch, train_config.lr, train_config.halve_every)
        order = np.argsort(
            RngStream(train_config.shuffle_seed, 0xE0000 + epoch).uniform(len(train_idx)),
            kind="stable",
        )
        losses = []
        for start in range(0, len(order), batch):
            sel = order[start:start + batch]
            xb, yb = x_train[sel], y_train[sel]
            pred, cache = fno.fno_forward(params, fno_config, xb, return_cache=True)
            diff = pred - yb
            axes = tuple(range(1, pred.ndim))
            d_norm = np.sqrt(np.sum(diff**2, axis=axes))
            t_norm = np.sqrt(np.sum(yb**2, axis=axes))
            loss = float(np.mean(d_norm / t_norm))
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {start // batch}"
                )
            losses.append(loss)
            scale = 1.0 / (len(sel) * np.maximum(d_norm, 1e-300) * t_norm)
            upstream = diff * scale.reshape((-1,) + (1,) * (pred.ndim - 1))
            grads = fno.fno_backward(params, fno_config, cache, upstream)
            params = adam_step(opt, params, grads, lr,
                               train_config.beta1, train_config.beta2, train_config.eps)
        test_mean, _ = _metric(params, fno_config, x_test, y_test, batch)
        history.append({
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "test_rel_l2": test_mean,
            "lr": lr,
            "seconds": time.perf_counter() - t0,
        })

    final_mean, final_std = _metric(params, fno_config, x_test, y_test, batch)
    extra = {
        "train_config": dataclasses.asdict(train_config),
        "model_spec": model_spec_to_dict(model_spec) if model_spec else None,
        "normalize": stats,
        "dataset_meta_hash": ds.content_id(),
        "train_sizes": list(grid.spatial_sizes),
        "final_test_rel_l2": final_mean,
        "final_test_rel_l2_std": final_std,
        "n_train": int(len(train_idx)),
        "n_test": int(len(test_idx)),
    }
    result = TrainResult(params, fno_config, history, extra)
    if out_dir is not None:
        result.checkpoint_dir = save_run(out_dir, result)
    return result


def save_run(out_dir: str, result: TrainResult) -> str:
    os.makedirs(out_dir, exist_ok=True)
    ckpt = os.path.join(out_dir, "checkpoint")
    fno.save_params(ckpt, result.fno_config, result.params, extra=result.extra)
    with open(os.path.join(out_dir, "history.csv"), "w") as fh:
        fh.write("epoch,train_loss,test_rel_l2,lr,seconds\n")
        for row in result.history:
            fh.write(
                f"{row['epoch']},{row['train_loss']!r},{row['test_rel_l2']!r},"
                f"{row['lr']!r},{row['seconds']:.3f}\n"
            )
    summary = {
        "final_test_rel_l2": result.extra["final_test_rel_l2"],
        "final_test_rel_l2_std": result.extra["final_test_rel_l2_std"],
        "epochs": len(result.history),
        "n_train": result.extra["n_train"],
        "n_test": result.extra["n_test"],
        "dataset_meta_hash": result.extra["dataset_meta_hash"],
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return ckpt


# ---------------------------------------------------------------------------
# evaluation


def evaluate(checkpoint: str, ds: Dataset, resolution: tuple[int, ...] | None = None,
             workers: int = 1) -> dict:
    """Test-split metrics of a stored run, optionally at a new resolution."""
    config, params, extra = fno.load_params(checkpoint)
    train_config = TrainConfig(**extra["train_config"])
    if extra["dataset_meta_hash"] != ds.content_id():
        raise ValueError("checkpoint was trained on a different dataset")
    sizes = tuple(resolution) if resolution is not None else tuple(extra["train_sizes"])
    grid = _eval_grid(ds, sizes)

    warnings = []
    storage_sizes = tuple(ds.grid().spatial_sizes)
    if any(s > t for t, s in zip(storage_sizes, sizes)):
        warnings.append(
            f"evaluation at {sizes} exceeds the stored resolution {storage_sizes}; "
            "inputs and targets are spectral upsamples"
        )

    model_spec = (
        model_spec_from_dict(extra["model_spec"]) if extra["model_spec"] else None
    )
    x = build_inputs(ds, train_config, model_spec, grid, workers=workers)
    y = targets(ds, grid)
    if extra.get("normalize"):
        x = _apply_normalize(x, extra["normalize"])
    _, test_idx = split_indices(ds.n, train_config.shuffle_seed)
    mean, std = _metric(params, config, x[test_idx], y[test_idx],
                        train_config.batch_size)
    return {
        "resolution": list(sizes),
        "mean_rel_l2": mean,
        "std_rel_l2": std,
        "n_test": int(len(test_idx)),
        "train_resolution": extra["train_sizes"],
        "warnings": warnings,
    }
