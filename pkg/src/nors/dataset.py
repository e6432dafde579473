"""Dataset generation and the on-disk sample layout.

A dataset directory holds

    meta.json   every parameter needed to regenerate it bit-identically
    u0.nt       (N, X...)          initial conditions
    xi.nt       (N, N_t+1, X...)   driving noise on the storage grid
    uT.nt       (N, X...)          solution at the final time

Per-sample randomness comes from streams derived as (master_seed, 2i) for
initial conditions and (master_seed, 2i+1) for the noise, so generation
order cannot change the content.  In the fixed-initial-condition setting the
2d vorticity field is drawn once from stream (master_seed, 0) and reused.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import ntensor, rng
from .grid import Grid, make as grid_make
from .noise import (
    ForcingSpec,
    GrfSpec,
    InitialConditionSpec,
    ns_forcing,
    phi41_initial,
    sample_grf_vorticity,
    sample_white_noise,
)
from .solvers import BlowupError, SolverConfig, solve_ns2d, solve_phi41, solve_rd_mult

FORMAT_VERSION = 1
EQUATIONS = ("phi41", "rd_mult", "ns2d")
SETTINGS = ("fixed_u0", "varying_u0")


@dataclass(frozen=True)
class EquationSpec:
    """Structural description of one benchmark equation."""

    id: str
    nu: float
    sigma: float
    horizon: float = 0.05
    kappa: float = 0.1  # 1d initial-condition perturbation (varying setting)
    reaction_scale: float = 1.0
    ic: InitialConditionSpec = field(default_factory=InitialConditionSpec)
    forcing: ForcingSpec = field(default_factory=ForcingSpec)

    def __post_init__(self):
        if self.id not in EQUATIONS:
            raise ValueError(f"unknown equation {self.id!r}")

    @property
    def spatial_dim(self) -> int:
        return 2 if self.id == "ns2d" else 1


def equation_spec(eq_id: str, **overrides) -> EquationSpec:
    """Per-equation defaults: nu=1, sigma=0.1 for the 1d reaction equations;
    nu=1e-4, sigma=0.05 with smoothed noise and the steady force for ns2d."""
    if eq_id in ("phi41", "rd_mult"):
        base = dict(
            nu=1.0,
            sigma=0.1,
            ic=InitialConditionSpec(kind="phi41_poly_plus_eta"),
            forcing=ForcingSpec(sigma=0.1, kind="white"),
        )
    elif eq_id == "ns2d":
        base = dict(
            nu=1e-4,
            sigma=0.05,
            reaction_scale=0.0,
            ic=InitialConditionSpec(kind="grf_vorticity"),
            forcing=ForcingSpec(sigma=0.05, kind="smoothed_white", deterministic=True),
        )
    else:
        raise ValueError(f"unknown equation {eq_id!r}")
    base.update(overrides)
    return EquationSpec(id=eq_id, **base)


def _spec_to_meta(eq: EquationSpec) -> dict:
    return {
        "kappa": eq.kappa,
        "reaction_scale": eq.reaction_scale,
        "ic": dataclasses.asdict(eq.ic),
        "forcing": dataclasses.asdict(eq.forcing),
    }


def _spec_from_meta(meta: dict) -> EquationSpec:
    ic = dict(meta["ic"])
    ic["grf"] = GrfSpec(**ic["grf"])
    forcing = dict(meta["forcing"])
    forcing["smoothing"] = GrfSpec(**forcing["smoothing"])
    return EquationSpec(
        id=meta["equation"],
        nu=meta["nu"],
        sigma=meta["sigma"],
        horizon=meta["horizon"],
        kappa=meta["kappa"],
        reaction_scale=meta["reaction_scale"],
        ic=InitialConditionSpec(**ic),
        forcing=ForcingSpec(**forcing),
    )


class Dataset:
    """Read-only view of a generated dataset directory."""

    def __init__(self, path: str | os.PathLike):
        self.path = os.fspath(path)
        meta_path = os.path.join(self.path, "meta.json")
        if not os.path.exists(meta_path):
            raise FileNotFoundError(f"no dataset at {self.path}")
        with open(meta_path) as fh:
            self.meta = json.load(fh)
        if self.meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {self.meta.get('format_version')}")

    @property
    def n(self) -> int:
        return self.meta["N"]

    @property
    def setting(self) -> str:
        return self.meta["setting"]

    def grid(self) -> Grid:
        m = self.meta
        return grid_make(m["d"], m["sizes"], m["time_steps"], m["horizon"])

    def equation(self) -> EquationSpec:
        return _spec_from_meta(self.meta)

    def u0(self) -> np.ndarray:
        return ntensor.read(os.path.join(self.path, "u0.nt"), mmap=True)

    def xi(self) -> np.ndarray:
        return ntensor.read(os.path.join(self.path, "xi.nt"), mmap=True)

    def u_final(self) -> np.ndarray:
        return ntensor.read(os.path.join(self.path, "uT.nt"), mmap=True)

    def content_id(self) -> str:
        """Hash of the generation parameters, used to key feature caches."""
        import hashlib

        blob = json.dumps(self.meta, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def draw_sample(eq: EquationSpec, grid: Grid, master_seed: int, index: int,
                setting: str) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """(u0, xi, f) for one sample; f is None for the 1d equations."""
    ic_stream = rng.derive(master_seed, 2 * index)
    noise_stream = rng.derive(master_seed, 2 * index + 1)
    if eq.spatial_dim == 1:
        kappa = 0.0 if setting == "fixed_u0" else eq.kappa
        u0 = phi41_initial(grid, kappa, ic_stream, lam=eq.ic.lam, modes=eq.ic.modes)
        xi = sample_white_noise(grid, noise_stream)
        return u0, xi, None
    if setting == "fixed_u0":
        ic_stream = rng.derive(master_seed, 0)
    w0 = sample_grf_vorticity(grid, eq.ic.grf, ic_stream)
    f, xi = ns_forcing(grid, eq.forcing, noise_stream)
    return w0, xi, f


def solve(eq: EquationSpec, grid: Grid, u0: np.ndarray, xi: np.ndarray,
          f: np.ndarray | None, substeps: int = 1) -> np.ndarray:
    cfg = SolverConfig(nu=eq.nu, sigma=eq.sigma, substeps=substeps,
                       reaction_scale=eq.reaction_scale)
    if eq.id == "phi41":
        return solve_phi41(grid, u0, xi, cfg)
    if eq.id == "rd_mult":
        return solve_rd_mult(grid, u0, xi, cfg)
    return solve_ns2d(grid, u0, xi, f, cfg)


def _gen_one(args) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    eq, grid, master_seed, index, setting, substeps = args
    u0, xi, f = draw_sample(eq, grid, master_seed, index, setting)
    try:
        traj = solve(eq, grid, u0, xi, f, substeps=substeps)
    except BlowupError as exc:
        raise BlowupError(f"sample {index}: {exc}") from exc
    return u0, xi, traj[-1]


def generate_dataset(eq: EquationSpec, grid: Grid, n: int, master_seed: int,
                     out_dir: str | os.PathLike, setting: str = "varying_u0",
                     substeps: int = 1, overwrite: bool = False,
                     workers: int = 1) -> Dataset:
    """Sample, solve, and persist ``n`` trajectories.

    Samples are keyed by index, so the output is identical for any worker
    count; workers > 1 solves them in parallel processes.
    """
    if setting not in SETTINGS:
        raise ValueError(f"unknown setting {setting!r}")
    if n < 1:
        raise ValueError("need at least one sample")
    if grid.spatial_dim != eq.spatial_dim:
        raise ValueError(f"{eq.id} needs a {eq.spatial_dim}d grid")
    out_dir = os.fspath(out_dir)
    if os.path.exists(os.path.join(out_dir, "meta.json")) and not overwrite:
        raise FileExistsError(f"dataset exists at {out_dir} (use overwrite)")
    os.makedirs(out_dir, exist_ok=True)

    meta = {
        "format_version": FORMAT_VERSION,
        "equation": eq.id,
        "d": grid.spatial_dim,
        "sizes": list(grid.spatial_sizes),
        "time_steps": grid.time_steps,
        "horizon": grid.horizon,
        "N": n,
        "master_seed": master_seed,
        "setting": setting,
        "sigma": eq.sigma,
        "nu": eq.nu,
        "solver_substeps": substeps,
        **_spec_to_meta(eq),
    }

    space = grid.space_shape
    jobs = ((eq, grid, master_seed, i, setting, substeps) for i in range(n))
    with ntensor.StreamWriter(os.path.join(out_dir, "u0.nt"), space) as w_u0, \
         ntensor.StreamWriter(os.path.join(out_dir, "xi.nt"), grid.spacetime_shape) as w_xi, \
         ntensor.StreamWriter(os.path.join(out_dir, "uT.nt"), space) as w_ut:
        if workers > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = pool.map(_gen_one, jobs, chunksize=1)
                for u0, xi, ut in results:
                    w_u0.append(u0)
                    w_xi.append(xi)
                    w_ut.append(ut)
        else:
            for job in jobs:
                u0, xi, ut = _gen_one(job)
                w_u0.append(u0)
                w_xi.append(xi)
                w_ut.append(ut)

    tmp = os.path.join(out_dir, "meta.json.tmp")
    with open(tmp, "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, os.path.join(out_dir, "meta.json"))
    return Dataset(out_dir)
