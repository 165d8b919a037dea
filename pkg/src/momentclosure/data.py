"""Training-data generation from kinetic reference runs.

A dataset row is one space point of one snapshot: Hermite moments m_0..m_{N+1}
(or their gPC coefficients, k-major / gPC-minor) together with spatial
gradients of every column. Gradients use 4th-order periodic central
differences, one order above the kinetic transport scheme. Files are a CSV
plus a JSON sidecar carrying everything needed to regenerate them bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .gpc import BasisKind, GpcBasis, collocation_project
from .kinetic import (
    DetSine,
    KineticGrid,
    UqAmpSine,
    UqFreqSine,
    hermite_table_for,
    moments_of_state,
    solve_kinetic,
)
from .mlp import Normalizer

SCHEMA_VERSION = 1
GENERATOR_VERSION = "momentclosure-0.1.0"


def spatial_gradient(values: np.ndarray, dx: float, axis: int = 0) -> np.ndarray:
    """4th-order central first derivative on a periodic grid."""
    v = np.asarray(values, dtype=float)
    if v.shape[axis] < 5:
        raise ValueError(f"need at least 5 points along axis {axis}, got {v.shape[axis]}")
    vp1 = np.roll(v, -1, axis)
    vp2 = np.roll(v, -2, axis)
    vm1 = np.roll(v, 1, axis)
    vm2 = np.roll(v, 2, axis)
    return (-vp2 + 8.0 * vp1 - 8.0 * vm1 + vm2) / (12.0 * dx)


@dataclass
class Dataset:
    """Flat row-per-(run, snapshot, x) view of reference moments and gradients.

    moments/gradients have (N+2)(K+1) columns: order k major, gPC index minor,
    covering k = 0..N+1 (the unclosed order N+1 rides along as the label).
    """

    N: int
    K: int
    run_id: np.ndarray
    t: np.ndarray
    x_index: np.ndarray
    moments: np.ndarray
    gradients: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        want = (self.N + 2) * (self.K + 1)
        if self.moments.shape[1] != want or self.gradients.shape[1] != want:
            raise ValueError(f"expected {want} moment columns for N={self.N}, K={self.K}")

    def __len__(self) -> int:
        return self.moments.shape[0]

    @property
    def n_features(self) -> int:
        return (self.N + 1) * (self.K + 1)

    @property
    def features(self) -> np.ndarray:
        """Network inputs: m_0..m_N (coefficients)."""
        return self.moments[:, : self.n_features]

    @property
    def gradient_features(self) -> np.ndarray:
        """dx m_0..dx m_N, contracted against learned coefficients."""
        return self.gradients[:, : self.n_features]

    @property
    def lm_targets(self) -> np.ndarray:
        """m_{N+1} block, (rows, K+1)."""
        return self.moments[:, self.n_features :]

    @property
    def lg_targets(self) -> np.ndarray:
        """dx m_{N+1} block, (rows, K+1)."""
        return self.gradients[:, self.n_features :]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            self.N,
            self.K,
            self.run_id[idx],
            self.t[idx],
            self.x_index[idx],
            self.moments[idx],
            self.gradients[idx],
            self.provenance,
        )

    # -- file format --------------------------------------------------------

    def column_names(self) -> list[str]:
        cols = []
        for prefix in ("m", "dxm"):
            for k in range(self.N + 2):
                for i in range(self.K + 1):
                    cols.append(f"{prefix}_{k}[{i}]")
        return cols

    def to_csv(self, path) -> None:
        path = Path(path)
        header = "run_id,t,x_index," + ",".join(self.column_names())
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for r in range(len(self)):
                nums = np.concatenate([self.moments[r], self.gradients[r]])
                fh.write(
                    f"{int(self.run_id[r])},{self.t[r]:.17g},{int(self.x_index[r])},"
                    + ",".join(f"{v:.17g}" for v in nums)
                    + "\n"
                )
        sidecar = dict(self.provenance)
        sidecar.update(
            schema_version=SCHEMA_VERSION,
            generator_version=GENERATOR_VERSION,
            N=self.N,
            K=self.K,
            rows=len(self),
        )
        with open(metadata_path(path), "w") as fh:
            json.dump(sidecar, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        path = Path(path)
        with open(metadata_path(path)) as fh:
            meta = json.load(fh)
        N, K = meta["N"], meta["K"]
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        nm = (N + 2) * (K + 1)
        return cls(
            N,
            K,
            raw[:, 0].astype(int),
            raw[:, 1],
            raw[:, 2].astype(int),
            raw[:, 3 : 3 + nm],
            raw[:, 3 + nm :],
            meta,
        )


def metadata_path(csv_path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.name + ".meta.json")


# ---------------------------------------------------------------------------
# deterministic pipeline

def _rows_from_snapshots(run_id, times, moment_fields, gradient_fields):
    """Flatten (snapshot, x) panels into rows ordered by (run, t, x)."""
    S, Nx = moment_fields.shape[:2]
    return dict(
        run_id=np.full(S * Nx, run_id),
        t=np.repeat(times, Nx),
        x_index=np.tile(np.arange(Nx), S),
        moments=moment_fields.reshape(S * Nx, -1),
        gradients=gradient_fields.reshape(S * Nx, -1),
    )


def _moment_panels(grid, snapshots, N):
    """Stack per-snapshot moments (S, Nx, N+2) and their x-gradients."""
    table = hermite_table_for(grid, N + 1)
    m = np.stack([moments_of_state(grid, s, N + 1, table) for s in snapshots])
    dm = spatial_gradient(m, grid.dx, axis=1)
    return np.array([s.t for s in snapshots]), m, dm


def _kinetic_moment_task(task):
    """Top-level worker (picklable): one kinetic run reduced to moment panels."""
    grid, sigma, init, t_max, snapshot_every, N = task
    snaps = solve_kinetic(grid, sigma, init, t_max, snapshot_every)
    return _moment_panels(grid, snaps, N)


def _run_tasks(tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [_kinetic_moment_task(t) for t in tasks]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_kinetic_moment_task, tasks))


def generate_deterministic(
    sigma: float,
    N: int,
    grid: KineticGrid,
    seed: int,
    n_runs: int = 10,
    t_max: float = 0.4,
    snapshot_every: int = 1,
    jobs: int = 1,
) -> Dataset:
    """Reference moments from kinetic solves at uniformly sampled amplitudes a0."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rng = np.random.default_rng(seed)
    a0_values = rng.uniform(0.0, 1.0, size=n_runs)
    tasks = [(grid, sigma, DetSine(a0), t_max, snapshot_every, N) for a0 in a0_values]
    parts = []
    for run, (times, m, dm) in enumerate(_run_tasks(tasks, jobs)):
        parts.append(_rows_from_snapshots(run, times, m, dm))
    provenance = dict(
        kind="deterministic",
        sigma=sigma,
        init="det-sine",
        a0_values=[float(a) for a in a0_values],
        seed=seed,
        n_runs=n_runs,
        t_max=t_max,
        snapshot_every=snapshot_every,
        grid=dict(Nx=grid.Nx, x_min=grid.x_min, x_max=grid.x_max, Nv=grid.Nv),
    )
    return Dataset(
        N,
        0,
        np.concatenate([p["run_id"] for p in parts]),
        np.concatenate([p["t"] for p in parts]),
        np.concatenate([p["x_index"] for p in parts]),
        np.concatenate([p["moments"] for p in parts]),
        np.concatenate([p["gradients"] for p in parts]),
        provenance,
    )


# ---------------------------------------------------------------------------
# stochastic-Galerkin pipeline

_UQ_INIT = {"uq-amp": UqAmpSine, "uq-freq": UqFreqSine}


def generate_sg(
    N: int,
    grid: KineticGrid,
    basis: GpcBasis,
    sigma: float | Callable[[np.ndarray], np.ndarray],
    init: str,
    seed: int = 0,
    n_runs: int = 10,
    t_max: float = 0.4,
    M: int = 16,
    snapshot_every: int = 1,
    sigma_desc: str | None = None,
    jobs: int = 1,
) -> Dataset:
    """Collocation-projected SG moments.

    init = "det-sine": deterministic initial family over n_runs sampled a0
    (randomness through sigma(z) only); init = "uq-amp" / "uq-freq": one run
    with the z-dependent initial data. At each collocation node the kinetic
    equation is solved with sigma(z_j) and/or the z_j initial datum, then
    moments are projected onto the basis.
    """
    quad = basis.quadrature(M)
    z_nodes = quad.nodes
    if isinstance(sigma, str):
        from .config import parse_sigma

        parsed, desc = parse_sigma(sigma)
        sigma_desc = sigma_desc or desc
        sigma = parsed
    sigma_at = (lambda z: np.full_like(z, float(sigma))) if np.isscalar(sigma) else sigma
    sig_values = np.asarray(sigma_at(z_nodes), dtype=float)
    if np.any(sig_values < 0):
        raise ValueError("sigma(z) must be nonnegative on the collocation nodes")

    if init == "det-sine":
        rng = np.random.default_rng(seed)
        a0_values = rng.uniform(0.0, 1.0, size=n_runs)
        run_inits = [[DetSine(a0)] * quad.n for a0 in a0_values]
        a0_record = [float(a) for a in a0_values]
    elif init in _UQ_INIT:
        make = _UQ_INIT[init]
        run_inits = [[make(z) for z in z_nodes]]
        a0_record = None
    else:
        raise ValueError(f"unknown SG initial-condition family {init!r}")

    parts = []
    for run, inits in enumerate(run_inits):
        tasks = [
            (grid, float(sig), z_ic, t_max, snapshot_every, N)
            for z_ic, sig in zip(inits, sig_values)
        ]
        results = _run_tasks(tasks, jobs)
        times = results[0][0]
        stacked = np.stack([m for _, m, _ in results], axis=-1)  # (S, Nx, N+2, M)
        coeffs = collocation_project(stacked, basis, quad)  # (S, Nx, N+2, K+1)
        S, Nx = coeffs.shape[:2]
        flat = coeffs.reshape(S, Nx, -1)
        dflat = spatial_gradient(flat, grid.dx, axis=1)
        parts.append(_rows_from_snapshots(run, times, flat, dflat))

    provenance = dict(
        kind="stochastic-galerkin",
        sigma=sigma_desc or (float(sigma) if np.isscalar(sigma) else "callable"),
        init=init,
        basis=basis.kind.value,
        K=basis.K,
        M=M,
        seed=seed,
        n_runs=len(run_inits),
        a0_values=a0_record,
        t_max=t_max,
        snapshot_every=snapshot_every,
        grid=dict(Nx=grid.Nx, x_min=grid.x_min, x_max=grid.x_max, Nv=grid.Nv),
    )
    return Dataset(
        N,
        basis.K,
        np.concatenate([p["run_id"] for p in parts]),
        np.concatenate([p["t"] for p in parts]),
        np.concatenate([p["x_index"] for p in parts]),
        np.concatenate([p["moments"] for p in parts]),
        np.concatenate([p["gradients"] for p in parts]),
        provenance,
    )


def regenerate(meta: dict) -> Dataset:
    """Rebuild a dataset from its sidecar metadata alone."""
    grid = KineticGrid(**meta["grid"])
    if meta["kind"] == "deterministic":
        return generate_deterministic(
            meta["sigma"],
            meta["N"],
            grid,
            meta["seed"],
            n_runs=meta["n_runs"],
            t_max=meta["t_max"],
            snapshot_every=meta["snapshot_every"],
        )
    if meta["kind"] == "stochastic-galerkin":
        basis = GpcBasis(BasisKind(meta["basis"]), K=meta["K"])
        sigma = meta["sigma"]
        if isinstance(sigma, str):
            from .config import parse_sigma

            sigma_fn, _ = parse_sigma(sigma)
            sigma = sigma_fn
        return generate_sg(
            meta["N"],
            grid,
            basis,
            sigma,
            meta["init"],
            seed=meta["seed"],
            n_runs=meta["n_runs"],
            t_max=meta["t_max"],
            M=meta["M"],
            snapshot_every=meta["snapshot_every"],
            sigma_desc=meta["sigma"] if isinstance(meta["sigma"], str) else None,
        )
    raise ValueError(f"unknown dataset kind {meta['kind']!r}")


def split_and_normalize(
    dataset: Dataset, val_fraction: float = 0.10, seed: int = 0
) -> tuple[Dataset, Dataset, Normalizer]:
    """Uniform shuffled split; normalizer fitted on the training inputs only."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(dataset))
    n_val = int(round(val_fraction * len(dataset)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    train, val = dataset.subset(train_idx), dataset.subset(val_idx)
    return train, val, Normalizer.fit(train.features)
