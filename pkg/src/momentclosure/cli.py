"""Command-line orchestration: gen-data | train | solve | compare | uq-run.

Every command is deterministic given its config and seeds, and every output
file embeds the config hash. Exit codes: 0 success, 2 configuration error,
3 numerical blow-up / divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .closure import (
    ClosureKind,
    TrainConfig,
    load_checkpoint,
    relative_l2,
    save_checkpoint,
    save_history_csv,
    train,
)
from .config import default_config, load_config, parse_sigma
from .data import Dataset, generate_deterministic, generate_sg, metadata_path
from .errors import BlowUpError, ConfigurationError, TrainingDivergedError
from .gpc import BasisKind, GpcBasis, build_source_matrix
from .kinetic import (
    DetSine,
    KineticGrid,
    UqAmpSine,
    UqFreqSine,
    moments_of_state,
    solve_kinetic,
)
from .solver import (
    MomentField,
    SystemSpec,
    initial_moments,
    read_snapshots_csv,
    solve_moment_system,
    write_snapshots_csv,
)

_UQ_CLASSES = {"uq-amp": UqAmpSine, "uq-freq": UqFreqSine}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momentclosure",
        description="Neural moment closures for the linear semiconductor Boltzmann equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, need_out=True):
        p.add_argument("--config", type=Path, help="YAML config file")
        if need_out:
            p.add_argument("--out", type=Path, required=True)
        p.add_argument("--seed", type=int, help="override the command's RNG seed")
        p.add_argument("--jobs", type=int, help="parallel independent runs")
        p.add_argument("--closure", choices=["pn", "lm", "lg", "lg-hyper", "kinetic"])
        p.add_argument("--sigma", help="collision frequency: float or expression in z")
        p.add_argument("--N", type=int, help="moment truncation order")
        p.add_argument("--K", type=int, help="gPC truncation order")

    add_common(sub.add_parser("gen-data", help="generate a reference dataset"))
    p_train = sub.add_parser("train", help="fit a closure head on a dataset")
    add_common(p_train)
    p_train.add_argument("--data", type=Path, required=True)
    p_solve = sub.add_parser("solve", help="integrate a closed moment system")
    add_common(p_solve)
    p_solve.add_argument("--checkpoint", type=Path)
    p_cmp = sub.add_parser("compare", help="error table of closure runs vs a benchmark")
    p_cmp.add_argument("--ref", type=Path, required=True)
    p_cmp.add_argument("--in", dest="inputs", type=Path, nargs="+", required=True)
    p_cmp.add_argument("--out", type=Path, required=True)
    p_uq = sub.add_parser("uq-run", help="gen-data + train + solve + compare in one")
    add_common(p_uq, need_out=False)
    p_uq.add_argument("--out-dir", type=Path, required=True)
    return parser


def _load_cfg(args) -> dict:
    cfg = load_config(args.config) if args.config else default_config()
    if getattr(args, "sigma", None) is not None:
        cfg["kinetic"]["sigma"] = args.sigma
    if getattr(args, "N", None) is not None:
        cfg["closure"]["N"] = args.N
    if getattr(args, "K", None) is not None:
        cfg["sg"]["K"] = args.K
    if getattr(args, "closure", None) is not None:
        cfg["closure"]["kind"] = args.closure
    if getattr(args, "jobs", None) is not None:
        cfg["experiment"]["jobs"] = args.jobs
    if getattr(args, "seed", None) is not None:
        cfg["experiment"]["data_seed"] = args.seed
        cfg["training"]["seed"] = args.seed
    return cfg


def _grid(cfg) -> KineticGrid:
    g = cfg["grid"]
    return KineticGrid(Nx=int(g["Nx"]), x_min=float(g["x_min"]),
                       x_max=float(g["x_max"]), Nv=int(g["Nv"]))


def _basis(cfg) -> GpcBasis:
    return GpcBasis(BasisKind(cfg["sg"]["basis"]), K=int(cfg["sg"]["K"]))


def _train_config(cfg) -> TrainConfig:
    t = cfg["training"]
    return TrainConfig(
        lr0=float(t["lr0"]), epochs=int(t["epochs"]),
        lr_decay_factor=float(t["lr_decay_factor"]),
        lr_decay_every=int(t["lr_decay_every"]), batch_size=int(t["batch_size"]),
        val_fraction=float(t["val_fraction"]), rng_seed=int(t["seed"]),
        hidden_layers=int(t["hidden_layers"]), hidden_width=int(t["hidden_width"]),
    )


def cmd_gen_data(cfg, args) -> int:
    grid = _grid(cfg)
    N = int(cfg["closure"]["N"])
    exp = cfg["experiment"]
    sigma_value, sigma_desc = parse_sigma(cfg["kinetic"]["sigma"])
    if cfg["sg"]["enabled"]:
        ds = generate_sg(
            N, grid, _basis(cfg), sigma_value, cfg["kinetic"]["init"],
            seed=int(exp["data_seed"]), n_runs=int(exp["n_runs"]),
            t_max=float(exp["t_max"]), M=int(cfg["sg"]["M"]),
            snapshot_every=int(exp["data_snapshot_every"]),
            sigma_desc=sigma_desc, jobs=int(exp["jobs"]),
        )
    else:
        if not isinstance(sigma_value, float):
            raise ConfigurationError("deterministic dataset needs a constant sigma")
        if cfg["kinetic"]["init"] != "det-sine":
            raise ConfigurationError("deterministic dataset uses the det-sine family")
        ds = generate_deterministic(
            sigma_value, N, grid, int(exp["data_seed"]), n_runs=int(exp["n_runs"]),
            t_max=float(exp["t_max"]), snapshot_every=int(exp["data_snapshot_every"]),
            jobs=int(exp["jobs"]),
        )
    if not exp["include_t0"]:
        ds = ds.subset(np.flatnonzero(ds.t > 0))
        ds.provenance["include_t0"] = False
    ds.provenance["config_hash"] = cfg["_hash"]
    ds.provenance["config_echo"] = cfg["_raw_text"]
    ds.to_csv(args.out)
    print(f"wrote {len(ds)} rows to {args.out}")
    return 0


def cmd_train(cfg, args) -> int:
    kind = ClosureKind(cfg["closure"]["kind"])
    if kind is ClosureKind.PN:
        raise ConfigurationError("closure.kind=pn takes no training")
    if kind is ClosureKind.LG_HYPER and int(cfg["sg"]["K"]) and cfg["sg"]["enabled"]:
        raise ConfigurationError("hyperbolic head is deterministic-only")
    ds = Dataset.from_csv(args.data)
    model, history = train(kind, ds, _train_config(cfg))
    model.epsilon = float(cfg["closure"]["epsilon"])
    model.train_config["config_hash"] = cfg["_hash"]
    save_checkpoint(model, args.out)
    hist_path = Path(str(args.out) + ".history.csv")
    save_history_csv(history, hist_path)
    print(
        f"trained {kind.value} (N={ds.N}, K={ds.K}): "
        f"final val rel-L2 {history['val_rel_l2'][-1]:.3e}; wrote {args.out}"
    )
    return 0


def _kinetic_benchmark_snapshots(cfg, grid, N, sigma_value):
    """Kinetic reference expressed as MomentField snapshots (collocated if SG)."""
    init_name = cfg["kinetic"]["init"]
    t_final = float(cfg["kinetic"]["t_final"])
    every = int(cfg["kinetic"]["snapshot_every"])
    if not cfg["sg"]["enabled"]:
        if init_name != "det-sine":
            raise ConfigurationError("deterministic benchmark uses det-sine")
        states = solve_kinetic(grid, sigma_value, DetSine(float(cfg["kinetic"]["a0"])),
                               t_final, every)
        fields = []
        for s in states:
            m = moments_of_state(grid, s, N)
            fields.append(MomentField(s.t, N, 0, grid.dx, m, grid.x_min))
        return fields
    basis = _basis(cfg)
    quad = basis.quadrature(int(cfg["sg"]["M"]))
    sigma_at = (lambda z: np.full_like(z, sigma_value)) if isinstance(sigma_value, float) \
        else sigma_value
    if init_name == "det-sine":
        inits = [DetSine(float(cfg["kinetic"]["a0"]))] * quad.n
    elif init_name in _UQ_CLASSES:
        inits = [_UQ_CLASSES[init_name](z) for z in quad.nodes]
    else:
        raise ConfigurationError(f"unknown init {init_name!r}")
    per_z = []
    for ic, sig in zip(inits, sigma_at(quad.nodes)):
        states = solve_kinetic(grid, float(sig), ic, t_final, every)
        per_z.append(np.stack([moments_of_state(grid, s, N) for s in states]))
    times = [s.t for s in states]
    stacked = np.stack(per_z, axis=-1)  # (S, Nx, N+1, M)
    from .gpc import collocation_project

    coeffs = collocation_project(stacked, basis, quad)  # (S, Nx, N+1, K+1)
    K = basis.K
    return [
        MomentField(t, N, K, grid.dx, coeffs[i].reshape(grid.Nx, -1), grid.x_min)
        for i, t in enumerate(times)
    ]


def cmd_solve(cfg, args) -> int:
    grid = _grid(cfg)
    N = int(cfg["closure"]["N"])
    kind_name = cfg["closure"]["kind"]
    sigma_value, sigma_desc = parse_sigma(cfg["kinetic"]["sigma"])
    sg_on = bool(cfg["sg"]["enabled"])
    meta = {
        "closure": kind_name,
        "sigma": sigma_desc,
        "init": cfg["kinetic"]["init"],
        "config_hash": cfg["_hash"],
        "config_echo": cfg["_raw_text"],
        "grid": dict(Nx=grid.Nx, x_min=grid.x_min, x_max=grid.x_max, Nv=grid.Nv),
        "checkpoint": str(args.checkpoint) if getattr(args, "checkpoint", None) else None,
        "status": "ok",
    }

    if kind_name == "kinetic":
        fields = _kinetic_benchmark_snapshots(cfg, grid, N, sigma_value)
        write_snapshots_csv(fields, args.out, meta)
        print(f"wrote kinetic benchmark ({len(fields)} snapshots) to {args.out}")
        return 0

    kind = ClosureKind(kind_name)
    if kind is ClosureKind.PN:
        from .closure import ClosureModel

        K = int(cfg["sg"]["K"]) if sg_on else 0
        model = ClosureModel(ClosureKind.PN, N, K)
    else:
        if not getattr(args, "checkpoint", None):
            raise ConfigurationError(f"closure {kind.value} needs --checkpoint")
        model = load_checkpoint(args.checkpoint)
        if model.kind is not kind:
            raise ConfigurationError(
                f"checkpoint holds a {model.kind.value} model, requested {kind.value}"
            )
        if model.N != N:
            raise ConfigurationError(f"checkpoint N={model.N} != requested N={N}")

    init_name = cfg["kinetic"]["init"]
    if sg_on:
        basis = _basis(cfg)
        if model.K != basis.K:
            raise ConfigurationError(f"closure K={model.K} != configured K={basis.K}")
        source = build_source_matrix(
            (lambda z: np.full_like(z, sigma_value)) if isinstance(sigma_value, float)
            else sigma_value,
            basis, basis.quadrature(int(cfg["sg"]["M"])), sigma_desc,
        )
        if init_name == "det-sine":
            init_field = initial_moments(DetSine(float(cfg["kinetic"]["a0"])), grid.Nx, N,
                                         basis=basis, M=int(cfg["sg"]["M"]),
                                         x_min=grid.x_min, x_max=grid.x_max)
        elif init_name in _UQ_CLASSES:
            init_field = initial_moments(_UQ_CLASSES[init_name], grid.Nx, N, basis=basis,
                                         M=int(cfg["sg"]["M"]),
                                         x_min=grid.x_min, x_max=grid.x_max)
        else:
            raise ConfigurationError(f"unknown init {init_name!r}")
        spec = SystemSpec(N, basis.K, model, source,
                          alpha_lf=float(cfg["closure"]["alpha_lf"]))
    else:
        if not isinstance(sigma_value, float):
            raise ConfigurationError("deterministic solve needs a constant sigma")
        if init_name != "det-sine":
            raise ConfigurationError("deterministic solve uses the det-sine init")
        init_field = initial_moments(DetSine(float(cfg["kinetic"]["a0"])), grid.Nx, N,
                                     x_min=grid.x_min, x_max=grid.x_max)
        spec = SystemSpec(N, 0, model, sigma_value,
                          alpha_lf=float(cfg["closure"]["alpha_lf"]))

    try:
        snapshots = solve_moment_system(
            init_field, spec, float(cfg["kinetic"]["t_final"]),
            int(cfg["kinetic"]["snapshot_every"]),
        )
    except BlowUpError as exc:
        meta["status"] = "blow-up"
        meta["blow_up_time"] = exc.t
        if exc.snapshots:
            write_snapshots_csv(exc.snapshots, args.out, meta)
        print(f"blow-up at t={exc.t:.6g}; partial output in {args.out}", file=sys.stderr)
        return 3
    write_snapshots_csv(snapshots, args.out, meta)
    print(f"wrote {len(snapshots)} snapshots to {args.out}")
    return 0


def _compatible_grids(meta_a, meta_b) -> bool:
    keys = ("Nx", "x_min", "dx")
    return all(np.isclose(meta_a[k], meta_b[k]) for k in keys)


def cmd_compare(args) -> int:
    ref_meta, ref_cols, ref_times, ref_panels = read_snapshots_csv(args.ref)
    N, K = int(ref_meta["N"]), int(ref_meta["K"])
    rows = []
    for path in args.inputs:
        meta, cols, times, panels = read_snapshots_csv(path)
        if not _compatible_grids(ref_meta, meta):
            raise ConfigurationError(
                f"grid metadata of {path} does not match the benchmark {args.ref}"
            )
        if int(meta["N"]) != N or int(meta["K"]) != K:
            raise ConfigurationError(f"{path} has different N/K than the benchmark")
        common = sorted(set(np.round(ref_times, 12)) & set(np.round(times, 12)))
        for t in common:
            ref_panel = ref_panels[float(t)]
            panel = panels[float(t)]
            for k in range(N + 1):
                cols_k = [1 + k * (K + 1) + i for i in range(K + 1)]
                mean_col = cols_k[0]
                rows.append((str(path), t, f"m_{k}", "mean",
                             relative_l2(panel[:, mean_col], ref_panel[:, mean_col])))
                rows.append((str(path), t, f"m_{k}", "full",
                             relative_l2(panel[:, cols_k], ref_panel[:, cols_k])))
    with open(args.out, "w") as fh:
        fh.write("file,t,field,scope,rel_l2\n")
        for r in rows:
            fh.write(f"{r[0]},{r[1]:.12g},{r[2]},{r[3]},{r[4]:.17g}\n")
    with open(str(args.out) + ".meta.json", "w") as fh:
        json.dump({"ref": str(args.ref), "inputs": [str(p) for p in args.inputs],
                   "config_hash": ref_meta.get("config_hash")}, fh, indent=1)
        fh.write("\n")
    print(f"wrote {len(rows)} comparison rows to {args.out}")
    return 0


def cmd_uq_run(cfg, args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not cfg["sg"]["enabled"]:
        raise ConfigurationError("uq-run needs sg.enabled = true")

    class NS:  # bundle per-step argparse-like namespaces
        pass

    a = NS()
    a.out = out_dir / "dataset.csv"
    rc = cmd_gen_data(cfg, a)
    if rc:
        return rc

    a = NS()
    a.data = out_dir / "dataset.csv"
    a.out = out_dir / "lg.json"
    cfg_lg = {**cfg, "closure": {**cfg["closure"], "kind": "lg"}}
    rc = cmd_train(cfg_lg, a)
    if rc:
        return rc

    for kind, ckpt in (("kinetic", None), ("pn", None), ("lg", out_dir / "lg.json")):
        a = NS()
        a.out = out_dir / f"{kind}.csv"
        a.checkpoint = ckpt
        cfg_k = {**cfg, "closure": {**cfg["closure"], "kind": kind}}
        rc = cmd_solve(cfg_k, a)
        if rc:
            return rc

    a = NS()
    a.ref = out_dir / "kinetic.csv"
    a.inputs = [out_dir / "pn.csv", out_dir / "lg.csv"]
    a.out = out_dir / "errors.csv"
    return cmd_compare(a)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            return cmd_compare(args)
        cfg = _load_cfg(args)
        if args.command == "gen-data":
            return cmd_gen_data(cfg, args)
        if args.command == "train":
            return cmd_train(cfg, args)
        if args.command == "solve":
            return cmd_solve(cfg, args)
        if args.command == "uq-run":
            return cmd_uq_run(cfg, args)
        raise AssertionError(args.command)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
