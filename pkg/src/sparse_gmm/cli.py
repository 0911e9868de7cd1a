"""Command-line front end: sweeps, presets, threshold tables and instance generation.

Usage::

    sparse-gmm presets
    sparse-gmm run --preset fig2_left --out results/ --scale 0.5
    sparse-gmm run --config sweep.yaml --workers 4
    sparse-gmm thresholds --k 2 --alpha 2 --rho 0.05
    sparse-gmm gen --k 2 --alpha 2 --rho 0.1 --lam 1.5 --d 500 --seed 3 --out inst

Sweep configs are YAML with ``schema_version: 1``. Every cell of the axis
product (and every repetition) gets its own seed drawn from
``numpy.random.SeedSequence(entropy=root_seed, spawn_key=(i, j, ..., rep))``,
so a cell's stream depends only on its own coordinates.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import itertools
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .amp import AmpConfig, amp_run
from .asymptotics import C_dyn, C_dyn_asymptotic, C_it, C_it_asymptotic
from .baselines import SpcaConfig, dt_cluster, labels_mse, pca_cluster, spca_cluster
from .model import ModelParams, generate_instance
from .potential import classify_phase, find_thresholds, lambda_of_overlap, overlap_grid
from .state_evolution import informed_start, se_fixed_point, uninformed_start

SCHEMA_VERSION = 1
WORKERS_ENV = "SPARSE_GMM_WORKERS"

ALGORITHMS = ("amp", "se_uninformed", "se_informed", "pca", "spca", "dt", "thresholds", "asymptotics")
INSTANCE_ALGS = ("amp", "pca", "spca", "dt")
AXIS_NAMES = ("k", "alpha", "rho", "lam", "lam_ratio", "d", "n", "s", "s_over_sqrt_n")

COLUMNS = {
    "amp": ["k", "alpha", "rho", "lambda", "n", "d", "rep", "seed", "mse_trace_form", "mse_frobenius",
            "tr_Mu", "tr_Mv", "iterations", "converged", "damping", "status"],
    "se": ["rho", "lambda", "alpha", "k", "init", "m_u_star", "m_v_star", "mse", "iterations", "status"],
    "baselines": ["algorithm", "rho_or_s", "lambda", "alpha", "n", "d", "rep", "seed", "mse",
                  "support_size", "status"],
    "thresholds": ["rho", "lambda", "alpha", "k", "lambda_alg", "lambda_it", "lambda_dyn",
                   "lambda_alg_bayes", "lambda_jump_bayes", "phase", "boundary", "status"],
    "lambda_curve": ["rho", "alpha", "k", "m_u", "lambda", "status"],
    "asymptotics": ["k", "C_dyn", "C_it", "C_dyn_asymptotic", "C_it_asymptotic", "status"],
}
OUTPUT_FILE = {"amp": "amp", "se_uninformed": "se", "se_informed": "se", "pca": "baselines",
               "spca": "baselines", "dt": "baselines", "thresholds": "thresholds",
               "asymptotics": "asymptotics"}


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ presets

PRESETS: dict[str, dict] = {
    "fig1": {
        "schema_version": 1, "name": "fig1", "seed": 0, "repetitions": 1,
        "algorithms": ["thresholds"],
        "base": {"k": 2, "alpha": 2.0},
        "axes": [{"name": "rho", "grid": "log", "start": 0.02, "stop": 1.0, "count": 12},
                 {"name": "lam_ratio", "grid": "linear", "start": 0.3, "stop": 1.5, "count": 13}],
    },
    "fig2_left": {
        "schema_version": 1, "name": "fig2_left", "seed": 2024, "repetitions": 10,
        "algorithms": ["amp", "se_uninformed", "se_informed", "pca", "spca"],
        "base": {"k": 2, "alpha": 2.0, "d": 4000},
        "axes": [{"name": "rho", "values": [0.18]},
                 {"name": "lam_ratio", "grid": "linear", "start": 0.5, "stop": 2.0, "count": 12}],
    },
    "fig2_right": {
        "schema_version": 1, "name": "fig2_right", "seed": 2025, "repetitions": 10,
        "algorithms": ["amp", "se_uninformed", "se_informed", "pca", "spca"],
        "base": {"k": 2, "alpha": 2.0, "d": 4000},
        "axes": [{"name": "rho", "values": [0.05]},
                 {"name": "lam_ratio", "grid": "linear", "start": 0.5, "stop": 2.0, "count": 12}],
    },
    "fig4": {
        "schema_version": 1, "name": "fig4", "seed": 4, "repetitions": 30,
        "algorithms": ["dt", "spca"],
        "base": {"k": 2, "lam_ratio": 0.8},
        "axes": [{"name": "alpha", "values": [1.0, 2.0]},
                 {"name": "n", "values": [2000, 4000]},
                 {"name": "s_over_sqrt_n", "grid": "log", "start": 0.2, "stop": 3.0, "count": 6}],
    },
    "fig8": {
        "schema_version": 1, "name": "fig8", "seed": 0, "repetitions": 1,
        "algorithms": ["thresholds"], "curve_points": 200,
        "base": {"k": 2, "alpha": 2.0, "lam_ratio": 1.0},
        "axes": [{"name": "rho", "values": [0.09, 0.11, 0.13, 0.15]}],
    },
    "fig9": {
        "schema_version": 1, "name": "fig9", "seed": 0, "repetitions": 1,
        "algorithms": ["asymptotics"],
        "base": {},
        "axes": [{"name": "k", "grid": "linear", "start": 2, "stop": 32, "count": 31}],
    },
}


# ------------------------------------------------------------ config checks


def _axis_values(ax: dict, where: str) -> list:
    if "name" not in ax:
        raise ConfigError(f"{where}: missing 'name'")
    if ax["name"] not in AXIS_NAMES:
        raise ConfigError(f"{where}.name: unknown parameter {ax['name']!r}; expected one of {AXIS_NAMES}")
    if "values" in ax:
        vals = list(ax["values"])
    else:
        for key in ("grid", "start", "stop", "count"):
            if key not in ax:
                raise ConfigError(f"{where}: need 'values' or grid/start/stop/count (missing {key!r})")
        count = int(ax["count"])
        if count < 1:
            raise ConfigError(f"{where}.count: must be positive")
        start, stop = float(ax["start"]), float(ax["stop"])
        if ax["grid"] == "linear":
            vals = np.linspace(start, stop, count).tolist()
        elif ax["grid"] == "log":
            if start <= 0 or stop <= 0:
                raise ConfigError(f"{where}: log grid needs positive bounds")
            vals = np.geomspace(start, stop, count).tolist()
        else:
            raise ConfigError(f"{where}.grid: expected 'linear' or 'log', got {ax['grid']!r}")
    if not vals:
        raise ConfigError(f"{where}: empty grid")
    if ax["name"] in ("k", "d", "n", "s"):
        vals = [int(round(v)) for v in vals]
    return vals


def validate_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config: top level must be a mapping")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {cfg.get('schema_version')!r}")
    algs = cfg.get("algorithms")
    if not algs:
        raise ConfigError("algorithms: at least one algorithm is required")
    for a in algs:
        if a not in ALGORITHMS:
            raise ConfigError(f"algorithms: unknown algorithm {a!r}; expected one of {ALGORITHMS}")
    axes = cfg.get("axes", [])
    if not isinstance(axes, list):
        raise ConfigError("axes: must be a list")
    out = copy.deepcopy(cfg)
    out.setdefault("name", "sweep")
    out.setdefault("seed", 0)
    out.setdefault("repetitions", 1)
    out.setdefault("base", {})
    if int(out["repetitions"]) < 1:
        raise ConfigError("repetitions: must be positive")
    for key in out["base"]:
        if key not in AXIS_NAMES:
            raise ConfigError(f"base.{key}: unknown parameter")
    out["_grids"] = [(_ax["name"], _axis_values(_ax, f"axes[{i}]")) for i, _ax in enumerate(axes)]
    return out


def load_config(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
    return cfg


# ------------------------------------------------------------------- cells


def cell_seed(root: int, index: tuple[int, ...], rep: int) -> int:
    ss = np.random.SeedSequence(entropy=int(root), spawn_key=tuple(int(i) for i in index) + (int(rep),))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def resolve_cell(base: dict, values: dict, scale: float = 1.0) -> dict:
    p = {"k": 2, "alpha": 2.0}
    p.update(base)
    p.update(values)
    k, alpha = int(p["k"]), float(p["alpha"])
    out = {"k": k, "alpha": alpha}
    if "lam_ratio" in p:
        out["lam"] = float(p["lam_ratio"]) * k / math.sqrt(alpha)
    else:
        out["lam"] = float(p.get("lam", 1.0))
    n = d = None
    if "n" in p:
        n = max(1, int(round(p["n"] * scale)))
        d = max(1, int(round(n / alpha)))
    elif "d" in p:
        d = max(1, int(round(p["d"] * scale)))
        n = max(1, int(round(alpha * d)))
    out["n"], out["d"] = n, d
    if "s_over_sqrt_n" in p and n is not None:
        out["s"] = max(1, int(math.floor(p["s_over_sqrt_n"] * math.sqrt(n) + 1e-9)))
    elif "s" in p:
        out["s"] = int(p["s"])
    if "s" in out and d is not None:
        out["rho"] = out["s"] / d
    else:
        out["rho"] = float(p.get("rho", 1.0))
    return out


def _f(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


@lru_cache(maxsize=64)
def _thresholds_cached(k: int, alpha: float, rho: float):
    return find_thresholds(k, alpha, rho)


def _task(args):
    """Run every algorithm of one (cell, rep); return ``{file: [(sort_key, row), ...]}``."""
    cfg, index, rep, cell = args
    out: dict[str, list] = {}
    algs = cfg["algorithms"]
    key = tuple(index) + (rep,)
    fail = [tuple(c) for c in cfg.get("debug_fail_cells", [])]

    def emit(name, sort_key, row):
        out.setdefault(name, []).append((sort_key, row))

    def status_of(exc):
        return f"failed:{type(exc).__name__}"

    inst_algs = [a for a in algs if a in INSTANCE_ALGS]
    seed = cell_seed(cfg["seed"], index, rep)
    if inst_algs:
        inst = err = None
        try:
            if tuple(index) in fail:
                raise RuntimeError("injected failure")
            params = ModelParams(k=cell["k"], alpha=cell["alpha"], rho=cell["rho"], lam=cell["lam"],
                                 d=cell["d"], seed=seed)
            inst = generate_instance(params)
        except Exception as exc:  # noqa: BLE001 - recorded per cell
            err = exc
        for a in inst_algs:
            if a == "amp":
                row = [cell["k"], cell["alpha"], cell["rho"], cell["lam"], cell["n"], cell["d"], rep, seed]
                try:
                    if err:
                        raise err
                    acfg = AmpConfig(seed=seed, **cfg.get("amp", {}))
                    tr = amp_run(inst, acfg)
                    r = tr.records[-1]
                    row += [r.mse_trace_form, r.mse_frobenius, r.tr_Mu, r.tr_Mv, tr.iterations,
                            tr.converged, tr.gamma, "ok" if tr.converged else "not_converged"]
                except Exception as exc:  # noqa: BLE001
                    row += [None] * 7 + [status_of(exc)]
                emit("amp", key, row)
            else:
                rho_or_s = cell.get("s", cell["rho"])
                row = [a, rho_or_s, cell["lam"], cell["alpha"], cell["n"], cell["d"], rep, seed]
                try:
                    if err:
                        raise err
                    Y = inst.Y
                    if a == "pca":
                        res = pca_cluster(Y)
                    elif a == "spca":
                        res = spca_cluster(Y, inst.params.s / inst.params.d,
                                           SpcaConfig(**cfg.get("spca", {})))
                    else:
                        res = dt_cluster(Y, inst.params.s)
                    st = "ok" if not res.flags else "flag:" + "+".join(res.flags)
                    row += [labels_mse(res.labels, inst.U_star), res.support_size, st]
                except Exception as exc:  # noqa: BLE001
                    row += [None, None, status_of(exc)]
                emit("baselines", (ALGORITHMS.index(a),) + key, row)

    if rep == 0:
        k, alpha, rho, lam = cell["k"], cell["alpha"], cell["rho"], cell["lam"]
        for a in ("se_uninformed", "se_informed"):
            if a not in algs:
                continue
            init = a.split("_")[1]
            row = [rho, lam, alpha, k, init]
            try:
                if tuple(index) in fail:
                    raise RuntimeError("injected failure")
                start = uninformed_start(rho) if init == "uninformed" else informed_start(rho)
                r = se_fixed_point(k, alpha, rho, lam, start)
                row += [r.m_u, r.m_v, r.mse(k), r.iterations, "ok" if r.converged else "not_converged"]
            except Exception as exc:  # noqa: BLE001
                row += [None] * 4 + [status_of(exc)]
            emit("se", (0 if init == "uninformed" else 1,) + key, row)
        if "thresholds" in algs:
            row = [rho, lam, alpha, k]
            try:
                if tuple(index) in fail:
                    raise RuntimeError("injected failure")
                ts = _thresholds_cached(k, alpha, rho)
                ph = classify_phase(k, alpha, rho, lam, ts)
                row += [ts.lambda_alg, ts.lambda_it, ts.lambda_dyn, ts.lambda_alg_bayes,
                        ts.lambda_jump_bayes, ph.label.value, ph.boundary, "ok"]
            except Exception as exc:  # noqa: BLE001
                row += [None] * 7 + [status_of(exc)]
            emit("thresholds", key, row)
            npts = int(cfg.get("curve_points", 0))
            if npts > 0:
                for j, x in enumerate(overlap_grid(npts)):
                    try:
                        lv = lambda_of_overlap(float(x), k, alpha, rho)
                        emit("lambda_curve", key + (j,), [rho, alpha, k, float(x), lv, "ok" if lv else "absent"])
                    except Exception as exc:  # noqa: BLE001
                        emit("lambda_curve", key + (j,), [rho, alpha, k, float(x), None, status_of(exc)])
        if "asymptotics" in algs:
            row = [k]
            try:
                row += [C_dyn(k), C_it(k), C_dyn_asymptotic(k), C_it_asymptotic(k), "ok"]
            except Exception as exc:  # noqa: BLE001
                row += [None] * 4 + [status_of(exc)]
            emit("asymptotics", key, row)
    return out


def plan(cfg: dict, scale: float = 1.0) -> list:
    names = [n for n, _ in cfg["_grids"]]
    grids = [v for _, v in cfg["_grids"]]
    tasks = []
    for index in itertools.product(*[range(len(g)) for g in grids]):
        values = {n: g[i] for n, g, i in zip(names, grids, index)}
        cell = resolve_cell(cfg["base"], values, scale)
        needs_instance = any(a in INSTANCE_ALGS for a in cfg["algorithms"])
        if needs_instance and cell["d"] is None:
            raise ConfigError("base: instance-based algorithms need 'd' or 'n'")
        reps = int(cfg["repetitions"]) if needs_instance else 1
        for rep in range(reps):
            tasks.append((cfg, index, rep, cell))
    return tasks


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_sweep(cfg: dict, out_dir: str | Path, workers: int | None = None, scale: float = 1.0) -> dict:
    """Execute a validated config and write CSVs plus ``manifest.json``."""
    cfg = validate_config(cfg) if "_grids" not in cfg else cfg
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = plan(cfg, scale)
    workers = workers or default_workers()
    collected: dict[str, list] = {}
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks, chunksize=1))
    else:
        results = [_task(t) for t in tasks]
    for res in results:
        for name, rows in res.items():
            collected.setdefault(name, []).extend(rows)

    outputs = {}
    for name, rows in sorted(collected.items()):
        rows.sort(key=lambda kr: kr[0])
        path = out_dir / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(COLUMNS[name])
            for _, row in rows:
                w.writerow([_f(x) for x in row])
        outputs[path.name] = _sha256(path)

    public = {k: v for k, v in cfg.items() if not k.startswith("_")}
    blob = json.dumps(public, sort_keys=True).encode()
    manifest = {
        "config": public,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "root_seed": int(cfg["seed"]),
        "seed_rule": "SeedSequence(entropy=root_seed, spawn_key=cell_index + (rep,)).generate_state(1)[0]",
        "scale": scale,
        "workers": workers,
        "cells": len(tasks),
        "outputs": outputs,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# --------------------------------------------------------------------- main


def _cmd_presets(args) -> int:
    for name, p in PRESETS.items():
        axes = ", ".join(f"{a['name']}[{len(_axis_values(a, name))}]" for a in p["axes"])
        print(f"{name:11s} algorithms={','.join(p['algorithms'])} axes={axes} reps={p['repetitions']}")
    return 0


def _cmd_run(args) -> int:
    if bool(args.config) == bool(args.preset):
        print("error: give exactly one of --config or --preset", file=sys.stderr)
        return 2
    try:
        if args.preset:
            if args.preset not in PRESETS:
                raise ConfigError(f"unknown preset {args.preset!r}; valid: {', '.join(PRESETS)}")
            cfg = copy.deepcopy(PRESETS[args.preset])
        else:
            cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        cfg = validate_config(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    man = run_sweep(cfg, args.out, args.workers, args.scale)
    for name, digest in man["outputs"].items():
        print(f"{Path(args.out) / name}  sha256={digest[:16]}")
    return 0


def _cmd_thresholds(args) -> int:
    ts = find_thresholds(args.k, args.alpha, args.rho)
    d = {k: v for k, v in ts.to_dict().items()}
    text = json.dumps(d, indent=2, default=float)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _cmd_gen(args) -> int:
    params = ModelParams(k=args.k, alpha=args.alpha, rho=args.rho, lam=args.lam, d=args.d, seed=args.seed)
    inst = generate_instance(params)
    npz, meta = inst.save(args.out)
    print(f"wrote {npz} and {meta} (n={params.n}, d={params.d}, s={params.s})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sparse-gmm", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a sweep from a config file or preset")
    p.add_argument("--config")
    p.add_argument("--preset")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="results")
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (default: ${WORKERS_ENV} or CPU count)")
    p.add_argument("--scale", type=float, default=1.0, help="multiplier applied to n and d")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("presets", help="list built-in sweeps")
    p.set_defaults(func=_cmd_presets)

    p = sub.add_parser("thresholds", help="print all thresholds for one (k, alpha, rho)")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_thresholds)

    p = sub.add_parser("gen", help="generate and save one problem instance")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
