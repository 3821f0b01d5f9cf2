"""Command line: ``cmm simulate|fit|bench-variants|compare-init|select``.

Every command reads a JSON or YAML config (``--config``); ``--seed`` and
``--out`` override the config's ``seed`` and ``out`` keys.  Outputs embed
the effective config.  Exit codes: 0 success, 1 input error, 2 a fit that
stopped at the iteration limit without meeting the tolerance.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .em import fit
from .experiments import bench_variants, compare_init, iterations_to_threshold, trace_table
from .initialize import InitOptions, initialize
from .io import (ConfigError, DatasetError, load_config, maps_from_meta, params_to_dict,
                 read_dataset, to_jsonable, write_csv, write_dataset, write_json)
from .mappings import maps_from_config
from .search import SearchOptions
from .select import select_n
from .sim import Scenario, preset_maps, simulate

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2


def _options(cls, block, name):
    block = block or {}
    if not isinstance(block, dict):
        raise ConfigError(f"'{name}' must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(block) - known
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    try:
        return cls(**block)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid '{name}' block: {err}") from None


def _search(cfg):
    return _options(SearchOptions, cfg.get("search"), "search")


def _init(cfg):
    return _options(InitOptions, cfg.get("init"), "init")


def _dataset(cfg, base: Path):
    if "dataset" not in cfg:
        raise ConfigError("config needs a 'dataset' path")
    path = Path(cfg["dataset"])
    if not path.is_absolute() and not path.exists():
        path = base / path
    if not path.exists():
        raise ConfigError(f"dataset not found: {cfg['dataset']}")
    obs, labels, meta = read_dataset(path)
    maps = maps_from_config(cfg["maps"]) if "maps" in cfg else maps_from_meta(meta)
    return obs, labels, meta, maps


def _int(cfg, key, default=None):
    val = cfg.get(key, default)
    if val is None:
        raise ConfigError(f"config needs '{key}'")
    try:
        return int(val)
    except (TypeError, ValueError):
        raise ConfigError(f"'{key}' must be an integer") from None


def _emit(doc, out, csv_table=None):
    if out is None:
        print(json.dumps(to_jsonable(doc), indent=2, sort_keys=True))
        return
    out = Path(out)
    write_json(out, doc)
    if csv_table is not None:
        header, rows = csv_table
        write_csv(out.with_suffix(".csv"), header, rows)


def cmd_simulate(cfg, base, threads):
    scenario = Scenario.from_dict(dict(cfg.get("scenario") or {}, seed=cfg["seed"]))
    maps = maps_from_config(cfg["maps"]) if "maps" in cfg else preset_maps()
    obs, labels = simulate(scenario, maps)
    obs.meta["config"] = cfg
    if cfg.get("out") is None:
        raise ConfigError("simulate needs an output path ('out' or --out)")
    write_dataset(cfg["out"], obs, labels, maps)
    print(f"wrote {cfg['out']}: {obs.M} F rows, {obs.K} G rows "
          f"({scenario.n_objects} objects, {scenario.outliers_f}+{scenario.outliers_g} outliers)")
    return EXIT_OK


def cmd_fit(cfg, base, threads):
    obs, _, meta, maps = _dataset(cfg, base)
    n = _int(cfg, "n")
    opts, init_opts = _search(cfg), _init(cfg)
    seed = cfg["seed"]
    theta0 = initialize(obs, maps, n, init_opts, np.random.default_rng(seed))
    rep = fit(obs, n, theta0, maps, opts, seed=seed, threads=threads)
    doc = {"config": cfg, "dataset_meta": meta, "n_objects": n,
           "init": params_to_dict(theta0), "params": params_to_dict(rep.params),
           "loglik_init": rep.loglik_init, "loglik_trace": rep.loglik_trace,
           "trajectory": rep.trajectory, "labels_f": rep.assignment.labels_f,
           "labels_g": rep.assignment.labels_g, "iterations_run": rep.iterations_run,
           "converged": rep.converged, "flags": rep.flags}
    _emit(doc, cfg.get("out"))
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def cmd_bench_variants(cfg, base, threads):
    obs, _, meta, maps = _dataset(cfg, base)
    n = _int(cfg, "n")
    opts, init_opts = _search(cfg), _init(cfg)
    seed = cfg["seed"]
    theta0 = initialize(obs, maps, n, init_opts, np.random.default_rng(seed))
    reports = bench_variants(obs, maps, n, theta0, opts, seed=seed, threads=threads)
    names, rows = trace_table(reports, opts.max_em_iters)
    doc = {"config": cfg, "dataset_meta": meta, "variants": names,
           "traces": {v: reports[v].full_trace for v in names},
           "loglik_init": reports[names[0]].loglik_init,
           "iterations_to_99": iterations_to_threshold({v: reports[v].full_trace
                                                        for v in names}),
           "final_positions": {v: reports[v].params.positions for v in names},
           "flags": {v: reports[v].flags for v in names}}
    _emit(doc, cfg.get("out"), (["iteration", *names], rows))
    return EXIT_OK


def cmd_compare_init(cfg, base, threads):
    obs, _, meta, maps = _dataset(cfg, base)
    n_max = _int(cfg, "n_max", 5)
    runs = _int(cfg, "runs", 10)
    seed = cfg["seed"]
    seeds = [seed + i for i in range(runs)]
    rows = compare_init(obs, maps, range(1, n_max + 1), seeds, _init(cfg))
    doc = {"config": cfg, "dataset_meta": meta, "rows": rows}
    table = (["strategy", "N", "mean", "var", "runs"],
             [[r["strategy"], r["N"], r["mean"], r["var"], r["runs"]] for r in rows])
    _emit(doc, cfg.get("out"), table)
    return EXIT_OK


def cmd_select(cfg, base, threads):
    obs, _, meta, maps = _dataset(cfg, base)
    n_max = _int(cfg, "n_max", 5)
    best, scores = select_n(obs, maps, n_max, _search(cfg), np.random.default_rng(cfg["seed"]),
                            _init(cfg), threads=threads)
    doc = {"config": cfg, "dataset_meta": meta, "best_n": best,
           "curve": [asdict(s) for s in scores]}
    table = (["N", "score", "loglik", "dim"],
             [[s.n_components, s.score, s.loglik, s.dim] for s in scores])
    _emit(doc, cfg.get("out"), table)
    print(f"selected N = {best}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "bench-variants": cmd_bench_variants,
    "compare-init": cmd_compare_init,
    "select": cmd_select,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmm", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON or YAML run config")
    parser.add_argument("--seed", type=int, help="overrides the config seed")
    parser.add_argument("--out", help="output path; overrides the config")
    parser.add_argument("--threads", type=int, help="worker cap (default: $CMM_THREADS or 1)")
    return parser


def _threads(arg):
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("CMM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("CMM_THREADS must be an integer") from None
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        cfg["seed"] = _int(cfg, "seed", 0)
        if args.out is not None:
            cfg["out"] = args.out
        base = Path(args.config).resolve().parent
        return COMMANDS[args.command](cfg, base, _threads(args.threads))
    except DatasetError as err:
        print(f"error: malformed dataset: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
