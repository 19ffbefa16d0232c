"""Command-line entry point: ``graphonlab <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import report
from .core import GraphonError, Partition, StepGraphon, int_f
from .cutnorm import CutNormBudgetError, cut_distance, cutnorm
from .regularity import min_int_partition, weak_regularity_partition
from .scenarios import SCENARIOS, ConfigError, ExperimentConfig, ExperimentFailure, _graph, derive_seed, run
from .weakstar import StripeSampleConfig, sample_stripe_version

EXIT_CONFIG = 2
EXIT_FAILURE = 1


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("GRAPHONLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"GRAPHONLAB_THREADS={env!r} is not an integer") from None
    return 1


def _load_config(args) -> dict:
    if not args.config:
        return {}
    try:
        data = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _seed(args, cfg: dict, required: bool) -> int | None:
    seed = args.seed if args.seed is not None else cfg.get("params", {}).get("seed", cfg.get("seed"))
    if seed is None and required:
        raise ConfigError("this command is randomized and needs --seed")
    return seed


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _floats(text: str) -> list:
    return [float(x) for x in text.split(",") if x.strip()]


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args, cfg):
    W = StepGraphon.load(args.graphon)
    _emit(args, json.dumps({"valid": True, "steps": W.k}) + "\n")


def cmd_entropy(args, cfg):
    W = StepGraphon.load(args.graphon)
    _emit(args, json.dumps({"functional": args.f, "value": int_f(W, args.f)}) + "\n")


def cmd_cutnorm(args, cfg):
    W1 = StepGraphon.load(args.graphon)
    D = W1 - (StepGraphon.load(args.other) if args.other else StepGraphon.constant(0.0))
    kw = {}
    if args.mode == "symmetric" or D.k > 24:
        kw = {"restarts": args.restarts, "rng_seed": _seed(args, cfg, False) or 0}
    r = cutnorm(D, args.mode, **kw)
    _emit(args, r.to_json() + "\n")


def cmd_cutdist(args, cfg):
    W1, W2 = StepGraphon.load(args.first), StepGraphon.load(args.second)
    seed = _seed(args, cfg, args.mode == "heuristic")
    r = cut_distance(W1, W2, args.mode, budget=args.budget, seed=seed or 0)
    out = {"value": r.value, "mode": r.mode, "upper_bound": r.upper_bound, "cells": r.n_cells,
           "permutation": list(r.permutation)}
    _emit(args, json.dumps(out) + "\n")


def cmd_regularize(args, cfg):
    seed = _seed(args, cfg, True)
    G = _graph(args.graph, derive_seed(seed, "graph"))
    P, trace = weak_regularity_partition(G, args.eps, seed=derive_seed(seed, "search"), restarts=args.restarts)
    rows = [(t.round, t.parts, t.index, t.violation, t.decrease) for t in trace]
    text = report.csv_text(["round", "parts", "index", "violation", "decrease"], rows)
    if args.partition_out:
        Path(args.partition_out).write_text(json.dumps({"assignment": P.to_list()}) + "\n")
    _emit(args, text)


def cmd_minpart(args, cfg):
    seed = _seed(args, cfg, True)
    G = _graph(args.graph, derive_seed(seed, "graph"))
    r = min_int_partition(G, args.k, args.f, moves=args.moves, seed=derive_seed(seed, "search"),
                          exhaustive=True if args.exhaustive else None)
    _emit(args, json.dumps({"assignment": r.partition.to_list(), "index": r.index, "exhaustive": r.exhaustive}) + "\n")


def cmd_sample(args, cfg):
    seed = _seed(args, cfg, True)
    W = StepGraphon.load(args.graphon)
    if args.breaks:
        breaks = _floats(args.breaks)
        labels = [int(x) for x in args.labels.split(",")] if args.labels else list(range(len(breaks) - 1))
        P = Partition(breaks, labels)
    else:
        P = Partition.trivial()
    U = sample_stripe_version(W, StripeSampleConfig(P, args.stripes, derive_seed(seed, "sample")))
    _emit(args, U.to_json() + "\n")


def cmd_render(args, cfg):
    W = StepGraphon.load(args.graphon)
    report.write_svg(W, args.svg, size=args.size)


def _param(text: str):
    key, sep, value = text.partition("=")
    if not sep:
        raise ConfigError(f"--param expects key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def cmd_experiment(args, cfg):
    if cfg:
        config = ExperimentConfig.from_dict({"scenario": args.name, **cfg})
        if config.scenario != args.name:
            raise ConfigError(f"config is for scenario {config.scenario!r}, not {args.name!r}")
    else:
        config = ExperimentConfig(args.name)
    for text in args.param or []:
        k, v = _param(text)
        config.params[k] = v
    if args.seed is not None:
        config.params["seed"] = args.seed
    if args.out:
        config.output_dir = args.out
    result = run(config, threads=_threads(args))
    summary = {k: result[k] for k in ("scenario", "seed", "output_dir", "files")}
    sys.stdout.write(json.dumps(summary) + "\n")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="root seed (required for randomized commands)")
    common.add_argument("--out", help="output file (or directory for experiments)")
    common.add_argument("--threads", type=int, help="worker threads (default: $GRAPHONLAB_THREADS or 1)")

    p = argparse.ArgumentParser(prog="graphonlab", description="Step graphons, cut-norms and weak regularity.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[common], help="check a graphon JSON file")
    s.add_argument("graphon")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("entropy", parents=[common], help="INT_f of a graphon")
    s.add_argument("graphon")
    s.add_argument("-f", default="H", help="functional: H or neg_square")
    s.set_defaults(func=cmd_entropy)

    s = sub.add_parser("cutnorm", parents=[common], help="cut-norm of W or of W - OTHER")
    s.add_argument("graphon")
    s.add_argument("other", nargs="?")
    s.add_argument("--mode", choices=["symmetric", "bilinear"], default="symmetric")
    s.add_argument("--restarts", type=int, default=16)
    s.set_defaults(func=cmd_cutnorm)

    s = sub.add_parser("cutdist", parents=[common], help="cut distance over grid permutations")
    s.add_argument("first")
    s.add_argument("second")
    s.add_argument("--mode", choices=["exact_small", "heuristic"], default="exact_small")
    s.add_argument("--budget", type=int, default=20000)
    s.set_defaults(func=cmd_cutdist)

    s = sub.add_parser("regularize", parents=[common], help="weak regularity partition of a graph")
    s.add_argument("graph", help="kab:a,b | gnp:n,p | cycle:n | empty:n | file:path")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--restarts", type=int, default=50)
    s.add_argument("--partition-out", help="write the partition JSON here")
    s.set_defaults(func=cmd_regularize)

    s = sub.add_parser("minpart", parents=[common], help="INT_f-minimising k-part partition")
    s.add_argument("graph")
    s.add_argument("-k", type=int, required=True)
    s.add_argument("-f", default="neg_square")
    s.add_argument("--moves", type=int, default=200000)
    s.add_argument("--exhaustive", action="store_true")
    s.set_defaults(func=cmd_minpart)

    s = sub.add_parser("sample", parents=[common], help="stripe-permuted version of a graphon")
    s.add_argument("graphon")
    s.add_argument("--stripes", type=int, required=True)
    s.add_argument("--breaks", help="base partition grid, e.g. 0,0.5,1 (default: one part)")
    s.add_argument("--labels", help="part of each grid cell, e.g. 0,1")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("experiment", parents=[common], help="run a scripted scenario")
    s.add_argument("name", choices=sorted(SCENARIOS))
    s.add_argument("--param", action="append", help="override a parameter: key=JSON value")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("render", parents=[common], help="grayscale SVG heatmap of a graphon")
    s.add_argument("graphon")
    s.add_argument("svg")
    s.add_argument("--size", type=int, default=report.SVG_SIZE)
    s.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = _load_config(args)
        args.func(args, cfg)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except (GraphonError, CutNormBudgetError) as exc:
        return _fail("input", str(exc), EXIT_CONFIG)
    except ExperimentFailure as exc:
        return _fail("experiment", str(exc), EXIT_FAILURE)
    except (OSError, ValueError) as exc:
        return _fail("input", f"{type(exc).__name__}: {exc}", EXIT_CONFIG)
    return 0


if __name__ == "__main__":
    sys.exit(main())
