"""Scripted experiments behind ``graphonlab experiment <name>``.

Every randomized scenario draws all of its randomness from one root seed:
trial ``i`` of component ``tag`` uses ``derive_seed(root, tag, i)``.
"""

from __future__ import annotations

import json
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import report
from .core import Partition, StepGraphon, int_f
from .cutnorm import cutnorm_bilinear_exact, cutnorm_symmetric
from .functionals import binary_entropy, get_functional
from .regularity import (
    Graph,
    finite_index_experiment,
    weak_regularity_partition,
)
from .weakstar import (
    aggregate,
    bipartite_chessboard,
    chessboard_family,
    chessboard_int_h,
    event_frequency,
    improvement_experiment,
    mixing_entropy,
    noel_family,
    noel_region_average,
    permuted_bipartite,
    shift_left_version,
    weakstar_pseudometric,
    NOEL_VALUE,
)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class ExperimentFailure(RuntimeError):
    """A check inside an experiment did not hold."""


def derive_seed(root: int, tag: str, index: int = 0) -> int:
    ss = np.random.SeedSequence([int(root), zlib.crc32(tag.encode()), int(index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class ExperimentConfig:
    scenario: str
    params: dict = field(default_factory=dict)
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict) or "scenario" not in data:
            raise ConfigError("config needs a 'scenario' field")
        unknown = set(data) - {"scenario", "params", "output_dir"}
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        params = data.get("params", {}) or {}
        if not isinstance(params, dict):
            raise ConfigError("'params' must be an object")
        return cls(data["scenario"], dict(params), data.get("output_dir"))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)


@dataclass
class Context:
    out: Path
    seed: int | None
    threads: int = 1
    files: list = field(default_factory=list)

    def seed_for(self, tag: str, index: int = 0) -> int:
        return derive_seed(self.seed, tag, index)

    def map(self, fn, items):
        """Ordered parallel map; results come back in input order."""
        items = list(items)
        if self.threads <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))

    def csv(self, name, header, rows):
        self.files.append(str(report.write_csv(self.out / name, header, rows)))

    def graphon(self, name, W, svg: bool = True):
        self.files.append(str(report.write_graphon(W, self.out / f"{name}.json")))
        if svg:
            self.files.append(str(report.write_svg(W, self.out / f"{name}.svg")))


# ---------------------------------------------------------------------------
# parameter checking


def _int(p, key, lo=None, hi=None):
    v = p[key]
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
        raise ConfigError(f"param {key!r} must be an integer, got {v!r}")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(f"param {key!r} = {v} outside [{lo}, {hi}]")
    return int(v)


def _float(p, key, lo=None, hi=None, open_lo=False):
    v = p[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"param {key!r} must be a number, got {v!r}")
    v = float(v)
    if lo is not None and (v < lo or (open_lo and v == lo)):
        raise ConfigError(f"param {key!r} = {v} below {'or at ' if open_lo else ''}{lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"param {key!r} = {v} above {hi}")
    return v


def _int_list(p, key, lo=None, hi=None):
    v = p[key]
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not v:
        raise ConfigError(f"param {key!r} must be a non-empty list of integers")
    return [_int({key: x}, key, lo, hi) for x in v]


def _functional(p, key="f"):
    try:
        return get_functional(p[key])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _graph(spec: str, seed):
    """kab:a,b | gnp:n,p | cycle:n | empty:n | file:path"""
    if not isinstance(spec, str) or ":" not in spec:
        raise ConfigError(f"graph spec {spec!r} must look like 'kab:4,4' or 'gnp:256,0.5'")
    kind, arg = spec.split(":", 1)
    try:
        if kind == "kab":
            a, b = (int(x) for x in arg.split(","))
            return Graph.complete_bipartite(a, b)
        if kind == "gnp":
            n, prob = arg.split(",")
            return Graph.gnp(int(n), float(prob), seed)
        if kind == "cycle":
            return Graph.cycle(int(arg))
        if kind == "empty":
            return Graph.empty(int(arg))
        if kind == "file":
            return Graph.load(arg)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"bad graph spec {spec!r}: {exc}") from None
    raise ConfigError(f"unknown graph kind {kind!r}")


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Scenario:
    name: str
    randomized: bool
    defaults: dict
    check: Callable
    run: Callable


def _check_toy(p):
    _functional(p)


def _run_toy(p, ctx):
    f = _functional(p)
    bip, half = bipartite_chessboard(), StepGraphon.constant(0.5)
    D = bip - half
    rows = [
        ("int_f_bipartite", int_f(bip, f)),
        ("int_f_constant_half", int_f(half, f)),
        ("cutnorm_bilinear_difference", cutnorm_bilinear_exact(D).value),
        ("cutnorm_symmetric_difference", cutnorm_symmetric(D).value),
    ]
    ctx.csv("toy-bipartite.csv", ["quantity", "value"], rows)
    ctx.graphon("bipartite", bip)
    ctx.graphon("constant_half", half)
    return rows


def _check_chessboard(p):
    _int(p, "kmax", 1, 64)
    _int(p, "depth", 0, 8)


def _run_chessboard(p, ctx):
    half = StepGraphon.constant(0.5)
    rows = []
    for k in range(1, p["kmax"] + 1):
        W = chessboard_family(k)
        rows.append((k, W.k, int_f(W, "H"), chessboard_int_h(k), weakstar_pseudometric(W, half, p["depth"])))
    ctx.csv("chessboard-family.csv", ["k", "cells", "int_H", "closed_form", "pseudometric"], rows)
    ctx.graphon("chessboard_3", chessboard_family(3))
    return rows


def _check_improvement(p):
    _int_list(p, "ns", 2, 4096)
    _int(p, "copies", 1, 256)
    _int(p, "depth", 0, 8)
    _functional(p)


def _run_improvement(p, ctx):
    f = _functional(p)

    def one(n):
        gs, bs = [], []
        for i in range(p["copies"]):
            G, side = permuted_bipartite(n, np.random.default_rng(ctx.seed_for(f"improvement/{n}", i)))
            gs.append(G)
            bs.append(side)
        return n, improvement_experiment(gs, bs, f, p["depth"])

    rows = []
    for n, r in ctx.map(one, p["ns"]):
        rows.append((n, r.int_f_hat, r.int_f_tilde, r.int_f_gap, r.epsilon, r.sign,
                     r.shifted_block, r.baseline, r.claim_gap, r.claim_holds))
        ctx.graphon(f"aggregate_n{n}", r.W_hat)
        ctx.graphon(f"shifted_aggregate_n{n}", r.W_tilde_hat)
    ctx.csv("improvement.csv", ["n", "int_f_hat", "int_f_tilde", "int_f_gap", "epsilon", "sign",
                                "shifted_block", "baseline", "claim_gap", "claim_holds"], rows)
    return rows


def _check_minimizer(p):
    _int(p, "n", 4, 4096)
    _int(p, "copies", 1, 256)
    _int(p, "depth", 0, 8)
    _int(p, "random_sets", 0, 64)
    _functional(p)


def _run_minimizer(p, ctx):
    """int_f of several limit candidates of one sequence of randomly ordered
    bipartite graphs; the candidate reached in cut-norm must be smallest."""
    f = _functional(p)
    n, D = p["n"], p["depth"]
    gs, sides = [], []
    for i in range(p["copies"]):
        G, side = permuted_bipartite(n, np.random.default_rng(ctx.seed_for("minimizer/graph", i)))
        gs.append(G)
        sides.append(side)
    bip = bipartite_chessboard()
    cands = [
        ("as_ordered", aggregate(gs, D)),
        ("sorted_by_side", aggregate([shift_left_version(G, s) for G, s in zip(gs, sides)], D)),
    ]
    for r in range(p["random_sets"]):
        rng = np.random.default_rng(ctx.seed_for("minimizer/sets", r))
        shifted = [shift_left_version(G, rng.random(n) < 0.5) for G in gs]
        cands.append((f"random_shift_{r}", aggregate(shifted, D)))
    rows = []
    for name, W in cands:
        rows.append((name, int_f(W, f), cutnorm_bilinear_exact(W - bip).value))
    ctx.csv("minimizer-evidence.csv", ["candidate", "int_f", "cutnorm_to_bipartite"], rows)
    best = min(rows, key=lambda r: r[1])
    if best[0] != "sorted_by_side":
        raise ExperimentFailure(f"candidate {best[0]!r} beats the cut-norm limit in int_f")
    return rows


def _check_regularity(p):
    _float(p, "eps", 0.0, 1.0, open_lo=True)
    _int(p, "restarts", 1, 10000)
    if not isinstance(p["graph"], str):
        raise ConfigError("param 'graph' must be a graph spec string")


def _run_regularity(p, ctx):
    G = _graph(p["graph"], ctx.seed_for("regularity/graph"))
    P, trace = weak_regularity_partition(G, p["eps"], seed=ctx.seed_for("regularity/search"), restarts=p["restarts"])
    rows = [(t.round, t.parts, t.index, t.violation, t.decrease, t.meets_quarter_eps2) for t in trace]
    ctx.csv("regularity-trace.csv", ["round", "parts", "index", "violation", "decrease", "meets_eps2_over_4"], rows)
    path = ctx.out / "partition.json"
    path.write_text(json.dumps({"assignment": P.to_list()}) + "\n")
    ctx.files.append(str(path))
    return rows


def _check_finite_index(p):
    _float(p, "eps", 0.5, 1.0)
    _int(p, "restarts", 1, 10000)
    _functional(p)
    if not isinstance(p["graph"], str):
        raise ConfigError("param 'graph' must be a graph spec string")


def _run_finite_index(p, ctx):
    G = _graph(p["graph"], ctx.seed_for("finite-index/graph"))
    r = finite_index_experiment(G, p["eps"], _functional(p), seed=ctx.seed_for("finite-index/search"),
                                restarts=p["restarts"])
    rows = [(c.M, c.index, c.regular, c.violation, c.exhaustive) for c in r.chain]
    ctx.csv("finite-index-chain.csv", ["M", "index", "regular", "violation", "exhaustive"], rows)
    ctx.csv("finite-index-stability.csv", ["M", "index", "gap", "regular", "violation"],
            [(s.M, s.index, s.gap, s.regular, s.violation) for s in r.stability])
    ctx.csv("finite-index-result.csv", ["eps", "X", "M"],
            [(r.epsilon, " ".join(map(str, r.X)), r.M if r.M is not None else "none")])
    return rows


def _check_noel(p):
    ells = _int_list(p, "ells", 1, 100)
    _int(p, "cells_per_part", 1, 200)
    _int(p, "samples", 1, 1024)
    _int(p, "depth", 0, 8)
    for ell in ells:
        if ell * p["cells_per_part"] > 4000:
            raise ConfigError(f"l = {ell} gives more than 4000 cells")


def _run_noel(p, ctx):
    h7 = binary_entropy(NOEL_VALUE)

    def one(ell):
        n = ell * p["cells_per_part"]
        seed = ctx.seed_for("noel", ell)
        W = noel_family(ell, n, seed)
        return (ell, n, int_f(W, "H"), h7 / ell**2, 1.0 / ell**2,
                noel_region_average(ell, n, seed, samples=p["samples"], depth=p["depth"]),
                mixing_entropy(ell, n, seed, samples=p["samples"]))

    rows = ctx.map(one, p["ells"])
    ctx.csv("noel.csv", ["ell", "n", "int_H", "exact", "bound", "region_average", "mixing_int_H"], rows)
    first = p["ells"][0]
    ctx.graphon(f"noel_l{first}", noel_family(first, first * p["cells_per_part"], ctx.seed_for("noel", first)))
    return rows


def _check_sampler(p):
    _int_list(p, "ns", 2, 4096)
    _int(p, "trials", 1, 100000)
    _int(p, "depth", 0, 8)


def _run_sampler(p, ctx):
    bip = bipartite_chessboard()
    P = Partition.trivial()

    def one(n):
        return event_frequency(bip, P, n, p["trials"], ctx.seed_for("sampler", n), p["depth"])

    rows = []
    for r in ctx.map(one, p["ns"]):
        rows.append((r.n, r.trials, r.frequency, r.tail, r.bound, r.frequency <= r.bound,
                     r.blocks_preserved, r.max_pseudometric))
    ctx.csv("sampler-concentration.csv", ["n", "trials", "frequency", "tail", "bound", "within_bound",
                                          "blocks_preserved", "max_pseudometric"], rows)
    return rows


SCENARIOS = {
    s.name: s
    for s in [
        Scenario("toy-bipartite", False, {"f": "H"}, _check_toy, _run_toy),
        Scenario("chessboard-family", False, {"kmax": 8, "depth": 3}, _check_chessboard, _run_chessboard),
        Scenario("improvement", True, {"ns": [64, 128, 256], "copies": 8, "depth": 4, "f": "H"},
                 _check_improvement, _run_improvement),
        Scenario("minimizer-evidence", True, {"n": 64, "copies": 8, "depth": 4, "random_sets": 4, "f": "H"},
                 _check_minimizer, _run_minimizer),
        Scenario("regularity", True, {"graph": "kab:4,4", "eps": 0.05, "restarts": 50},
                 _check_regularity, _run_regularity),
        Scenario("finite-index-set", True, {"graph": "kab:4,4", "eps": 0.5, "restarts": 50, "f": "neg_square"},
                 _check_finite_index, _run_finite_index),
        Scenario("noel", True, {"ells": [2, 5, 10], "cells_per_part": 20, "samples": 16, "depth": 4},
                 _check_noel, _run_noel),
        Scenario("sampler-concentration", True, {"ns": [100, 200, 400], "trials": 200, "depth": 3},
                 _check_sampler, _run_sampler),
    ]
}


def resolve(config: ExperimentConfig) -> tuple:
    """(scenario, full params, seed) after validation; raises ConfigError."""
    try:
        sc = SCENARIOS[config.scenario]
    except KeyError:
        raise ConfigError(f"unknown scenario {config.scenario!r}; known: {sorted(SCENARIOS)}") from None
    params = dict(config.params)
    seed = params.pop("seed", None)
    unknown = set(params) - set(sc.defaults)
    if unknown:
        raise ConfigError(f"unknown params for {sc.name}: {sorted(unknown)}")
    full = {**sc.defaults, **params}
    if sc.randomized:
        if seed is None:
            raise ConfigError(f"scenario {sc.name} is randomized and needs a seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    sc.check(full)
    return sc, full, seed


def run(config: ExperimentConfig, threads: int = 1) -> dict:
    sc, params, seed = resolve(config)
    out = Path(config.output_dir or Path("out") / sc.name)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(out, seed, threads)
    rows = sc.run(params, ctx)
    return {"scenario": sc.name, "seed": seed, "output_dir": str(out), "files": ctx.files, "rows": rows}
