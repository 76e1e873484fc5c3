"""Seeded multi-repetition experiments and their output files.

An experiment is described by one JSON document (see
:class:`ExperimentSpec`).  Every (solver, repetition) cell is seeded from
``(root_seed, solver label, repetition)`` alone, runs against its own
budgeted oracle and leaves a manifest under ``<out>/cells``.  Completed
manifests are reused on the next run, so an interrupted experiment resumes
where it stopped.
"""
from __future__ import annotations

import csv
import hashlib
import importlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import SaConfig, conditioned_random, sa_restarts, sa_solve, unconstrained_random
from .born_machine import TrainConfig
from .engine import BOOSTER, STANDALONE, GeoConfig, GeoRunResult, _best, run_booster, run_standalone
from .errors import ConfigError, InvalidArgument, ResumeError
from .metrics import TABLE_COLUMNS, metric_report, relative_enhancement
from .oracle import PortfolioOracle
from .portfolio import (
    RETURN_TARGET,
    RISK_AVERSION,
    PortfolioInstance,
    ReturnStats,
    compute_returns,
    generate_synthetic_instance,
    portfolio_point,
    read_orlib_port,
    read_price_csv,
    standard_frontier,
)

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
INSTANCE_FORMAT = "geo_opt.instance"
EXPERIMENT_KINDS = ("standalone", "booster", "frontier")
STANDALONE_ROSTER = ("random", "conditioned_random", "sa", "tn_geo")
BOOSTER_ROSTER = ("sa_strategy1", "sa_strategy2", "tn_geo_booster")


# ---------------------------------------------------------------- instances

def save_instance(instance, path, asset_ids=None):
    doc = {
        "format": INSTANCE_FORMAT,
        "version": 1,
        "asset_ids": list(asset_ids) if asset_ids is not None else None,
        "mean_returns": instance.stats.mean_returns.tolist(),
        "covariance": instance.stats.covariance.tolist(),
        "cardinality": instance.cardinality,
        "objective_mode": instance.objective_mode,
        "rho": instance.rho,
        "lam": instance.lam,
        "lower_bounds": instance.lower_bounds.tolist(),
        "upper_bounds": instance.upper_bounds.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_instance(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != INSTANCE_FORMAT:
        raise ConfigError(f"{path} is not an instance file")
    stats = ReturnStats(np.array(doc["mean_returns"]), np.array(doc["covariance"]))
    return PortfolioInstance(stats, doc["cardinality"], doc["objective_mode"], doc["rho"], doc["lam"],
                             np.array(doc["lower_bounds"]), np.array(doc["upper_bounds"]))


def instance_from_source(src):
    """Build a :class:`PortfolioInstance` from the ``instance`` block of a spec."""
    src = dict(src)
    kind = src.pop("source", "synthetic")
    bounds = src.pop("bounds", None)
    lo, hi = (None, None) if bounds is None else bounds
    if kind == "synthetic":
        inst = generate_synthetic_instance(src["n_assets"], src["kappa"], src.get("seed", 0),
                                           src.get("n_periods", 500), src.get("rho"))
        if bounds is None:
            return inst
        return PortfolioInstance(inst.stats, inst.cardinality, inst.objective_mode, inst.rho, inst.lam, lo, hi)
    if kind == "instance":
        return load_instance(src["path"])
    if kind == "csv":
        stats = compute_returns(read_price_csv(src["path"]))
    elif kind == "orlib":
        stats = read_orlib_port(src["path"])
    else:
        raise ConfigError(f"unknown instance source {kind!r}; use synthetic, csv, orlib or instance")
    kappa = src.get("kappa") or max(1, stats.n_assets // 2)
    rho = src.get("rho")
    if rho is None:
        rho = float(stats.mean_returns.mean())
    return PortfolioInstance(stats, kappa, src.get("objective_mode", RETURN_TARGET), rho,
                             src.get("lam", 0.5), lo, hi)


# ---------------------------------------------------------------- seeding

def cell_seed(root_seed, solver, repetition):
    """64-bit seed that depends only on the root seed, solver label and repetition."""
    digest = hashlib.sha256(f"{int(root_seed)}|{solver}|{int(repetition)}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def bootstrap_median_ci(samples, n_resamples=10_000, confidence=0.95, seed=0):
    """Median of ``samples`` with a percentile-bootstrap interval."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise InvalidArgument("bootstrap needs at least one sample")
    if not 0 < confidence < 1:
        raise InvalidArgument("confidence must lie in (0, 1)")
    med = float(np.median(x))
    rng = np.random.default_rng(seed)
    meds = np.empty(n_resamples)
    chunk = 1000
    for start in range(0, n_resamples, chunk):
        m = min(chunk, n_resamples - start)
        meds[start:start + m] = np.median(x[rng.integers(0, x.size, size=(m, x.size))], axis=1)
    tail = (1 - confidence) / 2 * 100
    lo, hi = np.percentile(meds, [tail, 100 - tail])
    return med, float(min(lo, med)), float(max(hi, med))


# ---------------------------------------------------------------- solvers

def _geo_config(params, mode, budget, seed):
    p = dict(params)
    if isinstance(p.get("train_cfg"), dict):
        p["train_cfg"] = TrainConfig(**p["train_cfg"])
    p.update(mode=mode, eval_budget=budget, rng_seed=seed)
    try:
        return GeoConfig(**p)
    except TypeError as exc:
        raise ConfigError(f"bad tn_geo parameters: {exc}") from None


def _sa_config(params, n_steps, seed):
    p = {k: v for k, v in params.items() if k in ("t_max", "t_min", "schedule")}
    return SaConfig(n_steps=n_steps, rng_seed=seed, **p)


def _solve_tn_geo(oracle, instance, budget, seed, params):
    return run_standalone(oracle, instance, _geo_config(params, STANDALONE, budget, seed))


def _solve_sa(oracle, instance, budget, seed, params):
    restarts = params.get("restarts", 1)
    return sa_restarts(oracle, instance, budget, restarts, _sa_config(params, 0, 0), seed)


def _solve_cr(oracle, instance, budget, seed, params):
    return conditioned_random(oracle, instance, budget, seed, dedup=params.get("dedup", False))


def _solve_random(oracle, instance, budget, seed, params):
    return unconstrained_random(oracle, instance, budget, seed)


def _prefix_chain(oracle, instance, budget, params, prefix_seed):
    calls = int(round(params.get("prefix_fraction", 0.5) * budget))
    calls = min(max(calls, 1), budget)
    return sa_solve(oracle, instance, _sa_config(params, calls - 1, prefix_seed)), calls


def _merge(runs, info):
    evals = [e for r in runs for e in r.all_evaluated]
    history, best, used = [], math.inf, 0
    for r in runs:
        for _, n_used, b in r.history:
            best = min(best, b)
            history.append((0, used + n_used, best))
        used += r.info.get("evaluations", len(r.all_evaluated))
    return GeoRunResult(_best(evals), history, evals, sum(r.outstanding_count for r in runs),
                        [w for r in runs for w in r.warnings], info)


def _solve_sa_strategy2(oracle, instance, budget, seed, params, prefix_seed):
    """The shared SA prefix, then extra SA restarts with the remaining calls."""
    first, calls = _prefix_chain(oracle, instance, budget, params, prefix_seed)
    runs = [first]
    left = budget - calls
    if left:
        runs.append(sa_restarts(oracle, instance, left, min(params.get("restarts", 1), left),
                                _sa_config(params, 0, 0), seed))
    return _merge(runs, {"solver": "sa_strategy2", "prefix_calls": calls})


def _solve_tn_geo_booster(oracle, instance, budget, seed, params, prefix_seed):
    """The shared SA prefix seeds the generator, which spends the remaining calls.

    If the generator stops proposing new selections before the budget is
    spent, the rest is drawn by conditioned random search so every strategy
    ends on the same call count; the number of such padding calls is kept in
    ``info["padding"]``.
    """
    first, calls = _prefix_chain(oracle, instance, budget, params, prefix_seed)
    left = budget - calls
    geo_params = {k: v for k, v in params.items() if k not in ("prefix_fraction", "t_max", "t_min",
                                                                 "schedule", "restarts")}
    geo_params.setdefault("max_iterations", None)
    cfg = _geo_config(geo_params, BOOSTER, left, seed)
    boost = run_booster(oracle, first.all_evaluated, cfg) if left else None
    runs = [first]
    padding = 0
    if boost is not None:
        boost.all_evaluated = [e for e in boost.all_evaluated if e.origin == "generator"]
        boost.history = [(it, n, b) for it, n, b in boost.history if n > 0] or boost.history[-1:]
        runs.append(boost)
        padding = left - boost.info["evaluations"]
        if padding:
            pad = conditioned_random(oracle, instance, padding, seed ^ 0x5A5A)
            for e in pad.all_evaluated:
                e.origin = "padding"
            pad.info["evaluations"] = padding
            runs.append(pad)
    merged = _merge(runs, {"solver": "tn_geo_booster", "prefix_calls": calls, "padding": padding})
    if boost is not None:
        merged.outstanding_count = boost.outstanding_count
        merged.info["seed_best"] = boost.info["seed_best"]
    return merged


_PREFIXED = {"sa_strategy2", "tn_geo_booster"}

SOLVERS = {
    "tn_geo": _solve_tn_geo,
    "sa": _solve_sa,
    "sa_strategy1": _solve_sa,
    "conditioned_random": _solve_cr,
    "random": _solve_random,
    "sa_strategy2": _solve_sa_strategy2,
    "tn_geo_booster": _solve_tn_geo_booster,
}


def register_solver(name, fn):
    """Add an external solver ``fn(oracle, instance, budget, seed, params) -> GeoRunResult``."""
    if not callable(fn):
        raise InvalidArgument("solver must be callable")
    SOLVERS[name] = fn


def resolve_solver(name):
    if name in SOLVERS:
        return SOLVERS[name]
    if ":" in name:
        mod, _, attr = name.partition(":")
        try:
            return getattr(importlib.import_module(mod), attr)
        except (ImportError, AttributeError) as exc:
            raise ConfigError(f"cannot import external solver {name!r}: {exc}") from None
    raise ConfigError(f"unknown solver {name!r}; registered: {', '.join(sorted(SOLVERS))}")


# ---------------------------------------------------------------- spec

@dataclass
class SolverEntry:
    name: str
    label: str
    params: dict = field(default_factory=dict)


@dataclass
class ExperimentSpec:
    kind: str
    instance: dict
    solvers: list
    repetitions: int = 20
    budget: int = 500
    root_seed: int = 0
    lambdas: list = None
    frontier_points: int = 2000
    bootstrap_resamples: int = 10_000
    confidence: float = 0.95
    trace_points: int = 20
    budget_parity: bool = True
    name: str = "experiment"

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.get("kind", "standalone")
        roster = d.get("solvers")
        if roster is None:
            roster = list(BOOSTER_ROSTER if kind == "booster" else
                          ("tn_geo",) if kind == "frontier" else STANDALONE_ROSTER)
        entries = []
        for item in roster:
            if isinstance(item, str):
                item = {"name": item}
            entries.append(SolverEntry(item["name"], item.get("label", item["name"]), dict(item.get("params", {}))))
        d["solvers"] = entries
        d["kind"] = kind
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown spec keys: {', '.join(sorted(extra))}")
        if "instance" not in d:
            raise ConfigError("spec needs an 'instance' block")
        return cls(**d).validate()

    @classmethod
    def load(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def validate(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if not self.solvers:
            raise ConfigError("solver roster is empty")
        labels = [s.label for s in self.solvers]
        if len(set(labels)) != len(labels):
            raise ConfigError("solver labels must be unique")
        for s in self.solvers:
            resolve_solver(s.name)
        if self.kind == "frontier" and self.lambdas is None:
            self.lambdas = np.linspace(0.0, 1.0, 51).tolist()
        return self

    def to_dict(self):
        return {
            "name": self.name, "kind": self.kind, "instance": self.instance,
            "solvers": [{"name": s.name, "label": s.label, "params": s.params} for s in self.solvers],
            "repetitions": self.repetitions, "budget": self.budget, "root_seed": self.root_seed,
            "lambdas": self.lambdas, "frontier_points": self.frontier_points,
            "bootstrap_resamples": self.bootstrap_resamples, "confidence": self.confidence,
            "trace_points": self.trace_points, "budget_parity": self.budget_parity,
        }


# ---------------------------------------------------------------- cells

def _dumps(obj):
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _cell_key(spec, entry, rep):
    blob = json.dumps({"instance": spec.instance, "solver": entry.name, "params": entry.params,
                       "budget": spec.budget, "rep": rep, "root": spec.root_seed, "kind": spec.kind,
                       "lambdas": spec.lambdas}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _finite(x):
    return x if x is not None and math.isfinite(x) else None


def _compact(result):
    """Manifest payload: per-evaluation bits, cost and origin; weights of the best only."""
    return {
        "best": result.best.to_dict() if result.best is not None else None,
        "history": [[int(a), int(b), _finite(c)] for a, b, c in result.history],
        "evaluated": [[e.bits, _finite(e.cost), e.origin] for e in result.all_evaluated],
        "outstanding_count": result.outstanding_count,
        "warnings": list(result.warnings),
        "info": _jsonable(result.info),
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _finite(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


_ORACLE_CACHES = {}


def _oracle(instance, budget):
    cache = _ORACLE_CACHES.setdefault(instance.fingerprint(), {})
    return PortfolioOracle(instance, budget, cache)


def _run_one(fn, entry, instance, budget, seed, prefix_seed):
    oracle = _oracle(instance, budget)
    if entry.name in _PREFIXED:
        result = fn(oracle, instance, budget, seed, entry.params, prefix_seed)
    else:
        result = fn(oracle, instance, budget, seed, entry.params)
    return result, oracle.calls


def run_cell(spec_dict, label, rep, cell_dir):
    """Run one (solver, repetition) cell and write its manifest; returns the manifest."""
    spec = ExperimentSpec.from_dict(spec_dict)
    entry = next(s for s in spec.solvers if s.label == label)
    fn = resolve_solver(entry.name)
    instance = instance_from_source(spec.instance)
    seed = cell_seed(spec.root_seed, entry.label, rep)
    prefix_seed = cell_seed(spec.root_seed, "sa-prefix", rep)
    t0 = time.perf_counter()
    if spec.kind == "frontier":
        points, calls, per_lambda = [], [], []
        for i, lam in enumerate(spec.lambdas):
            inst = instance.with_mode(RISK_AVERSION, lam=float(lam))
            res, n = _run_one(fn, entry, inst, spec.budget, cell_seed(seed, "lambda", i), prefix_seed)
            calls.append(n)
            if res.best is None:
                continue
            sd, ret = portfolio_point(inst, res.best.weights)
            points.append([sd * sd, ret])
            per_lambda.append({"lambda": float(lam), "cost": _finite(res.best_cost), "bits": res.best.bits,
                               "variance": sd * sd, "return": ret})
        payload = {"points": points, "per_lambda": per_lambda}
        oracle_calls = calls
    else:
        res, oracle_calls = _run_one(fn, entry, instance, spec.budget, seed, prefix_seed)
        payload = _compact(res)
    manifest = {
        "version": MANIFEST_VERSION,
        "cell_key": _cell_key(spec, entry, rep),
        "solver": entry.name,
        "label": entry.label,
        "repetition": rep,
        "seed": seed,
        "oracle_calls": oracle_calls,
        "result": payload,
    }
    path = Path(cell_dir) / f"{entry.label}__{rep:04d}.json"
    tmp = path.with_suffix(".tmp")
    tmp.write_text(_dumps(manifest))
    os.replace(tmp, path)
    (Path(cell_dir) / f"{entry.label}__{rep:04d}.time").write_text(f"{time.perf_counter() - t0:.6f}\n")
    return manifest


def _load_manifest(path, spec, entry, rep):
    cell = f"{entry.label}/{rep}"
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ResumeError(cell, f"unreadable manifest {path.name}: {exc}") from None
    for key in ("version", "cell_key", "oracle_calls", "result"):
        if key not in doc:
            raise ResumeError(cell, f"manifest {path.name} lacks {key!r}")
    if doc["version"] != MANIFEST_VERSION:
        raise ResumeError(cell, f"manifest version {doc['version']} is not {MANIFEST_VERSION}")
    if doc["cell_key"] != _cell_key(spec, entry, rep):
        return None
    return doc


# ---------------------------------------------------------------- experiment

def _best_trace(history, budget):
    """best-so-far after each of 1..budget evaluations (NaN before the first finite cost)."""
    out = np.full(budget, np.nan)
    for _, used, best in history:
        if best is not None and 1 <= used <= budget:
            out[used - 1] = best if np.isnan(out[used - 1]) else min(out[used - 1], best)
    last = np.nan
    for i in range(budget):
        if np.isnan(out[i]):
            out[i] = last
        else:
            last = out[i] if np.isnan(last) else min(last, out[i])
            out[i] = last
    return out


def run_experiment(spec, out_dir, jobs=1):
    """Run (or resume) every cell of ``spec`` and write the report files.

    Returns the summary dictionary that is also written to ``summary.json``.
    """
    if not isinstance(spec, ExperimentSpec):
        spec = ExperimentSpec.from_dict(spec)
    out = Path(out_dir)
    cell_dir = out / "cells"
    cell_dir.mkdir(parents=True, exist_ok=True)
    spec_dict = spec.to_dict()
    pending, manifests = [], {}
    for entry in spec.solvers:
        for rep in range(spec.repetitions):
            path = cell_dir / f"{entry.label}__{rep:04d}.json"
            doc = _load_manifest(path, spec, entry, rep) if path.exists() else None
            if doc is None:
                pending.append((entry.label, rep))
            else:
                manifests[(entry.label, rep)] = doc
    log.info("%d cells to run, %d reused", len(pending), len(manifests))
    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {pool.submit(run_cell, spec_dict, lab, rep, str(cell_dir)): (lab, rep) for lab, rep in pending}
            for fut, key in futs.items():
                manifests[key] = fut.result()
    else:
        for lab, rep in pending:
            log.info("cell %s/%d", lab, rep)
            manifests[(lab, rep)] = run_cell(spec_dict, lab, rep, str(cell_dir))
    summary = summarize(spec, manifests, out)
    emit_report(spec, manifests, summary, out)
    return summary


def _parity(spec, manifests):
    counts = {}
    for (lab, rep), doc in manifests.items():
        c = doc["oracle_calls"]
        counts.setdefault(lab, []).append(sum(c) if isinstance(c, list) else c)
    flat = {c for v in counts.values() for c in v}
    return counts, len(flat) <= 1


def summarize(spec, manifests, out=None):
    labels = [s.label for s in spec.solvers]
    reps = range(spec.repetitions)
    boot = dict(n_resamples=spec.bootstrap_resamples, confidence=spec.confidence)
    summary = {"spec": spec.to_dict(), "kind": spec.kind, "solvers": {}, "notes": []}
    inst = instance_from_source(spec.instance)
    summary["instance_fingerprint"] = inst.fingerprint()
    counts, equal = _parity(spec, manifests)
    summary["oracle_calls"] = counts
    summary["budget_parity"] = equal
    if spec.budget_parity and not equal:
        summary["notes"].append("oracle call counts differ between cells")
    if spec.kind == "standalone":
        summary["notes"].append("the Gaussian-process baseline of the original comparison is not included")
    if spec.kind == "frontier":
        std = standard_frontier(inst.stats, (inst.lower_bounds, inst.upper_bounds),
                                spec.frontier_points, risk="variance").efficient_part()
        summary["standard_frontier_points"] = len(std)
        for lab in labels:
            reports = []
            for rep in reps:
                pts = manifests[(lab, rep)]["result"]["points"]
                reports.append(metric_report(std, np.array(pts)).to_dict() if len(pts) else None)
            valid = [r for r in reports if r is not None]
            mean_row = {c: float(np.mean([r[k] for r in valid])) if valid else None
                        for c, k in zip(TABLE_COLUMNS, ("pde_mean", "pde_median", "pde_min", "pde_max",
                                                        "meucd", "vre", "mre"))}
            for r in valid:
                r.pop("pde_values", None)
            summary["solvers"][lab] = {"reports": reports, "mean_row": mean_row}
        return summary
    grid = np.unique(np.linspace(1, spec.budget, min(spec.trace_points, spec.budget)).round().astype(int))
    for lab in labels:
        docs = [manifests[(lab, rep)] for rep in reps]
        bests = [d["result"]["best"]["cost"] if d["result"]["best"] else None for d in docs]
        finite = [b for b in bests if b is not None]
        entry = {"best_costs": bests}
        if finite:
            med, lo, hi = bootstrap_median_ci(finite, seed=cell_seed(spec.root_seed, lab, -1), **boot)
            entry["median"], entry["ci"] = med, [lo, hi]
        traces = np.array([_best_trace(d["result"]["history"], spec.budget) for d in docs])
        band = []
        for g in grid:
            col = traces[:, g - 1]
            col = col[~np.isnan(col)]
            if col.size:
                m, lo, hi = bootstrap_median_ci(col, seed=cell_seed(spec.root_seed, lab, int(g)), **boot)
                band.append([int(g), m, lo, hi])
        entry["trace_band"] = band
        entry["outstanding_counts"] = [d["result"]["outstanding_count"] for d in docs]
        summary["solvers"][lab] = entry
    if spec.kind == "booster":
        geo = [s.label for s in spec.solvers if s.name == "tn_geo_booster"]
        classical = [s.label for s in spec.solvers if s.name != "tn_geo_booster"]
        enh = {}
        for g in geo:
            for c in classical:
                vals = []
                for rep in reps:
                    bc = summary["solvers"][c]["best_costs"][rep]
                    bg = summary["solvers"][g]["best_costs"][rep]
                    if bc not in (None, 0) and bg is not None:
                        vals.append(relative_enhancement(bc, bg))
                if vals:
                    med, lo, hi = bootstrap_median_ci(vals, seed=cell_seed(spec.root_seed, f"{g}-{c}", -1), **boot)
                    enh[f"{g}_vs_{c}"] = {"values": vals, "median": med, "ci": [lo, hi]}
        summary["relative_enhancement"] = enh
    return summary


def _fmt(x):
    return "" if x is None else repr(float(x))


def emit_report(spec, manifests, summary, out_dir):
    """Write summary.json, traces.csv, metrics.csv and histogram.csv."""
    if not spec.solvers:
        raise InvalidArgument("empty solver roster")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = [s.label for s in spec.solvers]
    (out / "summary.json").write_text(_dumps(_jsonable(summary)))
    with open(out / "traces.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["solver", "repetition", "evals_used", "best_cost"])
        if spec.kind != "frontier":
            for lab in labels:
                for rep in range(spec.repetitions):
                    for _, used, best in manifests[(lab, rep)]["result"]["history"]:
                        w.writerow([lab, rep, used, _fmt(best)])
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["solver", "repetition", *TABLE_COLUMNS])
        if spec.kind == "frontier":
            for lab in labels:
                for rep, r in enumerate(summary["solvers"][lab]["reports"]):
                    if r is not None:
                        w.writerow([lab, rep] + [_fmt(r[k]) for k in ("pde_mean", "pde_median", "pde_min",
                                                                     "pde_max", "meucd", "vre", "mre")])
                row = summary["solvers"][lab]["mean_row"]
                w.writerow([lab, "mean"] + [_fmt(row[c]) for c in TABLE_COLUMNS])
    counts = {}
    if spec.kind != "frontier":
        for lab in labels:
            for rep in range(spec.repetitions):
                for _, cost, origin in manifests[(lab, rep)]["result"]["evaluated"]:
                    if cost is not None:
                        counts[(cost, origin)] = counts.get((cost, origin), 0) + 1
    with open(out / "histogram.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cost", "origin", "count"])
        for (cost, origin), n in sorted(counts.items()):
            w.writerow([_fmt(cost), origin, n])
    times = {}
    for lab in labels:
        for rep in range(spec.repetitions):
            p = out / "cells" / f"{lab}__{rep:04d}.time"
            if p.exists():
                times[f"{lab}/{rep}"] = float(p.read_text())
    # wall time is informational only and kept apart from the deterministic outputs
    (out / "timing.json").write_text(json.dumps(times, indent=1, sort_keys=True) + "\n")
    write_run_manifest(spec, out)


def write_run_manifest(spec, out_dir):
    from . import __version__, kernels

    doc = {
        "package": "geo_opt",
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "numpy": np.__version__,
        "spec": spec.to_dict(),
        "outputs": ["summary.json", "traces.csv", "metrics.csv", "histogram.csv", "timing.json"],
    }
    (Path(out_dir) / "run_manifest.json").write_text(_dumps(doc))
