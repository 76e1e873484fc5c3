"""Command-line entry point: ``geo-opt <subcommand>``.

Global flags (``--config``, ``--seed``, ``--out``, ``--jobs``) may appear
before or after the subcommand.  ``GEO_OPT_LOG`` sets the log level
(a name such as ``DEBUG`` or a number).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, GeoError
from .harness import (
    ExperimentSpec,
    _compact,
    _oracle,
    cell_seed,
    instance_from_source,
    load_instance,
    resolve_solver,
    run_experiment,
    save_instance,
)
from .metrics import TABLE_COLUMNS, meucd_vre_mre, metric_report, wilcoxon_signed_rank
from .portfolio import FrontierSet, compute_returns, read_orlib_port, read_price_csv, standard_frontier

log = logging.getLogger("geo_opt")


def _setup_logging():
    raw = os.environ.get("GEO_OPT_LOG", "WARNING").strip()
    level = int(raw) if raw.isdigit() else logging.getLevelName(raw.upper())
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load_config(args):
    if not getattr(args, "config", None):
        return {}
    try:
        return json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None


def _out_dir(args):
    out = Path(getattr(args, "out", None) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_frontier(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip().lower() for h in header[:2]] != ["risk", "return"]:
            raise ConfigError(f"{path}: expected header 'risk,return'")
        for row in reader:
            if row:
                rows.append([float(row[0]), float(row[1])])
    return FrontierSet(np.array(rows))


def _write_frontier(frontier, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["risk", "return"])
        for x, y in frontier.points:
            w.writerow([repr(float(x)), repr(float(y))])


def cmd_ingest(args):
    cfg = _load_config(args)
    fmt = args.format or cfg.get("format") or ("orlib" if args.source.endswith(".txt") else "csv")
    if fmt == "csv":
        series = read_price_csv(args.source)
        stats, ids = compute_returns(series), series.asset_ids
    elif fmt == "orlib":
        stats = read_orlib_port(args.source)
        ids = None
    else:
        raise ConfigError(f"unknown input format {fmt!r}")
    kappa = args.kappa or cfg.get("kappa") or max(1, stats.n_assets // 2)
    src = {"source": "orlib" if fmt == "orlib" else "csv", "path": args.source, "kappa": kappa}
    if args.rho is not None:
        src["rho"] = args.rho
    if args.bounds:
        src["bounds"] = args.bounds
    inst = instance_from_source(src)
    path = _out_dir(args) / args.name
    save_instance(inst, path, ids)
    print(f"{path}: {stats.n_assets} assets, kappa={inst.cardinality}, rho={inst.rho:.6g}")


def cmd_frontier(args):
    inst = load_instance(args.instance)
    fr = standard_frontier(inst.stats, (inst.lower_bounds, inst.upper_bounds), args.points, args.risk)
    if args.efficient:
        fr = fr.efficient_part()
    path = _out_dir(args) / args.name
    _write_frontier(fr, path)
    print(f"{path}: {len(fr)} points")


def cmd_run(args):
    cfg = _load_config(args)
    inst = load_instance(args.instance) if args.instance else instance_from_source(cfg["instance"])
    name = args.solver or cfg.get("solver", "tn_geo")
    budget = args.budget or cfg.get("budget", 500)
    params = dict(cfg.get("params", {}))
    if args.params:
        params.update(json.loads(args.params))
    fn = resolve_solver(name)
    seed = cell_seed(args.seed or 0, name, 0)
    oracle = _oracle(inst, budget)
    if name in ("sa_strategy2", "tn_geo_booster"):
        result = fn(oracle, inst, budget, seed, params, cell_seed(args.seed or 0, "sa-prefix", 0))
    else:
        result = fn(oracle, inst, budget, seed, params)
    out = _out_dir(args)
    doc = {"solver": name, "budget": budget, "seed": seed, "oracle_calls": oracle.calls, "result": _compact(result)}
    (out / "result.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"best cost {result.best_cost!r} after {oracle.calls} calls; bits {result.best.bits if result.best else '-'}")


def cmd_metrics(args):
    out = _out_dir(args)
    if args.mode == "frontier":
        std, heur = _read_frontier(args.standard), _read_frontier(args.heuristic)
        rep = metric_report(std, heur)
        with open(out / "metrics.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(TABLE_COLUMNS))
            w.writerow([repr(v) for v in rep.row()])
        print(" ".join(f"{c}={v:.6g}" for c, v in zip(TABLE_COLUMNS, rep.row())))
        if args.debug:
            print(f"MEUCD without squares: {meucd_vre_mre(std, heur, debug=True)[3]:.6g}")
    else:
        doc = json.loads(Path(args.pairs).read_text())
        res = wilcoxon_signed_rank(doc["a"], doc["b"], args.alpha, args.method)
        (out / "wilcoxon.json").write_text(json.dumps(res.to_dict(), indent=1) + "\n")
        print(f"wins={res.wins} losses={res.losses} ties={res.ties} W={res.statistic} "
              f"p={res.p_value:.4g} {res.decision} ({res.method})")


def cmd_compare(args):
    cfg = _load_config(args)
    if not cfg:
        raise ConfigError("compare needs --config <experiment.json>")
    if args.seed is not None:
        cfg["root_seed"] = args.seed
    spec = ExperimentSpec.from_dict(cfg)
    summary = run_experiment(spec, _out_dir(args), jobs=args.jobs or 1)
    for lab, entry in summary["solvers"].items():
        if "median" in entry:
            lo, hi = entry["ci"]
            print(f"{lab:>20s}  median {entry['median']:.6g}  [{lo:.6g}, {hi:.6g}]")
        elif "mean_row" in entry:
            print(f"{lab:>20s}  " + " ".join(f"{c}={v:.4g}" for c, v in entry["mean_row"].items() if v is not None))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON configuration file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="root seed (u64)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes")

    p = argparse.ArgumentParser(prog="geo-opt", parents=[common],
                                description="Generator-enhanced portfolio optimization experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="convert prices or an OR-Library file to an instance")
    s.add_argument("source")
    s.add_argument("--format", choices=("csv", "orlib"))
    s.add_argument("--kappa", type=int)
    s.add_argument("--rho", type=float)
    s.add_argument("--bounds", type=float, nargs=2, metavar=("LOWER", "UPPER"))
    s.add_argument("--name", default="instance.json")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("frontier", parents=[common], help="standard efficient frontier of an instance")
    s.add_argument("instance")
    s.add_argument("--points", type=int, default=100)
    s.add_argument("--risk", choices=("std", "variance"), default="std")
    s.add_argument("--efficient", action="store_true", help="keep only the efficient branch")
    s.add_argument("--name", default="frontier.csv")
    s.set_defaults(func=cmd_frontier)

    s = sub.add_parser("run", parents=[common], help="one solver run on one instance")
    s.add_argument("instance", nargs="?")
    s.add_argument("--solver")
    s.add_argument("--budget", type=int)
    s.add_argument("--params", help="solver parameters as a JSON object")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("metrics", parents=[common], help="frontier metrics or a Wilcoxon comparison")
    msub = s.add_subparsers(dest="mode", required=True)
    m = msub.add_parser("frontier", parents=[common])
    m.add_argument("standard")
    m.add_argument("heuristic")
    m.add_argument("--debug", action="store_true")
    m.set_defaults(func=cmd_metrics)
    m = msub.add_parser("wilcoxon", parents=[common])
    m.add_argument("pairs", help='JSON file {"a": [...], "b": [...]}')
    m.add_argument("--alpha", type=float, default=0.05)
    m.add_argument("--method", choices=("auto", "exact", "asymptotic"), default="auto")
    m.set_defaults(func=cmd_metrics)

    s = sub.add_parser("compare", parents=[common], help="run an experiment spec")
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    for name in ("config", "seed", "out", "jobs"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        args.func(args)
    except GeoError as exc:
        print(f"geo-opt: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"geo-opt: I/O error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
