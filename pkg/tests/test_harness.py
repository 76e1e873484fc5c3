import csv
import json

import numpy as np
import pytest

from geo_opt.engine import GeoRunResult
from geo_opt.errors import ConfigError, ResumeError
from geo_opt.harness import (
    ExperimentSpec,
    bootstrap_median_ci,
    cell_seed,
    instance_from_source,
    load_instance,
    register_solver,
    resolve_solver,
    run_experiment,
    save_instance,
)
from geo_opt.oracle import PortfolioOracle

LIGHT = {"max_bond_dim": 3, "n_sweeps": 1, "grad_steps_per_bond": 2}
INSTANCE = {"source": "synthetic", "n_assets": 8, "kappa": 4, "seed": 2}


def spec_dict(**kw):
    d = {
        "kind": "standalone",
        "instance": INSTANCE,
        "solvers": ["random", "conditioned_random", {"name": "sa", "params": {"restarts": 2}},
                    {"name": "tn_geo", "params": {"n_seed": 40, "n_train": 500, "n_mps": 200, "train_cfg": LIGHT}}],
        "repetitions": 3,
        "budget": 15,
        "root_seed": 11,
        "bootstrap_resamples": 500,
    }
    d.update(kw)
    return d


def test_cell_seed_stable_and_distinct():
    assert cell_seed(1, "sa", 0) == cell_seed(1, "sa", 0)
    seeds = {cell_seed(r, s, k) for r in (0, 1) for s in ("sa", "tn_geo") for k in range(5)}
    assert len(seeds) == 20
    assert 0 <= cell_seed(2**64 - 1, "x", 3) < 2**64


def test_bootstrap_median_ci():
    x = np.arange(1.0, 22.0)
    med, lo, hi = bootstrap_median_ci(x, 2000, seed=1)
    assert med == 11.0 and lo <= med <= hi
    assert bootstrap_median_ci(x, 2000, seed=1) == (med, lo, hi)
    assert bootstrap_median_ci([3.0] * 5, 100) == (3.0, 3.0, 3.0)


def test_instance_roundtrip(tmp_path):
    inst = instance_from_source(INSTANCE)
    save_instance(inst, tmp_path / "i.json", [f"A{i}" for i in range(8)])
    back = load_instance(tmp_path / "i.json")
    assert back.fingerprint() == inst.fingerprint()
    assert instance_from_source({"source": "instance", "path": str(tmp_path / "i.json")}).fingerprint() == \
        inst.fingerprint()
    with pytest.raises(ConfigError):
        instance_from_source({"source": "nowhere"})


def test_spec_validation():
    with pytest.raises(ConfigError):
        ExperimentSpec.from_dict(spec_dict(bogus=1))
    with pytest.raises(ConfigError):
        ExperimentSpec.from_dict(spec_dict(solvers=["no_such_solver"]))
    with pytest.raises(ConfigError):
        ExperimentSpec.from_dict(spec_dict(solvers=["sa", "sa"]))
    with pytest.raises(ConfigError):
        ExperimentSpec.from_dict(spec_dict(kind="other"))
    spec = ExperimentSpec.from_dict({"kind": "booster", "instance": INSTANCE})
    assert [s.name for s in spec.solvers] == ["sa_strategy1", "sa_strategy2", "tn_geo_booster"]


@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp")
    summary = run_experiment(ExperimentSpec.from_dict(spec_dict()), out)
    return out, summary


def test_outputs_written(experiment):
    out, summary = experiment
    for name in ("summary.json", "traces.csv", "metrics.csv", "histogram.csv", "run_manifest.json", "timing.json"):
        assert (out / name).exists()
    assert summary["budget_parity"]
    assert all(c == 15 for v in summary["oracle_calls"].values() for c in v)
    with open(out / "traces.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert set(rows[0]) == {"solver", "repetition", "evals_used", "best_cost"}
    for lab, entry in summary["solvers"].items():
        lo, hi = entry["ci"]
        assert lo <= entry["median"] <= hi


def test_histogram_matches_manifests(experiment):
    out, _ = experiment
    total = 0
    for p in (out / "cells").glob("*.json"):
        total += sum(1 for _, cost, _ in json.loads(p.read_text())["result"]["evaluated"] if cost is not None)
    with open(out / "histogram.csv") as fh:
        assert sum(int(r["count"]) for r in csv.DictReader(fh)) == total


def test_rerun_is_byte_identical(experiment, tmp_path):
    out, _ = experiment
    run_experiment(ExperimentSpec.from_dict(spec_dict()), tmp_path)
    for name in ("summary.json", "traces.csv", "metrics.csv", "histogram.csv", "run_manifest.json"):
        assert (out / name).read_bytes() == (tmp_path / name).read_bytes()


def test_resume_reuses_cells(experiment):
    out, _ = experiment
    cell = out / "cells" / "sa__0001.json"
    stamp = cell.stat().st_mtime_ns
    before = (out / "summary.json").read_bytes()
    run_experiment(ExperimentSpec.from_dict(spec_dict()), out)
    assert cell.stat().st_mtime_ns == stamp
    assert (out / "summary.json").read_bytes() == before


def test_resume_reruns_changed_cells(tmp_path):
    run_experiment(ExperimentSpec.from_dict(spec_dict(solvers=["random"], repetitions=1)), tmp_path)
    cell = tmp_path / "cells" / "random__0000.json"
    old = json.loads(cell.read_text())["cell_key"]
    run_experiment(ExperimentSpec.from_dict(spec_dict(solvers=["random"], repetitions=1, budget=9)), tmp_path)
    assert json.loads(cell.read_text())["cell_key"] != old


def test_corrupt_manifest_raises(tmp_path):
    run_experiment(ExperimentSpec.from_dict(spec_dict(solvers=["random"], repetitions=1)), tmp_path)
    (tmp_path / "cells" / "random__0000.json").write_text("{not json")
    with pytest.raises(ResumeError):
        run_experiment(ExperimentSpec.from_dict(spec_dict(solvers=["random"], repetitions=1)), tmp_path)


def first_k(oracle, instance, budget, seed, params):
    evals = []
    for i in range(budget):
        key = "".join("1" if (j + i) % instance.n_assets < instance.cardinality else "0"
                      for j in range(instance.n_assets))
        evals.append(oracle(key))
    best = min(evals, key=lambda e: e.cost)
    return GeoRunResult(best, [(0, budget, best.cost)], evals)


def test_external_solver_hook(tmp_path):
    assert resolve_solver("test_harness:first_k") is first_k
    with pytest.raises(ConfigError):
        resolve_solver("no.such.module:fn")
    register_solver("first_k", first_k)
    summary = run_experiment(ExperimentSpec.from_dict(spec_dict(solvers=["first_k"], repetitions=1)), tmp_path)
    assert summary["oracle_calls"]["first_k"] == [15]


def test_booster_experiment_parity(tmp_path):
    geo = {"n_train": 500, "n_mps": 300, "train_cfg": LIGHT, "max_iterations": 2}
    d = spec_dict(kind="booster", repetitions=2, budget=40,
                  solvers=["sa_strategy1", {"name": "sa_strategy2", "params": {"restarts": 2}},
                           {"name": "tn_geo_booster", "params": geo}])
    summary = run_experiment(ExperimentSpec.from_dict(d), tmp_path)
    assert summary["budget_parity"]
    assert "tn_geo_booster_vs_sa_strategy1" in summary["relative_enhancement"]
    for p in (tmp_path / "cells").glob("tn_geo_booster__*.json"):
        doc = json.loads(p.read_text())["result"]
        origins = {o for _, _, o in doc["evaluated"]}
        assert origins <= {"sa", "generator", "padding"}
        seed_bits = {b for b, _, o in doc["evaluated"] if o == "sa"}
        assert not seed_bits & {b for b, _, o in doc["evaluated"] if o == "generator"}


def test_frontier_experiment(tmp_path):
    d = spec_dict(kind="frontier", repetitions=1, budget=20, lambdas=[0.2, 0.6, 1.0], frontier_points=50,
                  solvers=[{"name": "conditioned_random", "params": {"dedup": True}}])
    summary = run_experiment(ExperimentSpec.from_dict(d), tmp_path)
    row = summary["solvers"]["conditioned_random"]["mean_row"]
    assert row["Mean"] >= 0 and row["Min"] <= row["Median"] <= row["Max"]
    with open(tmp_path / "metrics.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["solver", "repetition", "Mean", "Median", "Min", "Max", "MEUCD", "VRE", "MRE"]


def test_oracle_cache_does_not_change_counts():
    inst = instance_from_source(INSTANCE)
    cache = {}
    a = PortfolioOracle(inst, cache=cache)
    a("11110000")
    b = PortfolioOracle(inst, cache=cache)
    b("11110000")
    assert a.calls == b.calls == 1
