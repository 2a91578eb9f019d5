import io
import json
import math
from dataclasses import replace

import pytest

from recaudit.dataset import Dataset
from recaudit.errors import ConfigError
from recaudit.harness import (
    CSV_HEADER,
    Z95,
    ExperimentConfig,
    Harness,
    ResultRow,
    emit_csv,
    emit_summary,
    mean_ci,
    pair_seed,
    read_csv,
    run_and_write,
    run_experiment,
    stab_pairs,
    write_rows,
)
from recaudit.mf import MfConfig
from recaudit.optim import OptimizerConfig
from recaudit.synthetic import synthetic_movielens

SMALL_MF = MfConfig(dim=3, reg=0.5, epochs=4)
FAST = OptimizerConfig(epochs=3, num_z=2)


def _tiny():
    # user 4 rates items 1..4 early so they survive every holdout; 5 and 6 come from user 3
    rows = [(1, 1, 5, 1), (1, 2, 3, 2), (1, 3, 4, 3), (1, 4, 2, 4),
            (2, 3, 4, 1), (2, 2, 2, 2), (2, 4, 1, 3),
            (3, 5, 5, 1), (3, 6, 2, 2), (3, 1, 3, 3), (3, 4, 4, 5),
            (4, 1, 2, 0), (4, 2, 4, 0), (4, 3, 3, 0), (4, 4, 5, 0), (4, 5, 1, 6), (4, 6, 2, 7)]
    u, i, r, t = zip(*rows)
    return Dataset(u, i, r, t)


def test_exhaustive_tiny_sweep_keeps_feasible_pairs():
    data = _tiny()
    cfg = ExperimentConfig(ks=(1, 2), user_frac=1.0, item_frac=1.0, mf=SMALL_MF, optimizer=FAST)
    rows, h = run_experiment(cfg, data)
    got = {(r.k, r.user, r.counterpart) for r in rows}
    want = set()
    for k in (1, 2):
        train = data.holdout(k).train
        known = set(train.item_ids.tolist())
        for u in (1, 2, 3, 4):
            hist = data.user_history_ids(u)[0].tolist()
            if len(hist) < k + 1 or not set(hist[-k:]) <= known:
                continue
            want |= {(k, u, i) for i in range(1, 7) if i in known and i not in hist}
    assert got == want and len(want) >= 3
    assert len(rows) + len(h.skips) == 2 * 4 * 6
    assert all(r.lift_or_instability >= 1.0 for r in rows)


def test_rows_are_deterministic_across_runs_and_workers(tmp_path):
    data = synthetic_movielens(40, 50, seed=1)
    base = ExperimentConfig(experiment="stab-sweep", metric="past-stab", ks=(2,), user_frac=0.2,
                            mf=SMALL_MF, optimizer=FAST, seed=7)
    outs = []
    for n, workers in enumerate((1, 1, 2)):
        out = tmp_path / f"run{n}"
        run_and_write(replace(base, workers=workers, out=str(out)), data)
        outs.append((out / "results.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    assert outs[0].count(b"\n") > 1


def test_pair_seeds_independent_of_subset():
    assert pair_seed(3, 5) == pair_seed(3, 5)
    assert len({pair_seed(0, n) for n in range(100)}) == 100


def test_stab_pairs_split_users():
    data = synthetic_movielens(60, 40, seed=2)
    h = Harness(ExperimentConfig(experiment="stab-sweep", metric="past-stab", user_frac=0.3), data)
    pairs = stab_pairs(h)
    assert pairs and all(a != b for a, b in pairs)
    targets, advs = {a for a, _ in pairs}, {b for _, b in pairs}
    assert not targets & advs
    assert len(pairs) == len(targets) * len(advs) == 9 * 9
    capped = stab_pairs(Harness(replace(h.config, max_pairs=10), data))
    assert len(capped) == 10 and set(capped) <= set(pairs)


def test_hellinger_instability_in_unit_interval():
    data = synthetic_movielens(40, 50, seed=3)
    cfg = ExperimentConfig(experiment="stab-sweep", metric="past-stab", ks=(2,), user_frac=0.2,
                           betas=(4.0,), mf=SMALL_MF, optimizer=FAST)
    rows, _ = run_experiment(cfg, data)
    assert rows and all(0.0 <= r.lift_or_instability <= 1.0 for r in rows)
    assert all(r.baseline == pytest.approx(0.0, abs=1e-12) for r in rows)


def test_single_beta_sweep_matches_stab_sweep():
    data = synthetic_movielens(40, 50, seed=4)
    kw = dict(metric="past-stab", ks=(2,), user_frac=0.2, betas=(2.0,), mf=SMALL_MF, optimizer=FAST)
    a, _ = run_experiment(ExperimentConfig(experiment="stab-sweep", **kw), data)
    b, _ = run_experiment(ExperimentConfig(experiment="beta-sweep", **kw), data)
    assert [replace(r, experiment="x") for r in a] == [replace(r, experiment="x") for r in b]


def test_optimizer_compare_labels():
    data = synthetic_movielens(30, 40, seed=5)
    cfg = ExperimentConfig(experiment="optimizer-compare", metric="past-stab", ks=(2,), user_frac=0.2,
                           max_pairs=3, mf=SMALL_MF, optimizer=FAST)
    rows, _ = run_experiment(cfg, data)
    kinds = {r.experiment for r in rows}
    assert kinds == {"optimizer-compare/gd", "optimizer-compare/zo", "optimizer-compare/oracle"}
    oracle = [r for r in rows if r.experiment.endswith("oracle")]
    assert all(r.epochs == 0 for r in oracle)


def test_group_experiment_shapes():
    data = synthetic_movielens(120, 80, seed=6)
    cfg = ExperimentConfig(experiment="group-reach", metric="past-reach", ks=(2,), user_frac=0.02,
                           group_size=3, band=(20, 40), mf=SMALL_MF, optimizer=FAST)
    rows, _ = run_experiment(cfg, data)
    assert {r.experiment for r in rows} <= {"group-reach/popular", "group-reach/intermediate"}
    with pytest.raises(ConfigError):
        run_experiment(replace(cfg, band=(79, 80)), data)
    with pytest.raises(ConfigError):
        run_experiment(replace(cfg, metric="past-stab"), data)


def test_csv_header_and_empty_output():
    buf = io.StringIO()
    write_rows([], buf)
    assert buf.getvalue() == ",".join(CSV_HEADER) + "\n"
    assert CSV_HEADER == ("experiment", "metric", "k", "beta", "user", "counterpart", "baseline",
                          "optimized", "lift_or_instability", "epochs", "seed", "wall_ms")


def _row(v, **kw):
    base = dict(experiment="e", metric="past-reach", k=1, beta=1.0, user=1, counterpart=2,
                baseline=0.1, optimized=0.1 * v, lift_or_instability=v, epochs=5, seed=3)
    base.update(kw)
    return ResultRow(**base)


def test_mean_ci_fixture():
    s = mean_ci([1.0, 2.0, 3.0])
    assert s["mean"] == 2.0
    assert s["stderr"] == pytest.approx(1 / math.sqrt(3), rel=1e-15)
    assert s["ci_low"] == pytest.approx(2 - Z95 / math.sqrt(3), rel=1e-15)
    assert s["ci_high"] == pytest.approx(2 + Z95 / math.sqrt(3), rel=1e-15)
    one = mean_ci([4.0])
    assert one["mean"] == 4.0 and one["stderr"] is None and one["ci_low"] is None
    assert Z95 == pytest.approx(1.959963984540054)


def test_row_rejects_non_finite():
    with pytest.raises(ValueError):
        _row(float("inf"))


def test_csv_round_trip_and_summary(tmp_path):
    rows = [_row(1.5), _row(2.25, user=4), _row(1.0 / 3.0, k=2, wall_ms=12.5)]
    path = tmp_path / "r.csv"
    emit_csv(rows, path)
    back = read_csv(path)
    assert back == rows
    summ = emit_summary(back, tmp_path / "s.csv")
    assert [(s["k"], s["count"]) for s in summ] == [(1, 2), (2, 1)]
    assert summ[0]["mean"] == pytest.approx(1.875)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("experiment,metric,k,beta,count,mean")
    assert lines[2].endswith(",,,")


def test_outputs_written(tmp_path):
    data = synthetic_movielens(30, 40, seed=8)
    cfg = ExperimentConfig(ks=(1,), user_frac=0.1, item_frac=0.1, mf=SMALL_MF, optimizer=FAST,
                           out=str(tmp_path), timing=True)
    rows = run_and_write(cfg, data)
    meta = json.loads((tmp_path / "metadata.json").read_text())
    assert meta["rows"] == len(rows) and meta["config"]["ks"] == [1]
    assert all(r.wall_ms is not None and r.wall_ms >= 0 for r in read_csv(tmp_path / "results.csv"))
    assert (tmp_path / "skipped.csv").read_text().startswith("experiment,k,beta,user,counterpart,reason")


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(experiment="nope")
    with pytest.raises(ConfigError):
        ExperimentConfig(user_frac=0.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(ks=(0,))
    with pytest.raises(ConfigError):
        Harness(ExperimentConfig())
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig(metric="past-stab"), synthetic_movielens(20, 20, seed=0))
