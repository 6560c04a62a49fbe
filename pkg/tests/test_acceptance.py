"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines.
"""

import math
import time

import numpy as np
import pytest

from metricnet import cli, harness
from metricnet.batching import ConstellationBatch, mine_triplets
from metricnet.data import stratified_kfold, synth_gaussian_clusters
from metricnet.evaluation import davies_bouldin, silhouette
from metricnet.losses import constellation_loss, contrastive_loss, npair_loss, triplet_loss
from metricnet.rng import make_rng

from test_batching import brute_force_triplets, random_batch
from test_evaluation import db_oracle, random_clusters, silhouette_oracle

BENCH_SEEDS = (0, 1, 2, 3, 4)


def report(name, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, detail


def test_1_gradient_correctness():
    t0 = time.process_time()
    results = harness.gradcheck(harness.LOSSES, seed=2024, instances=100)
    cpu = time.process_time() - t0
    worst_e = max(r["embedding_max_rel_err"] for r in results)
    worst_p = max(r["parameter_max_rel_err"] for r in results)
    ok = (
        all(r["instances"] >= 100 for r in results)
        and worst_e < harness.GRAD_TOL_EMBEDDING
        and worst_p < harness.GRAD_TOL_PARAMETER
        and cpu < 30
    )
    report("gradients", ok, f"embedding err {worst_e:.2e}, parameter err {worst_p:.2e}, {cpu:.1f}s CPU")


def test_2_spot_values():
    got = {
        "contrastive d=5": (contrastive_loss([(0, 1, 0)], [[0.0, 0.0], [3.0, 4.0]]).value, 12.5),
        "constellation K=3": (
            constellation_loss(ConstellationBatch([(0, 1, [2, 3, 4])], 3), np.ones((5, 2)) / math.sqrt(2), 3).value,
            math.log(4),
        ),
        "npair N=2": (npair_loss(np.eye(2), np.full((2, 2), 0.5)).value, math.log(2)),
        "triplet inactive": (triplet_loss([(0, 1, 2)], [[0.0], [0.1], [5.0]], alpha=0.2).value, 0.0),
    }
    errs = {k: abs(v - ref) for k, (v, ref) in got.items()}
    report("spot values", max(errs.values()) <= 1e-12, ", ".join(f"{k} err {e:.1e}" for k, e in errs.items()))


def test_3_mining_oracle():
    rng = make_rng(3003)
    mismatches = 0
    for _ in range(200):
        X, labels = random_batch(rng, max_points=24)
        for mode in ("hard", "semihard", "all_valid"):
            if mine_triplets(X, labels, 0.2, mode).as_set() != brute_force_triplets(X, labels, 0.2, mode):
                mismatches += 1
    report("mining", mismatches == 0, f"{mismatches} mismatches over 200 batches x 3 modes")


def test_4_metric_oracles():
    rng = make_rng(4004)
    worst = 0.0
    for _ in range(100):
        X, labels = random_clusters(rng, 200)
        Xl, ll = X.tolist(), labels.tolist()
        worst = max(
            worst,
            abs(davies_bouldin(X, labels) - db_oracle(Xl, ll)),
            abs(silhouette(X, labels) - silhouette_oracle(Xl, ll)),
        )
    db_hand = davies_bouldin([[0, 0], [2, 0], [10, 0], [12, 0]], [0, 0, 1, 1])
    sil_hand = silhouette([[0, 0], [0, 2], [10, 0], [10, 2]], [0, 0, 1, 1])
    ok = worst < 1e-9 and abs(db_hand - 0.2) < 1e-4 and abs(sil_hand - 0.8020) < 1e-4
    report("metrics", ok, f"oracle err {worst:.1e}, DB {db_hand:.4f}, silhouette {sil_hand:.4f}")


def test_5_protocol_fidelity():
    ds = synth_gaussian_clusters(8, 80, 16, 4.0, 1.5, make_rng(0))
    a = stratified_kfold(ds.labels, 10, 7)
    b = stratified_kfold(ds.labels, 10, 7)
    deterministic = all(np.array_equal(x[1], y[1]) and np.array_equal(x[0], y[0]) for x, y in zip(a, b))
    tests = np.concatenate([te for _, te in a])
    partition = sorted(tests.tolist()) == list(range(len(ds)))
    partition &= all(not set(tr.tolist()) & set(te.tolist()) for tr, te in a)
    spread = max(
        max(c) - min(c)
        for c in zip(*[np.bincount(ds.labels[te], minlength=8).tolist() for _, te in a])
    )
    # same splits whatever the loss: compare the folds run_experiment records
    tiny = dict(synth_classes=5, synth_per_class=8, synth_dim=4, hidden=(8,), embedding_dim=4, epochs=1, folds=4, seed=7)
    recorded = {
        loss: harness.run_experiment(harness.ExperimentConfig(loss=loss, **tiny)).fold_test_indices
        for loss in harness.LOSSES
    }
    same = all(v == recorded["triplet"] for v in recorded.values())
    ok = deterministic and partition and spread <= 1 and same
    report("protocol", ok, f"deterministic={deterministic}, partition={partition}, balance spread={spread}, same across losses={same}")


@pytest.fixture(scope="module")
def bench():
    base = harness.ExperimentConfig.from_dict({**harness.ExperimentConfig().to_dict(), **harness.BENCHMARK_DEFAULTS})
    t0 = time.process_time()
    result = harness.benchmark(base, BENCH_SEEDS)
    return result, time.process_time() - t0


def _runs(result, loss):
    return [r for r in result["runs"] if r["loss"] == loss]


@pytest.mark.slow
def test_6a_no_nan(bench):
    result, cpu = bench
    bad = [(r["seed"], r["loss"]) for r in result["runs"] if not r["finite"]]
    ok = not bad and len(result["runs"]) == 4 * len(BENCH_SEEDS) and cpu < 300
    report("benchmark finite", ok, f"non-finite runs {bad}, {cpu:.0f}s CPU for the whole benchmark")


@pytest.mark.slow
def test_6b_constellation_beats_untrained(bench):
    result, _ = bench
    pairs = [(r["mean"]["silhouette"], r["untrained_mean"]["silhouette"]) for r in _runs(result, "constellation")]
    wins = sum(t > u for t, u in pairs)
    detail = ", ".join(f"{t:.3f} vs {u:.3f}" for t, u in pairs)
    report("trained > untrained silhouette", wins == len(BENCH_SEEDS), f"{wins}/{len(BENCH_SEEDS)} ({detail})")


@pytest.mark.slow
def test_6c_constellation_vs_triplet(bench):
    result, _ = bench
    summary = harness.ordering_summary(result)
    report(
        "constellation >= triplet silhouette",
        summary["wins"] >= 4,
        f"{summary['wins']}/{summary['of']} seeds",
    )


@pytest.mark.slow
def test_6d_constellation_knn_accuracy(bench):
    result, _ = bench
    accs = [r["mean"]["accuracy"] for r in _runs(result, "constellation")]
    worst = min(accs)
    report("constellation k-NN accuracy >= 0.95", worst >= 0.95, "per seed " + ", ".join(f"{a:.3f}" for a in accs))


def test_7_cli_determinism(tmp_path):
    data = tmp_path / "d.csv"
    small = ["--hidden", "16", "--embedding-dim", "8", "--epochs", "2", "--folds", "3", "--seed", "9"]
    commands = {
        "gen-data": ["gen-data", "--classes", "5", "--per-class", "9", "--dim", "6", "--seed", "9", "--out", "{out}"],
        "train": ["train", "--csv", str(data), "--checkpoint", "{out}.ckpt", *small, "--out", "{out}"],
        "run": ["run", "--csv", str(data), "--loss", "triplet", *small, "--out", "{out}"],
        "eval": ["eval", "--checkpoint", "{ckpt}", "--data", str(data), "--seed", "9", "--out", "{out}"],
        "project": ["project", "--checkpoint", "{ckpt}", "--data", str(data), "--seed", "9", "--out", "{out}"],
        "gradcheck": ["gradcheck", "--loss", "npair", "--instances", "5", "--seed", "9", "--out", "{out}"],
        "benchmark": ["benchmark", "--synth-classes", "5", "--synth-per-class", "6", *small, "--seeds", "1",
                      "--losses", "npair", "constellation", "--out", "{out}"],
    }
    cli.main([a.format(out=data) for a in commands["gen-data"]])
    ckpt = tmp_path / "model.json"
    assert cli.main(["train", "--csv", str(data), "--checkpoint", str(ckpt), *small, "--out", str(tmp_path / "t.json")]) == 0

    def strip(text):
        return "\n".join(l for l in text.splitlines() if '"wall_clock_seconds"' not in l)

    differing = []
    for name, argv in commands.items():
        outputs = []
        for rep in range(2):
            out = tmp_path / f"{name}{rep}.out"
            code = cli.main([a.format(out=out, ckpt=ckpt) for a in argv])
            assert code == 0, f"{name} exited {code}"
            text = strip(out.read_text())
            if name == "train":
                text += (tmp_path / f"{name}{rep}.out.ckpt").read_text()
            outputs.append(text)
        if outputs[0] != outputs[1]:
            differing.append(name)
    report("CLI determinism", not differing, f"{len(commands) - len(differing)}/{len(commands)} commands byte-identical")
