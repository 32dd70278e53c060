"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a PASS/FAIL/SKIP line that is echoed in the pytest
terminal summary under "acceptance criteria".

Criteria 6 and 8 need the real NSL-KDD training files, which are not
redistributed here. Point ``IDSBENCH_NSLKDD_20`` at ``KDDTrain+_20Percent.txt``
and ``IDSBENCH_NSLKDD_TRAIN`` at ``KDDTrain+.txt`` (or drop them into
``tests/data/``); without them those two criteria skip by name.
"""

import os
import random
import statistics
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from idsbench.cli import main
from idsbench.dataset import BinaryClass, EncodedDataset, load_dataset
from idsbench.dtree import build_tree, classify_tree, gain_ratio, info
from idsbench.evaluation import (
    SweepConfig,
    accuracy,
    confusion,
    fnr,
    fpr,
    measure_time,
    read_report_csv,
    run_sweep,
    tpr,
)
from idsbench.nb import DegenerateModelWarning, train_nb
from idsbench.rforest import ForestConfig, build_forest, predict_forest
from idsbench.svm import SVMTrainConfig, alphas_for_training_set, decision_value, kkt_violations, train_svm

import conftest
from conftest import make_dataset
from oracles import chosen_splits, exhaustive_best, node_split_ratio, random_mixed_dataset, tally_confusion

pytestmark = pytest.mark.acceptance

A, N = BinaryClass.ATTACK, BinaryClass.NORMAL
DATA = Path(__file__).parent / "data"


def verdict(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
    conftest.ACCEPTANCE.append(line)
    print(line)
    assert ok, line


def skip(number: int, title: str, reason: str) -> None:
    line = f"[SKIP] criterion {number}: {title} ({reason})"
    conftest.ACCEPTANCE.append(line)
    pytest.skip(line)


def nsl_file(env: str, name: str) -> Path | None:
    path = os.environ.get(env)
    candidate = Path(path) if path else DATA / name
    return candidate if candidate.is_file() else None


# -- 1 ------------------------------------------------------------------------------------

def test_criterion_1_metric_oracles():
    start = time.perf_counter()
    rng = random.Random(1)
    mismatches = 0
    for _ in range(1000):
        n = rng.randint(1, 200)
        preds = [rng.choice([A, N]) for _ in range(n)]
        truths = [rng.choice([A, N]) for _ in range(n)]
        cm = confusion(preds, truths)
        tp, fp, tn, fn = tally_confusion(preds, truths)
        expected = (
            None if tp + fn == 0 else 100.0 * tp / (tp + fn),
            None if fp + tn == 0 else 100.0 * fp / (fp + tn),
            None if tp + fn == 0 else 100.0 * fn / (tp + fn),
            100.0 * (tp + tn) / n,
        )
        if (cm.tp, cm.fp, cm.tn, cm.fn) != (tp, fp, tn, fn) or \
                (tpr(cm), fpr(cm), fnr(cm), accuracy(cm)) != expected:
            mismatches += 1
    elapsed = time.perf_counter() - start
    verdict(1, "metric formulas match brute-force tally on 1000 random vectors",
            mismatches == 0 and elapsed < 5.0, f"{mismatches} mismatches, {elapsed:.2f}s")


# -- 2 ------------------------------------------------------------------------------------

def test_criterion_2_entropy_and_gain_ratio():
    h = info([9, 5])
    four = make_dataset([(("a",), True), (("a",), True), (("b",), False), (("b",), False)], "c")
    gr = gain_ratio(four, 0).gain_ratio
    rng = random.Random(2)
    beaten = 0
    for _ in range(100):
        d = random_mixed_dataset(rng, 30)
        for node, recs, avail in chosen_splits(build_tree(d), d):
            if node_split_ratio(node, recs) < exhaustive_best(recs, d.schema, avail) - 1e-9:
                beaten += 1
    ok = abs(h - 0.940286) <= 1e-6 and gr == 1.0 and beaten == 0
    verdict(2, "info(9,5), perfect-split gain ratio, exhaustive split oracle", ok,
            f"info={h:.6f}, gain_ratio={gr}, beaten splits={beaten}")


# -- 3 ------------------------------------------------------------------------------------

def test_criterion_3_nb_brute_force():
    from test_nb import brute_force_nb
    rng = random.Random(3)
    mismatches = 0
    for _ in range(50):
        width = rng.randint(1, 4)
        n = rng.randint(1, 64)
        rows = [(tuple(rng.choice("01") for _ in range(width)), rng.random() < 0.5) for _ in range(n)]
        d = make_dataset(rows, "c" * width)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateModelWarning)
            model = train_nb(d, smoothing=0)
        mismatches += sum(model.predict(r) is not brute_force_nb(d, r.values) for r in d)
    verdict(3, "NB (alpha=0) equals exhaustive joint-count argmax on 50 datasets",
            mismatches == 0, f"{mismatches} mismatching records")


# -- 4 ------------------------------------------------------------------------------------

def test_criterion_4_svm():
    from test_svm import separable_set
    analytic = EncodedDataset(np.array([[-1.0], [1.0]]), np.array([-1.0, 1.0]), None)
    m = train_svm(analytic, SVMTrainConfig(C=10))
    analytic_ok = (abs(m.bias) <= 1e-3 and abs(decision_value(m, [1.0]) - 1) <= 1e-2
                   and abs(decision_value(m, [-1.0]) + 1) <= 1e-2)
    failures = 0
    worst = 0.0
    for seed in range(20):
        X, y = separable_set(100 + seed)
        cfg = SVMTrainConfig(C=100, seed=seed)
        model = train_svm(EncodedDataset(X, y, None), cfg)
        f = model.decision_values(X)
        residual = kkt_violations(alphas_for_training_set(model, len(y), y), y, f, cfg.C).max()
        worst = max(worst, residual)
        if residual > cfg.tolerance or not (np.where(f >= 0, 1, -1) == y).all():
            failures += 1
    verdict(4, "SVM analytic two-point case and KKT on 20 separable sets", analytic_ok and failures == 0,
            f"b={m.bias:.2e}, h(1)={decision_value(m, [1.0]):.4f}, failing sets={failures}, "
            f"worst KKT residual={worst:.1e}")


# -- 5 ------------------------------------------------------------------------------------

def test_criterion_5_rf_degeneracy():
    rng = random.Random(5)
    mismatches = 0
    bad_votes = 0
    for i in range(20):
        d = random_mixed_dataset(rng, rng.randint(10, 80))
        forest = build_forest(d, ForestConfig(1, "all", bootstrap=False, seed=i))
        tree = build_tree(d)
        mismatches += sum(predict_forest(forest, r)[0] is not classify_tree(tree, r) for r in d)
        big = build_forest(d, ForestConfig(number_of_trees=7, seed=i))
        bad_votes += sum(sum(predict_forest(big, r)[1].values()) != 7 for r in d)
    verdict(5, "RF(1 tree, all features, no bootstrap) equals DT on 20 datasets; votes sum",
            mismatches == 0 and bad_votes == 0, f"{mismatches} mismatches, {bad_votes} bad vote sums")


# -- 6 ------------------------------------------------------------------------------------

REFERENCE_TPR_2000 = {"RF": 98.7, "DT": 98.0, "SVM": 97.5, "NB": 90.2}


def test_criterion_6_desk_scale_reproduction():
    title = "TPR at 2000 connections within 3 points; RF beats NB; RF accuracy at 3500"
    path = nsl_file("IDSBENCH_NSLKDD_20", "KDDTrain+_20Percent.txt") or \
        nsl_file("IDSBENCH_NSLKDD_TRAIN", "KDDTrain+.txt")
    if path is None:
        skip(6, title, "real NSL-KDD file not available; set IDSBENCH_NSLKDD_20")
    start = time.perf_counter()
    d = load_dataset(path)
    rows = run_sweep(d, SweepConfig((2000, 3500), ("NB", "DT", "SVM", "RF"), seed=0))
    elapsed = time.perf_counter() - start
    at = {(r.connections, r.algorithm): r for r in rows}
    problems = []
    for algo, expected in REFERENCE_TPR_2000.items():
        got = at[(2000, algo)].tpr
        if got is None or abs(got - expected) > 3.0:
            problems.append(f"{algo} TPR {got} vs {expected}")
    rf, nb = at[(2000, "RF")], at[(2000, "NB")]
    if not rf.tpr > nb.tpr:
        problems.append(f"RF TPR {rf.tpr} not > NB {nb.tpr}")
    if not rf.fpr < nb.fpr:
        problems.append(f"RF FPR {rf.fpr} not < NB {nb.fpr}")
    if not rf.accuracy > nb.accuracy:
        problems.append(f"RF accuracy {rf.accuracy} not > NB {nb.accuracy}")
    rf_3500 = at[(3500, "RF")].accuracy
    if rf_3500 is None or rf_3500 < 96.5:
        problems.append(f"RF accuracy at 3500 = {rf_3500}")
    if elapsed >= 120:
        problems.append(f"runtime {elapsed:.0f}s")
    tprs = ", ".join(f"{a}={at[(2000, a)].tpr:.1f}" for a in REFERENCE_TPR_2000)
    verdict(6, title, not problems, "; ".join(problems) or f"{tprs}; RF acc@3500={rf_3500:.2f}; {elapsed:.0f}s")


# -- 7 ------------------------------------------------------------------------------------

def test_criterion_7_timing_substitute(synthetic_6k, synthetic_file, tmp_path):
    model = train_nb(synthetic_6k.subset(range(1000)))
    small, large = synthetic_6k.subset(range(1500)), synthetic_6k.subset(range(3000))
    t_small = statistics.median(measure_time(lambda: model.predict_dataset(small)) for _ in range(5))
    t_large = statistics.median(measure_time(lambda: model.predict_dataset(large)) for _ in range(5))
    assert main(["bench", "--dataset", str(synthetic_file), "--counts", "300,600",
                 "--algos", "nb,dt,svm,rf", "--seed", "7", "--out-dir", str(tmp_path)]) == 0
    with open(tmp_path / "report.csv") as fh:
        text = fh.read()
    rows = read_report_csv(text.splitlines())
    times_present = all(line.split(",")[6] and line.split(",")[7] for line in text.splitlines()[1:])
    ok = t_large > t_small and times_present and all(r.train_time >= 0 and r.classify_time >= 0 for r in rows)
    verdict(7, "timing monotone in work; every report row carries both time fields", ok,
            f"median {t_small * 1e3:.1f} ms vs {t_large * 1e3:.1f} ms, {len(rows)} rows")


# -- 8 ------------------------------------------------------------------------------------

def test_criterion_8_category_experiment(tmp_path, capsys):
    title = "category --per-category 52 gives a 4x4 table inside [0, 100]"
    path = nsl_file("IDSBENCH_NSLKDD_TRAIN", "KDDTrain+.txt")
    if path is None:
        skip(8, title, "real NSL-KDD training file not available; set IDSBENCH_NSLKDD_TRAIN")
    rc = main(["category", "--dataset", str(path), "--per-category", "52", "--seed", "0",
               "--out-dir", str(tmp_path)])
    out = capsys.readouterr().out.splitlines()
    cells = [line.split(",")[3:] for line in out[1:]]
    ok = (rc == 0 and len(cells) == 4 and all(len(c) == 4 for c in cells)
          and all(0.0 <= float(v) <= 100.0 for c in cells for v in c))
    verdict(8, title, ok, f"exit {rc}; " + " | ".join(out[1:]))


# -- 9 ------------------------------------------------------------------------------------

def test_criterion_9_bench_determinism(synthetic_file, tmp_path):
    def run(out):
        assert main(["bench", "--dataset", str(synthetic_file), "--counts", "500:1500:500",
                     "--algos", "nb,dt,svm,rf", "--seed", "7", "--out-dir", str(out)]) == 0
        lines = (out / "report.csv").read_bytes().splitlines()
        return [b",".join(line.split(b",")[:6]) for line in lines]

    a, b = run(tmp_path / "a"), run(tmp_path / "b")
    verdict(9, "two identical bench runs give byte-identical CSVs apart from time columns",
            a == b and len(a) == 13, f"{len(a) - 1} rows")
