import io
import random
import statistics

import pytest

from idsbench.dataset import ATTACK_CATEGORIES, BinaryClass, Category, StratumTooSmallError
from idsbench.evaluation import (
    CSV_HEADER,
    ConfusionMatrix,
    InfeasibleSweepError,
    MetricsRow,
    SweepConfig,
    accuracy,
    confusion,
    fnr,
    fpr,
    measure_time,
    plot_tables,
    read_report_csv,
    run_category_experiment,
    run_sweep,
    sweep_split,
    tpr,
    write_report_csv,
)
from idsbench.nb import train_nb

from oracles import tally_confusion

A, N = BinaryClass.ATTACK, BinaryClass.NORMAL


def test_confusion_examples():
    truths = [A, A, A, N, N]
    assert confusion(truths, truths) == ConfusionMatrix(tp=3, fp=0, tn=2, fn=0)
    assert confusion([N] * 5, truths).fn == 3


def test_confusion_length_mismatch():
    with pytest.raises(ValueError):
        confusion([A], [A, N])


def test_randomized_confusion_matches_tally():
    rng = random.Random(20)
    preds = [rng.choice([A, N]) for _ in range(20)]
    truths = [rng.choice([A, N]) for _ in range(20)]
    cm = confusion(preds, truths)
    assert (cm.tp, cm.fp, cm.tn, cm.fn) == tally_confusion(preds, truths)
    assert cm.total == 20


def test_rate_examples():
    assert tpr(ConfusionMatrix(90, 0, 0, 10)) == 90.0
    assert tpr(ConfusionMatrix(5, 0, 0, 0)) == 100.0
    assert fpr(ConfusionMatrix(3, 0, 7, 1)) == 0.0
    assert fnr(ConfusionMatrix(90, 0, 0, 10)) == 10.0
    assert fnr(ConfusionMatrix(4, 1, 1, 0)) == 0.0
    assert accuracy(ConfusionMatrix(7, 0, 3, 0)) == 100.0
    assert accuracy(ConfusionMatrix(25, 25, 25, 25)) == 50.0


def test_reported_operating_points():
    assert tpr(ConfusionMatrix(tp=987, fp=0, tn=0, fn=13)) == pytest.approx(98.7, abs=1e-12)
    assert fpr(ConfusionMatrix(tp=0, fp=5, tn=995, fn=0)) == pytest.approx(0.5, abs=1e-12)
    assert fpr(ConfusionMatrix(tp=0, fp=93, tn=907, fn=0)) == pytest.approx(9.3, abs=1e-12)
    assert accuracy(ConfusionMatrix(tp=4974, fp=26, tn=4974, fn=26)) == pytest.approx(99.48, abs=1e-12)


def test_zero_denominators_are_absent():
    only_normals = ConfusionMatrix(0, 2, 3, 0)
    assert tpr(only_normals) is None and fnr(only_normals) is None
    only_attacks = ConfusionMatrix(4, 0, 0, 1)
    assert fpr(only_attacks) is None
    assert accuracy(ConfusionMatrix(0, 0, 0, 0)) is None


def test_fnr_complements_tpr_randomized():
    rng = random.Random(1)
    for _ in range(1000):
        n = rng.randint(1, 200)
        preds = [rng.choice([A, N]) for _ in range(n)]
        truths = [rng.choice([A, N]) for _ in range(n)]
        cm = confusion(preds, truths)
        tp, fp, tn, fn = tally_confusion(preds, truths)
        assert (cm.tp, cm.fp, cm.tn, cm.fn) == (tp, fp, tn, fn)
        if tp + fn:
            assert tpr(cm) + fnr(cm) == pytest.approx(100.0, abs=1e-9)
        assert accuracy(cm) == 100.0 * (tp + tn) / n


# -- timing ----------------------------------------------------------------------------

def test_measure_time_noop_and_non_negative():
    assert 0.0 <= measure_time(lambda: None) < 0.001


def test_measure_time_monotone_work(synthetic_6k):
    model = train_nb(synthetic_6k.subset(range(1000)))
    small = synthetic_6k.subset(range(1500))
    large = synthetic_6k.subset(range(3000))
    t_small = statistics.median(measure_time(lambda: model.predict_dataset(small)) for _ in range(5))
    t_large = statistics.median(measure_time(lambda: model.predict_dataset(large)) for _ in range(5))
    assert t_large > t_small


# -- sweep --------------------------------------------------------------------------------

def test_single_cell(synthetic_6k):
    rows = run_sweep(synthetic_6k, SweepConfig((100,), ("NB",), seed=1))
    assert len(rows) == 1
    assert rows[0].algorithm == "NB" and rows[0].connections == 100


def test_sweep_row_count_and_order(synthetic_6k):
    cfg = SweepConfig((300, 600), ("nb", "dt", "rf"), seed=2)
    rows = run_sweep(synthetic_6k, cfg)
    assert [(r.connections, r.algorithm) for r in rows] == [
        (300, "NB"), (300, "DT"), (300, "RF"), (600, "NB"), (600, "DT"), (600, "RF")]
    for r in rows:
        for v in (r.tpr, r.fpr, r.fnr, r.accuracy):
            assert v is None or 0.0 <= v <= 100.0
        if r.tpr is not None:
            assert r.tpr + r.fnr == pytest.approx(100.0, abs=1e-9)
        assert r.train_time >= 0 and r.classify_time >= 0


def test_sweep_deterministic_and_parallel(synthetic_6k):
    cfg = SweepConfig((200, 400), ("NB", "DT", "SVM", "RF"), seed=5)
    a = run_sweep(synthetic_6k, cfg)
    b = run_sweep(synthetic_6k, cfg)
    c = run_sweep(synthetic_6k, cfg, jobs=2)
    assert [r.metrics() for r in a] == [r.metrics() for r in b] == [r.metrics() for r in c]


def test_sweep_split_sizes(synthetic_6k):
    cfg = SweepConfig((500,), seed=0)
    train, test = sweep_split(synthetic_6k, 500, cfg)
    assert len(train) == 330 and len(test) == 170


@pytest.mark.parametrize("counts", [(10**6,), (500, 500), (600, 300), (1,), ()])
def test_infeasible_counts(synthetic_6k, counts):
    with pytest.raises(InfeasibleSweepError):
        run_sweep(synthetic_6k, SweepConfig(counts, ("NB",)))


def test_bad_train_fraction():
    with pytest.raises(ValueError):
        SweepConfig((10,), train_fraction=1.0)


def test_unknown_algorithm():
    with pytest.raises(ValueError):
        SweepConfig((10,), ("knn",))


def test_report_csv_round_trip():
    rows = [MetricsRow("NB", 100, 90.0, None, 10.0, 91.123456789, 0.01234, 0.5),
            MetricsRow("RF", 100, 100.0, 0.0, 0.0, 100.0, 1.0, 2.0)]
    buf = io.StringIO()
    write_report_csv(rows, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == CSV_HEADER
    assert text.splitlines()[1] == "NB,100,90.000000,,10.000000,91.123457,0.012,0.500"
    back = read_report_csv(io.StringIO(text))
    assert back[0].fpr is None and back[1].accuracy == 100.0


def test_plot_tables():
    rows = [MetricsRow("NB", 100, 90.0, None, 10.0, 91.0, 0.1, 0.2),
            MetricsRow("RF", 100, 99.0, 1.0, 1.0, 99.0, 0.3, 0.4),
            MetricsRow("NB", 200, 95.0, 2.0, 5.0, 94.0, 0.1, 0.2)]
    tables = plot_tables(rows)
    assert set(tables) == {"tpr", "fpr", "fnr", "accuracy", "train_s", "classify_s"}
    assert tables["fpr"].splitlines() == ["# connections NB RF", "100 nan 1.000000", "200 2.000000 nan"]
    assert tables["classify_s"].splitlines()[1] == "100 0.200 0.400"


# -- category experiment ---------------------------------------------------------------------

def test_category_experiment_quota(synthetic_6k):
    rep = run_category_experiment(synthetic_6k, 52, seed=3)
    assert rep.total_instances == 208
    assert set(rep.accuracies) == set(ATTACK_CATEGORIES)
    assert all(len(row) == 4 for row in rep.accuracies.values())
    assert all(0.0 <= v <= 100.0 for row in rep.accuracies.values() for v in row.values())
    assert rep.background_normals == rep.train_size // 2
    lines = rep.to_csv().splitlines()
    assert lines[0] == "category,instances,test_instances,NB,DT,SVM,RF"
    assert len(lines) == 5


def test_category_experiment_with_normal(synthetic_6k):
    rep = run_category_experiment(synthetic_6k, 52, include_normal=True, seed=3, algorithms=("NB", "DT"))
    assert rep.total_instances == 260
    assert Category.NORMAL in rep.accuracies
    assert rep.background_normals == 0


def test_category_experiment_single_instance(synthetic_6k):
    rep = run_category_experiment(synthetic_6k, 1, seed=4)
    assert rep.total_instances == 4
    for row in rep.accuracies.values():
        assert set(row.values()) <= {0.0, 100.0}


def test_category_experiment_deterministic(synthetic_6k):
    a = run_category_experiment(synthetic_6k, 20, seed=8, algorithms=("NB", "RF"))
    b = run_category_experiment(synthetic_6k, 20, seed=8, algorithms=("NB", "RF"))
    assert a.to_csv() == b.to_csv()


def test_category_experiment_insufficient(synthetic_6k):
    with pytest.raises(StratumTooSmallError) as err:
        run_category_experiment(synthetic_6k, 250, seed=0, algorithms=("NB",))
    assert "U2R" in str(err.value)


def test_category_experiment_rejects_zero(synthetic_6k):
    with pytest.raises(ValueError):
        run_category_experiment(synthetic_6k, 0)
