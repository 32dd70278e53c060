import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idsbench.dataset import BinaryClass, EncodedDataset
from idsbench.svm import (
    DimensionMismatchError,
    Kernel,
    SingleClassError,
    SVMModel,
    SVMTrainConfig,
    alphas_for_training_set,
    decision_value,
    dual_objective,
    kernel_eval,
    kkt_violations,
    loads,
    predict_svm,
    train_svm,
    train_svm_classifier,
)


def encoded(X, y):
    return EncodedDataset(np.asarray(X, dtype=float), np.asarray(y, dtype=float), None)


def separable_set(seed: int, n: int = 40, margin: float = 0.1):
    """Random 2-D points in [-1, 1]^2 at least ``margin`` from a random line, both classes present."""
    rng = np.random.default_rng(seed)
    while True:
        theta = rng.uniform(0, 2 * np.pi)
        w = np.array([np.cos(theta), np.sin(theta)])
        offset = rng.uniform(-0.3, 0.3)
        X = rng.uniform(-1, 1, size=(20 * n, 2))
        s = X @ w + offset
        keep = np.abs(s) >= margin
        X, s = X[keep][:n], s[keep][:n]
        y = np.where(s > 0, 1.0, -1.0)
        if len(X) == n and len(set(y)) == 2:
            return X, y


ANALYTIC = encoded([[-1.0], [1.0]], [-1, 1])


# -- kernels ------------------------------------------------------------------------

def test_kernel_examples():
    assert kernel_eval(Kernel.linear(), [1, 2], [3, 4]) == 11
    assert kernel_eval(Kernel.rbf(0.7), [1, 2], [1, 2]) == 1.0
    assert kernel_eval(Kernel.linear(), [0, 0], [5, -3]) == 0


def test_kernel_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        kernel_eval(Kernel.linear(), [1, 2], [1, 2, 3])


def test_rbf_default_gamma_is_inverse_dimension():
    assert Kernel.rbf().resolved(4).gamma == 0.25
    a, b = np.array([0.0, 0, 0, 0]), np.array([1.0, 1, 0, 0])
    assert kernel_eval(Kernel.rbf(), a, b) == pytest.approx(np.exp(-0.5))


def test_gram_matches_pairwise():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
    for k in (Kernel.linear(), Kernel.rbf(0.3)):
        G = k.gram(A, B)
        for i in range(5):
            for j in range(4):
                assert G[i, j] == pytest.approx(kernel_eval(k, A[i], B[j]), abs=1e-12)


# -- training -----------------------------------------------------------------------

def test_analytic_two_points():
    m = train_svm(ANALYTIC, SVMTrainConfig(C=10))
    assert abs(m.bias) <= 1e-3
    assert decision_value(m, [1.0]) == pytest.approx(1.0, abs=1e-2)
    assert decision_value(m, [-1.0]) == pytest.approx(-1.0, abs=1e-2)
    assert decision_value(m, [0.0]) == pytest.approx(0.0, abs=1e-3)
    assert predict_svm(m, np.array([2.0])) is BinaryClass.ATTACK
    assert predict_svm(m, np.array([-2.0])) is BinaryClass.NORMAL
    assert m.converged


def test_duplicated_dataset_same_boundary():
    X, y = separable_set(3, n=20)
    a = train_svm(encoded(X, y), SVMTrainConfig(C=100))
    b = train_svm(encoded(np.vstack([X, X]), np.concatenate([y, y])), SVMTrainConfig(C=100))
    probe = np.random.default_rng(1).uniform(-1, 1, size=(50, 2))
    assert np.allclose(a.decision_values(probe), b.decision_values(probe), atol=2e-2)
    da = train_svm(encoded([[-1.0], [-1.0], [1.0], [1.0]], [-1, -1, 1, 1]), SVMTrainConfig(C=10))
    assert decision_value(da, [1.0]) == pytest.approx(1.0, abs=1e-2)
    assert abs(da.bias) <= 1e-3


def test_coincident_opposite_points_are_bounded():
    m = train_svm(encoded([[0.3, 0.3], [0.3, 0.3]], [1, -1]), SVMTrainConfig(C=0.5))
    alpha = alphas_for_training_set(m, 2, np.array([1.0, -1.0]))
    assert np.allclose(alpha, [0.5, 0.5])


def test_single_class_rejected():
    with pytest.raises(SingleClassError):
        train_svm(encoded([[0.0], [1.0]], [1, 1]))
    with pytest.raises(SingleClassError):
        train_svm(encoded([[0.0]], [1]))


def test_config_validation():
    with pytest.raises(ValueError):
        SVMTrainConfig(C=0)
    with pytest.raises(ValueError):
        SVMTrainConfig(tolerance=0)
    with pytest.raises(ValueError):
        SVMTrainConfig(max_passes=0)


def test_nonconvergence_flagged():
    X, y = separable_set(5, n=50, margin=0.01)
    m = train_svm(encoded(X, y), SVMTrainConfig(C=1000, tolerance=1e-9, max_iterations=1))
    assert not m.converged
    assert m.kkt_residual > 1e-9
    assert m.passes == 1


def test_decision_on_boundary_is_attack():
    m = SVMModel(np.zeros((0, 1)), np.zeros(0), 0.0, Kernel.linear())
    assert decision_value(m, [3.0]) == 0.0
    assert predict_svm(m, np.array([3.0])) is BinaryClass.ATTACK
    m = SVMModel(np.zeros((0, 1)), np.zeros(0), -0.25, Kernel.linear())
    assert decision_value(m, [3.0]) == -0.25


def _check_invariants(X, y, cfg):
    K = cfg.kernel.resolved(X.shape[1]).gram(X, X)
    history = []

    def record(alpha, b):
        history.append((float(alpha @ y), dual_objective(alpha, y, K),
                        bool(((alpha >= 0) & (alpha <= cfg.C)).all())))

    m = train_svm(encoded(X, y), cfg, callback=record)
    assert history
    objs = [h[1] for h in history]
    assert all(abs(s) <= 1e-6 for s, _, _ in history)
    assert all(ok for _, _, ok in history)
    assert all(b >= a - 1e-9 for a, b in zip([0.0] + objs, objs))
    return m


@pytest.mark.parametrize("seed", range(5))
def test_separable_kkt_and_constraints(seed):
    X, y = separable_set(seed)
    cfg = SVMTrainConfig(C=100, seed=seed)
    m = _check_invariants(X, y, cfg)
    assert m.converged and m.kkt_residual <= cfg.tolerance
    f = m.decision_values(X)
    alpha = alphas_for_training_set(m, len(y), y)
    assert kkt_violations(alpha, y, f, cfg.C).max() <= cfg.tolerance
    assert (np.where(f >= 0, 1, -1) == y).all()
    free = (alpha > 0) & (alpha < cfg.C)
    assert np.all(np.abs(f[free] - y[free]) <= cfg.tolerance)
    assert (alpha[m.support_indices] > 0).all()
    assert np.count_nonzero(alpha) == len(m.support_indices)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(6, 30), st.floats(0.05, 5.0))
def test_invariants_on_noisy_sets(seed, n, C):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y = np.where(X[:, 0] + 0.8 * rng.normal(size=n) > 0, 1.0, -1.0)
    if len(set(y)) < 2:
        y[0] = -y[1]
    for kernel in (Kernel.linear(), Kernel.rbf()):
        cfg = SVMTrainConfig(C=C, kernel=kernel, seed=seed)
        m = _check_invariants(X, y, cfg)
        alpha = alphas_for_training_set(m, n, y)
        assert ((alpha >= 0) & (alpha <= C)).all()
        assert abs(alpha @ y) <= 1e-6
        if m.converged:
            assert kkt_violations(alpha, y, m.decision_values(X), C).max() <= cfg.tolerance


def test_training_deterministic():
    X, y = separable_set(9)
    a = train_svm(encoded(X, y), SVMTrainConfig(C=100, seed=4))
    b = train_svm(encoded(X, y), SVMTrainConfig(C=100, seed=4))
    assert np.array_equal(a.dual_coefficients, b.dual_coefficients) and a.bias == b.bias


# -- records and persistence ----------------------------------------------------------

def test_classifier_on_records_and_round_trip(synthetic_6k):
    train = synthetic_6k.subset(range(400))
    test = synthetic_6k.subset(range(400, 800))
    m = train_svm_classifier(train, SVMTrainConfig(kernel=Kernel.rbf()))
    preds = m.predict_dataset(test)
    acc = np.mean([p is r.binary_class for p, r in zip(preds, test)])
    assert acc > 0.9
    text = m.dumps()
    again = loads(text)
    assert again.dumps() == text
    assert again.predict_dataset(test) == preds
    r = test[0]
    assert again.decision_details(r)["decision"] == m.decision_details(r)["decision"]
    assert again.kernel == m.kernel and again.converged == m.converged


def test_model_without_encoder_rejects_records(synthetic_6k):
    m = train_svm(ANALYTIC)
    with pytest.raises(ValueError):
        m.predict(synthetic_6k[0])
