import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advguard.detectors import (
    apply_scaler,
    dbscan,
    fit_scaler,
    focal_loss,
    gbdt_fit,
    gbdt_score,
    kmeans_assign,
    kmeans_fit,
    logreg_fit,
    logreg_score,
)
from advguard.detectors.modelio import load_detector, save_detector
from advguard.errors import ConfigurationError, DomainError, TrainingError


# ---------------------------------------------------------------------------
# scaler
# ---------------------------------------------------------------------------


def test_scaler_minmax_column():
    X = np.array([[0.0], [5.0], [10.0]])
    params = fit_scaler(X, "minmax_then_standardize")
    assert params.col_min[0] == 0.0 and params.col_max[0] == 10.0
    # before standardization the column maps to [0, 0.5, 1]
    span = params.col_max - params.col_min
    np.testing.assert_array_equal(((X - params.col_min) / span).ravel(), [0, 0.5, 1])


def test_scaler_train_rows_standardized():
    rng = np.random.default_rng(0)
    X = rng.uniform(-3, 7, size=(40, 5))
    for mode in ("minmax_then_standardize", "standardize_only"):
        params = fit_scaler(X, mode)
        Xs = apply_scaler(params, X)
        assert np.max(np.abs(Xs.mean(axis=0))) < 1e-9
        assert np.max(np.abs(Xs.var(axis=0) - 1)) < 1e-6


def test_scaler_constant_column_passes_through():
    X = np.full((5, 1), 3.25)
    for mode in ("minmax_then_standardize", "standardize_only"):
        Xs = apply_scaler(fit_scaler(X, mode), X)
        np.testing.assert_array_equal(Xs, np.zeros((5, 1)))


def test_scaler_test_rows_may_exceed_unit_interval():
    X = np.array([[0.0], [1.0]])
    params = fit_scaler(X, "minmax_then_standardize")
    out = apply_scaler(params, np.array([[2.0]]))
    assert out[0, 0] > apply_scaler(params, np.array([[1.0]]))[0, 0]


def test_scaler_unknown_mode():
    with pytest.raises(ConfigurationError):
        fit_scaler(np.ones((2, 2)), "robust")


# ---------------------------------------------------------------------------
# kmeans
# ---------------------------------------------------------------------------


def two_blobs(seed=0, n=40, sep=50.0):
    rng = np.random.default_rng(seed)
    a = rng.normal(0, 1, size=(n // 2, 3))
    b = rng.normal(sep, 1, size=(n // 2, 3))
    X = np.vstack([a, b])
    membership = np.array([0] * (n // 2) + [1] * (n // 2))
    return X, membership


def test_kmeans_k1_centroid_is_mean():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(20, 4))
    model = kmeans_fit(X, k=1, seed=0, standardize=False)
    np.testing.assert_allclose(model.centroids[0], X.mean(axis=0), atol=1e-12)


def test_kmeans_two_blobs_brute_force_oracle():
    X, membership = two_blobs(seed=2)
    model = kmeans_fit(X, k=2, seed=3)
    labels, margins = kmeans_assign(model, X)
    # brute-force nearest-centroid check in the model's scaled space
    Xs = apply_scaler(model.scaler, X)
    d = ((Xs[:, None, :] - model.centroids[None]) ** 2).sum(axis=2)
    np.testing.assert_array_equal(labels, d.argmin(axis=1))
    # assignments equal blob membership up to renaming
    flip = labels[0]
    np.testing.assert_array_equal(labels, np.where(membership == 0, flip, 1 - flip))
    assert np.all(np.sign(margins[:20]) == np.sign(margins[0]))
    assert np.all(np.sign(margins[20:]) == -np.sign(margins[0]))


def test_kmeans_deterministic():
    X, _ = two_blobs(seed=4)
    a = kmeans_fit(X, k=2, seed=7)
    b = kmeans_fit(X, k=2, seed=7)
    np.testing.assert_array_equal(a.centroids, b.centroids)


def test_kmeans_sse_non_increasing():
    rng = np.random.default_rng(5)
    X = rng.uniform(size=(60, 4))
    model = kmeans_fit(X, k=4, seed=1)
    trace = np.array(model.sse_trace)
    assert np.all(np.diff(trace) <= 1e-9)


def test_kmeans_k_exceeds_rows():
    with pytest.raises(TrainingError):
        kmeans_fit(np.ones((3, 2)), k=4)


# ---------------------------------------------------------------------------
# dbscan
# ---------------------------------------------------------------------------


def test_dbscan_identical_points_single_cluster():
    X = np.zeros((20, 3))
    res = dbscan(X, eps=0.3, min_pts=10)
    assert res.n_clusters == 1 and res.n_noise == 0
    assert np.all(res.labels == 0)


def test_dbscan_all_far_apart_all_noise():
    X = np.arange(20, dtype=float)[:, None] * 10.0
    res = dbscan(X, eps=0.3, min_pts=10)
    assert res.n_clusters == 0 and res.n_noise == 20
    assert np.all(res.labels == -1)


def test_dbscan_two_blobs():
    X, membership = two_blobs(seed=6, n=60, sep=30.0)
    res = dbscan(X, eps=2.5, min_pts=5)
    assert res.n_clusters == 2 and res.n_noise == 0
    assert len(set(res.labels[membership == 0])) == 1
    assert len(set(res.labels[membership == 1])) == 1


def test_dbscan_border_and_noise():
    # chain 0..1 with eps 0.3: interior points are core, endpoints are
    # border points, and the far point is noise
    X = np.array([[0.0], [0.25], [0.5], [0.75], [1.0], [10.0]])
    res = dbscan(X, eps=0.3, min_pts=3)
    assert res.n_clusters == 1
    assert res.labels[0] == 0 and res.labels[4] == 0  # borders attach
    assert res.labels[5] == -1
    assert not res.core_mask[0] and not res.core_mask[4]
    assert res.core_mask[1] and res.core_mask[2] and res.core_mask[3]


def _reachability_oracle(X, eps, min_pts):
    n = X.shape[0]
    d = np.sqrt(((X[:, None, :] - X[None]) ** 2).sum(axis=2))
    neighbors = [np.flatnonzero(d[i] <= eps) for i in range(n)]
    core = np.array([len(nb) >= min_pts for nb in neighbors])
    # transitive closure of density reachability from each core point
    reach = {i: set() for i in range(n)}
    for i in range(n):
        if not core[i]:
            continue
        seen = {i}
        stack = [i]
        while stack:
            j = stack.pop()
            for q in neighbors[j]:
                if q not in seen:
                    seen.add(q)
                    if core[q]:
                        stack.append(q)
        reach[i] = seen
    return core, reach


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_dbscan_reachability_semantics(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 4, size=(40, 2))
    res = dbscan(X, eps=0.8, min_pts=4)
    core, reach = _reachability_oracle(X, 0.8, 4)
    np.testing.assert_array_equal(res.core_mask, core)
    for i in range(40):
        if res.labels[i] == -1:
            assert not any(i in reach[c] for c in range(40) if core[c])
        else:
            same = [c for c in range(40) if core[c] and res.labels[c] == res.labels[i]]
            assert any(i in reach[c] for c in same)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_dbscan_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    # well-separated blobs: border ties cannot occur
    centers = np.array([[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]])
    X = np.vstack([c + rng.normal(0, 0.3, size=(15, 2)) for c in centers])
    res = dbscan(X, eps=1.2, min_pts=4)
    perm = rng.permutation(X.shape[0])
    res_p = dbscan(X[perm], eps=1.2, min_pts=4)
    back = np.empty_like(res_p.labels)
    back[perm] = res_p.labels
    assert res.n_noise == res_p.n_noise
    np.testing.assert_array_equal(back == -1, res.labels == -1)
    # identical partitions modulo label names
    for lab in set(res.labels) - {-1}:
        members = res.labels == lab
        assert len(set(back[members])) == 1


def test_dbscan_validation():
    with pytest.raises(ConfigurationError):
        dbscan(np.ones((3, 2)), eps=0.0)
    with pytest.raises(ConfigurationError):
        dbscan(np.ones((3, 2)), min_pts=0)
    with pytest.raises(ValueError):
        dbscan(np.array([[np.nan, 1.0]]))


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------


def test_logreg_separable_ranking():
    X = np.array([[-1.0], [-1.2], [-0.8], [1.0], [1.2], [0.8]])
    y = np.array([0, 0, 0, 1, 1, 1])
    model = logreg_fit(X, y, epochs=500, lr=0.5)
    p = logreg_score(model, X)
    assert p[y == 1].min() > p[y == 0].max()


def test_logreg_zero_epochs_gives_half():
    X = np.array([[0.0], [1.0]])
    y = np.array([0, 1])
    model = logreg_fit(X, y, epochs=0)
    np.testing.assert_array_equal(logreg_score(model, X), [0.5, 0.5])


def test_logreg_conflicting_duplicates_match_frequency():
    # ten copies of one point, 7 positive: optimum of the (bias-only,
    # weights zeroed by the constant-column guard) objective is p = 0.7
    X = np.full((10, 2), 4.2)
    y = np.array([1] * 7 + [0] * 3)
    model = logreg_fit(X, y, epochs=3000, lr=0.5, l2=1e-4)
    p = logreg_score(model, X)
    np.testing.assert_allclose(p, 0.7, atol=1e-3)


def test_logreg_single_class_errors():
    with pytest.raises(TrainingError):
        logreg_fit(np.ones((4, 1)), np.ones(4))


def test_logreg_objective_non_increasing():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(50, 3))
    y = (X[:, 0] + 0.3 * rng.normal(size=50) > 0).astype(float)
    model = logreg_fit(X, y, epochs=200, lr=0.2)
    assert np.all(np.diff(model.loss_trace) <= 1e-9)


def test_logreg_scaler_round_trip_preserves_ranking():
    rng = np.random.default_rng(9)
    X = rng.uniform(0, 10, size=(30, 4))
    y = (X[:, 1] > 5).astype(float)
    model = logreg_fit(X, y, epochs=200)
    p1 = logreg_score(model, X)
    # manual transform with the stored scaler equals the model's own path
    Xs = apply_scaler(model.scaler, X)
    z = Xs @ model.weights + model.bias
    np.testing.assert_allclose(p1, 1 / (1 + np.exp(-z)), atol=1e-12)


# ---------------------------------------------------------------------------
# focal loss
# ---------------------------------------------------------------------------


def test_focal_gamma_zero_is_bce():
    rng = np.random.default_rng(10)
    p = rng.uniform(0.01, 0.99, size=50)
    y = rng.integers(0, 2, size=50)
    loss, grad, hess = focal_loss(p, y, gamma=0.0)
    bce = -np.where(y == 1, np.log(p), np.log(1 - p))
    np.testing.assert_allclose(loss, bce, atol=1e-12)
    np.testing.assert_allclose(grad, p - y, atol=1e-12)
    np.testing.assert_allclose(hess, p * (1 - p), atol=1e-12)


def test_focal_perfect_prediction_zero_loss():
    loss, grad, hess = focal_loss(1.0, 1, gamma=2.0)
    assert loss == 0.0 and grad == 0.0 and hess == 0.0
    loss0, _, _ = focal_loss(0.0, 0, gamma=2.0)
    assert loss0 == 0.0


def test_focal_half_value():
    loss, _, _ = focal_loss(0.5, 1, gamma=2.0)
    assert loss == pytest.approx(0.25 * np.log(2), abs=1e-12)


def test_focal_domain_errors():
    with pytest.raises(DomainError):
        focal_loss(1.2, 1)
    with pytest.raises(DomainError):
        focal_loss(0.0, 1)
    with pytest.raises(DomainError):
        focal_loss(1.0, 0)


def test_focal_grad_hess_match_finite_differences():
    # differentiate through the logit: p = sigmoid(z)
    def loss_of_z(z, y, gamma):
        p = 1 / (1 + np.exp(-z))
        return focal_loss(p, y, gamma)[0]

    step = 1e-4
    for gamma in (0.0, 0.5, 1.0, 2.0, 5.0):
        for y in (0, 1):
            for z in np.linspace(-4, 4, 17):
                p = 1 / (1 + np.exp(-z))
                _, grad, hess = focal_loss(p, y, gamma)
                fd_g = (loss_of_z(z + step, y, gamma) - loss_of_z(z - step, y, gamma)) / (2 * step)
                fd_h = (
                    loss_of_z(z + step, y, gamma)
                    - 2 * loss_of_z(z, y, gamma)
                    + loss_of_z(z - step, y, gamma)
                ) / step**2
                assert abs(grad - fd_g) <= 1e-6 * max(abs(fd_g), 1.0)
                assert abs(hess - fd_h) <= 1e-5 * max(abs(fd_h), 1.0)


# ---------------------------------------------------------------------------
# boosted trees
# ---------------------------------------------------------------------------


def axis_toy(seed=0, n=80):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 3))
    y = (X[:, 0] > 0).astype(float)
    return X, y


def test_gbdt_separable_training_auc():
    X, y = axis_toy(seed=1)
    model = gbdt_fit(X, y, iterations=10, depth=3, learning_rate=0.3)
    p = gbdt_score(model, X)
    assert p[y == 1].min() > p[y == 0].max()


def test_gbdt_stump_two_distinct_probabilities():
    X, y = axis_toy(seed=2)
    model = gbdt_fit(X, y, iterations=1, depth=1)
    p = gbdt_score(model, X)
    assert np.unique(p).size == 2


def test_gbdt_logloss_non_increasing_small_lr():
    X, y = axis_toy(seed=3)
    model = gbdt_fit(X, y, iterations=40, depth=3, learning_rate=0.1)
    trace = np.array(model.loss_trace)
    assert trace.size == 41
    assert np.all(np.diff(trace) <= 1e-9)


def test_gbdt_deterministic():
    X, y = axis_toy(seed=4)
    a = gbdt_fit(X, y, iterations=5, depth=4)
    b = gbdt_fit(X, y, iterations=5, depth=4)
    np.testing.assert_array_equal(gbdt_score(a, X), gbdt_score(b, X))


def test_gbdt_single_class_errors():
    with pytest.raises(TrainingError):
        gbdt_fit(np.ones((4, 2)), np.zeros(4))


def test_gbdt_depth_respected():
    X, y = axis_toy(seed=5)
    model = gbdt_fit(X, y, iterations=3, depth=2)
    for tree in model.trees:
        # a depth-2 tree has at most 7 nodes
        assert tree.n_nodes <= 7


def test_gbdt_generalizes_to_test_rows():
    X, y = axis_toy(seed=6, n=200)
    model = gbdt_fit(X[:150], y[:150], iterations=40, depth=3, learning_rate=0.3)
    p = gbdt_score(model, X[150:])
    yte = y[150:]
    assert (p[yte == 1].mean() - p[yte == 0].mean()) > 0.5


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def test_detector_round_trip_kmeans(tmp_path):
    X, _ = two_blobs(seed=11)
    model = kmeans_fit(X, k=2, seed=1)
    save_detector(model, tmp_path / "km.bin")
    loaded = load_detector(tmp_path / "km.bin")
    _, m1 = kmeans_assign(model, X)
    _, m2 = kmeans_assign(loaded, X)
    np.testing.assert_array_equal(m1, m2)


def test_detector_round_trip_logreg(tmp_path):
    X = np.array([[-1.0], [1.0], [-0.5], [0.5]])
    y = np.array([0, 1, 0, 1])
    model = logreg_fit(X, y, epochs=50)
    save_detector(model, tmp_path / "lr.bin")
    loaded = load_detector(tmp_path / "lr.bin")
    np.testing.assert_array_equal(logreg_score(model, X), logreg_score(loaded, X))


def test_detector_round_trip_gbdt(tmp_path):
    X, y = axis_toy(seed=12)
    model = gbdt_fit(X, y, iterations=4, depth=3)
    save_detector(model, tmp_path / "gb.bin")
    loaded = load_detector(tmp_path / "gb.bin")
    np.testing.assert_array_equal(gbdt_score(model, X), gbdt_score(loaded, X))
