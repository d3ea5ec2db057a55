import numpy as np
import pytest

from mbalance.errors import FactorizationFailed, GroupTooSmall, NotSymmetric, ValidationError
from mbalance.features import FeatureMatrix, FeatureSpec, evaluate
from mbalance.metric import W1, W2, build_metric, metric_kind, pooled_covariance
from mbalance import simlab

from conftest import make_sample, random_sample


def test_pooled_covariance_hand_values():
    s = make_sample([[0.0], [2.0], [1.0], [3.0]], [1, 1, 0, 0])
    S = pooled_covariance(FeatureMatrix.from_values(s.covariates), s)
    assert S.shape == (1, 1) and S[0, 0] == 2.0


def test_pooled_covariance_constant_features():
    s = make_sample(np.ones((6, 3)), [1, 1, 1, 0, 0, 0])
    assert np.array_equal(pooled_covariance(FeatureMatrix.from_values(s.covariates), s), np.zeros((3, 3)))


def test_pooled_covariance_group_too_small():
    s = make_sample([[0.0], [1.0], [2.0], [3.0]], [1, 0, 0, 0])
    with pytest.raises(GroupTooSmall):
        pooled_covariance(FeatureMatrix.from_values(s.covariates), s)


def test_pooled_covariance_scenario_B():
    s = simlab.generate(simlab.scenario("B"), 5)
    S = pooled_covariance(evaluate(FeatureSpec("interactions"), s), s)
    assert S.shape == (45, 45) and np.all(np.diag(S) > 0)


def test_identity_metric():
    for kind in ("W1", "W2"):
        m = build_metric(kind, np.eye(3))
        assert np.allclose(m.root, np.eye(3)) and np.allclose(m.matrix, np.eye(3))
        assert m.ridge_used == 0.0


def test_w1_root_hand_value():
    m = build_metric("W1", np.array([[4.0, 0.0], [0.0, 1.0]]))
    assert np.allclose(m.root, np.diag([0.5, 1.0]))
    assert m.kind == W1


def test_w2_reconstructs_inverse():
    A = np.random.default_rng(1).standard_normal((5, 5))
    S = A @ A.T + 0.1 * np.eye(5)
    m = build_metric("W2", S)
    assert m.kind == W2
    W = m.root.T @ m.root
    assert np.linalg.norm(W - np.linalg.inv(S)) / np.linalg.norm(W) < 1e-8
    assert np.allclose(m.matrix, m.matrix.T)
    assert np.all(np.linalg.eigvalsh(m.matrix) > 0)


def test_w2_singular_uses_ridge():
    X = np.random.default_rng(2).standard_normal((40, 2))
    s = make_sample(np.column_stack([X, X[:, 0]]), [1] * 20 + [0] * 20)
    S = pooled_covariance(FeatureMatrix.from_values(s.covariates), s)
    m = build_metric("W2", S)
    assert m.ridge_used > 0 and m.warning
    L = np.linalg.inv(m.root)
    assert np.allclose(L @ L.T, S + m.ridge_used * np.eye(3), rtol=1e-8, atol=1e-12)


def test_w2_ladder_exhausted():
    for S in (np.zeros((3, 3)), np.diag([1.0, -0.5])):
        with pytest.raises(FactorizationFailed):
            build_metric("W2", S)


def test_w1_floor_for_constant_feature():
    m = build_metric("W1", np.diag([1.0, 0.0]))
    assert np.all(np.isfinite(m.root))
    assert m.root[1, 1] == pytest.approx(1.0 / np.sqrt(1e-12))


def test_not_symmetric():
    with pytest.raises(NotSymmetric):
        build_metric("W2", np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_unknown_kind():
    with pytest.raises(ValidationError):
        metric_kind("W3")


def test_root_convention_does_not_matter():
    # Any root R with W = R'R gives the same quadratic form; compare L^{-1} with the symmetric root.
    s = random_sample(3, n=80, p=4)
    f = FeatureMatrix.from_values(s.covariates)
    m = build_metric("W2", pooled_covariance(f, s))
    vals, vecs = np.linalg.eigh(m.matrix)
    sym = vecs @ np.diag(np.sqrt(vals)) @ vecs.T
    d = np.random.default_rng(0).standard_normal(4)
    assert np.sum(m.rotate(d) ** 2) == pytest.approx(np.sum((sym @ d) ** 2), rel=1e-10)
