import numpy as np
import pytest

from mbalance import estimator
from mbalance.errors import EmptyGroup, MissingOutcome, TooManyFailedReplicates, ValidationError
from mbalance.estimator import PipelineConfig, ate, atc_target_mean, bootstrap_se, estimate, fit
from mbalance.features import FeatureMatrix, FeatureSpec

from conftest import make_sample, random_sample


def test_ate_hand_example():
    s = make_sample(np.zeros((4, 1)), [1, 1, 0, 0], [2.0, 4.0, 1.0, 3.0])
    assert ate(s, np.array([0.25, 0.75, 0.5, 0.5])) == pytest.approx(1.5)


def test_ate_uniform_is_difference_in_means(toy):
    f = fit(toy, PipelineConfig(method="uniform"))
    T, Y = toy.treatment, toy.outcome
    assert ate(toy, f.solutions) == pytest.approx(Y[T == 1].mean() - Y[T == 0].mean(), rel=1e-12)


def test_ate_constant_outcome_is_zero(toy):
    s = make_sample(toy.covariates, toy.treatment, np.full(toy.n, 7.5))
    assert abs(ate(s, fit(s).solutions)) <= 1e-12


def test_ate_linear_in_outcome(toy):
    f = fit(toy)
    base = ate(toy, f.solutions)
    moved = make_sample(toy.covariates, toy.treatment, -2.5 * toy.outcome + 11.0)
    assert ate(moved, f.solutions) == pytest.approx(-2.5 * base, rel=1e-10, abs=1e-12)


def test_ate_requires_outcome():
    s = random_sample(0, outcome=False)
    with pytest.raises(MissingOutcome):
        ate(s, np.full(s.n, 0.1))


def test_atc_target_mean_examples():
    s = make_sample([[1.0, 1.0], [3.0, 3.0], [9.0, 9.0]], [0, 0, 1])
    f = FeatureMatrix.from_values(s.covariates)
    np.testing.assert_allclose(atc_target_mean(f, s), [2.0, 2.0])
    allc = make_sample([[1.0], [2.0], [6.0]], [0, 0, 0])
    fc = FeatureMatrix.from_values(allc.covariates)
    np.testing.assert_allclose(atc_target_mean(fc, allc), fc.pooled_mean)
    allt = make_sample([[1.0], [2.0]], [1, 1])
    with pytest.raises(EmptyGroup):
        atc_target_mean(FeatureMatrix.from_values(allt.covariates), allt)


def test_atc_matches_ate_when_groups_coincide():
    diffs = []
    for seed in range(20):
        s = random_sample(seed, n=200, p=3, shift=0.0)
        diffs.append(estimate(s).point - estimate(s, PipelineConfig(estimand="ATC")).point)
    assert abs(np.mean(diffs)) < 0.05
    assert np.std(diffs) < 0.1


def test_atc_control_weights_stay_uniform(toy):
    f = fit(toy, PipelineConfig(estimand="ATC"))
    sol = f.solutions[0]
    assert sol.at_origin
    np.testing.assert_allclose(sol.weights, 1.0 / sol.weights.size)


def test_config_validation():
    with pytest.raises(ValidationError):
        PipelineConfig(metric="W3")
    with pytest.raises(ValidationError):
        PipelineConfig(delta=0.0)
    with pytest.raises(ValidationError):
        PipelineConfig(method="hdmb", features=FeatureSpec("moments2"))
    with pytest.raises(ValidationError):
        PipelineConfig(estimand="ATT")


def test_estimate_fields(toy):
    e = estimate(toy, bootstrap=20, seed=3)
    assert e.estimand == "ATE" and e.bootstrap_reps == 20 and e.se > 0
    assert set(e.deltas) == {0, 1}
    assert e.diagnostics.weights_used == "supplied"
    assert estimate(toy).se is None


def test_default_bootstrap_size():
    assert estimator.DEFAULT_BOOTSTRAP == 500
    import inspect
    assert inspect.signature(bootstrap_se).parameters["B"].default == 500


def test_bootstrap_constant_outcome():
    s = random_sample(1, n=50)
    s = make_sample(s.covariates, s.treatment, np.full(s.n, 3.0))
    point, se = bootstrap_se(s, B=30, seed=0)
    assert point == pytest.approx(0.0, abs=1e-12)
    assert se == pytest.approx(0.0, abs=1e-12)


def test_bootstrap_against_analytic_se():
    rng = np.random.default_rng(0)
    n = 400
    T = rng.integers(0, 2, n)
    s = make_sample(rng.standard_normal((n, 2)), T, 1.0 + 2.0 * rng.standard_normal(n) + T)
    _, se = bootstrap_se(s, PipelineConfig(method="uniform"), B=500, seed=1)
    Y = s.outcome
    analytic = np.sqrt(Y[T == 1].var(ddof=1) / (T == 1).sum() + Y[T == 0].var(ddof=1) / (T == 0).sum())
    assert abs(se / analytic - 1) <= 0.25


def test_bootstrap_deterministic_and_thread_independent(toy):
    a = bootstrap_se(toy, B=16, seed=5)
    b = bootstrap_se(toy, B=16, seed=5)
    c = bootstrap_se(toy, B=16, seed=5, threads=2)
    assert a == b == c
    assert bootstrap_se(toy, B=16, seed=6) != a


def test_frozen_delta_bootstrap(toy):
    a = bootstrap_se(toy, B=10, seed=2, retune=False)
    b = bootstrap_se(toy, B=10, seed=2)
    assert a[0] == b[0]
    assert a[1] > 0


def test_redraw_budget_exhausted():
    s = make_sample([[0.0], [1.0], [2.0], [3.0], [4.0]], [1, 1, 0, 0, 0], [1.0, 2.0, 0.0, 1.0, 0.5])
    with pytest.raises(TooManyFailedReplicates):
        bootstrap_se(s, B=20, seed=0)


def test_bootstrap_needs_two_reps(toy):
    with pytest.raises(ValidationError):
        bootstrap_se(toy, B=1)
