import numpy as np
import pytest

from mbalance import balancer, simlab, tuning
from mbalance.diagnostics import asmd, gmim
from mbalance.errors import AllSolvesFailed, NumericalError, ValidationError
from mbalance.features import FeatureMatrix
from mbalance.metric import build_metric, pooled_covariance

from conftest import make_sample, random_sample


def w1(f, s):
    return build_metric("W1", pooled_covariance(f, s))


def test_default_grid_and_fixed_policy():
    assert tuning.DeltaGrid().values == (1.0, 0.1, 0.01, 1e-3, 1e-4, 1e-5, 1e-6)
    assert tuning.fixed_delta_policy() == 1e-4


@pytest.mark.parametrize("values", [(), (1.0, 1.0), (1e-3, 1e-2), (1.0, 0.0), (float("inf"),)])
def test_grid_validation(values):
    with pytest.raises(ValidationError):
        tuning.DeltaGrid(values)


def test_ties_go_to_largest_delta():
    X = np.array([[-1.0], [1.0], [-2.0], [2.0], [-3.0], [3.0], [0.5], [-0.5]])
    s = make_sample(X, [1, 1, 1, 1, 0, 0, 0, 0])
    f = FeatureMatrix.from_values(X)
    for group in (0, 1):
        tr = tuning.select_delta(f, s, group, w1(f, s))
        assert all(r.at_origin and r.gmim == 0.0 for r in tr.records)
        assert tr.chosen_delta == 1.0


def test_choice_is_brute_force_argmin():
    s = random_sample(6, n=150, p=4)
    f = FeatureMatrix.from_values(s.covariates)
    m = w1(f, s)
    for group in (0, 1):
        tr = tuning.select_delta(f, s, group, m)
        values = [gmim(f, s, group, balancer.solve_group(f, s, group, m, d).weights, m) for d in tuning.DEFAULT_GRID]
        assert tr.chosen_gmim == pytest.approx(min(values), abs=1e-15)
        best = min(range(len(values)), key=lambda i: (values[i], i))
        assert tr.chosen_delta == tuning.DEFAULT_GRID[best]
        assert all(tr.chosen_gmim <= r.gmim for r in tr.records if not r.failed)


def test_smaller_delta_no_worse_on_good_overlap():
    s = random_sample(12, n=200, p=3, shift=0.2)
    f = FeatureMatrix.from_values(s.covariates)
    tr = tuning.select_delta(f, s, 1, w1(f, s))
    by = {r.delta: r.gmim for r in tr.records}
    assert by[1e-6] <= by[1.0] + 1e-9


def test_failed_solves_are_excluded():
    s = random_sample(7, n=60)
    f = FeatureMatrix.from_values(s.covariates)

    def flaky(features, sample, group, metric, delta, target=None):
        if delta < 0.5:
            raise NumericalError("boom")
        return balancer.solve_group(features, sample, group, metric, delta, target=target)

    tr = tuning.select_delta(f, s, 1, w1(f, s), solve=flaky)
    assert tr.chosen_delta == 1.0
    assert sum(r.failed for r in tr.records) == 6

    def broken(*a, **k):
        raise NumericalError("boom")

    with pytest.raises(AllSolvesFailed):
        tuning.select_delta(f, s, 1, w1(f, s), solve=broken)


def test_kink_rule_synthetic():
    assert tuning.detect_kink([0.2] * 8) == (8, None)
    assert tuning.detect_kink([0.1, 0.1, 0.1, 0.5, 0.6, 0.7]) == (3, 4)
    # jumps below the floor do not count
    assert tuning.detect_kink([1e-12, 1e-10, 1e-9]) == (3, None)
    assert tuning.detect_kink([0.1, 0.25], kappa=3.0) == (2, None)


def test_ranking_by_descending_asmd():
    s = random_sample(3, n=100, p=6)
    order = tuning.rank_by_asmd(s)
    a = asmd(FeatureMatrix.from_values(s.covariates), s)
    assert sorted(order) == list(range(6))
    assert all(a[i] >= a[j] for i, j in zip(order, order[1:]))


def test_ranking_ties_by_column_index():
    X = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0], [2.0, 2.0, 5.0], [3.0, 3.0, 1.0]])
    s = make_sample(X, [1, 1, 0, 0])
    assert tuning.rank_by_asmd(s)[:2] == (0, 1)


def test_hdmb_trace_shape():
    s = random_sample(5, n=120, p=8, shift=0.4)
    tr = tuning.hdmb(s)
    assert 1 <= tr.k0 <= s.p
    assert tr.features.k == tr.k0
    assert tr.selected == tr.order[: tr.k0]
    assert [st.j for st in tr.steps] == list(range(1, len(tr.steps) + 1))
    for st in tr.steps:
        assert st.gmim1_adjusted == pytest.approx(st.gmim1 / st.j)
    assert tr.kink_found == (tr.kink_step is not None)
    assert set(tr.solutions()) == {0, 1}


@pytest.mark.xfail(strict=True, reason="adjusted GMIM stays near zero until exact balance breaks down, "
                                       "so the first kink comes well after sqrt(p) on this design")
def test_hdmb_scenario_e_k0_near_sqrt_p():
    spec = simlab.scenario("E")
    ks = [tuning.hdmb(simlab.generate(spec, 0, r)).k0 for r in range(10)]
    assert 3 <= np.median(ks) <= 30
