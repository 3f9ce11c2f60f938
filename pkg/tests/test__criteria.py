import math

import numpy as np
import pytest

from lcc_mixtures.contrast import ContrastValues, map_classify, responsibilities
from lcc_mixtures.criteria import (
    PENALTY_SHAPES,
    CriterionSelector,
    CriterionTable,
    bic_penalty,
    check_penalty_family,
    compute_criteria,
    penalty_grid,
    select_k,
)
from lcc_mixtures.custom_exceptions import ConfigurationError, CriterionInputError, UnknownCriterionError
from lcc_mixtures.estimation import Estimator, FitConfig, FitResult, fit_estimators
from lcc_mixtures.models import Bounds, MixtureParams, ModelFamily, ModelSpec

FAMILY = ModelFamily("full", "free", Bounds(1e-3, 1e-4, 1e4, ((-10.0, 10.0),)))

# K: (log L at the MLE, Ent at the MLE, sum log tau at MAP labels, Lcc at the MLccE)
FIT_VALUES = {
    1: (-300.0, 0.0, 0.0, -300.0),
    2: (-250.0, 10.0, -3.0, -258.0),
    3: (-240.0, 40.0, -20.0, -280.0),
}


def make_fit(K, estimator, log_lik, entropy, map_log_tau):
    params = MixtureParams.univariate(np.full(K, 1.0 / K), np.arange(K, dtype=float), np.ones(K))
    return FitResult(
        params=params,
        contrast=ContrastValues(log_lik, entropy, log_lik - entropy),
        converged=True,
        n_iters=1,
        restart_index=0,
        estimator=estimator,
        spec=ModelSpec(FAMILY, K, 1),
        map_log_tau=map_log_tau,
    )


@pytest.fixture
def fits():
    mle = [make_fit(K, Estimator.MLE, ll, ent, mlt) for K, (ll, ent, mlt, _) in FIT_VALUES.items()]
    mlcce = [make_fit(K, Estimator.MLCCE, ll, ll - lcc, mlt) for K, (ll, ent, mlt, lcc) in FIT_VALUES.items()]
    return mle, mlcce


def test_compute_criteria_values(fits):
    table = compute_criteria(*fits, n=100)
    half_log_n = 0.5 * math.log(100)
    row = table.row(2)
    assert row.D_K == 5
    assert row.aic == pytest.approx(-250.0 - 5)
    assert row.bic == pytest.approx(-250.0 - 5 * half_log_n)
    assert row.icl_map == pytest.approx(-250.0 - 3.0 - 5 * half_log_n)
    assert row.icl_tau == pytest.approx(-250.0 - 10.0 - 5 * half_log_n)
    assert row.lcc_icl == pytest.approx(-258.0 - 5 * half_log_n)
    assert table.k_values == [1, 2, 3]


def test_likelihood_and_classification_criteria_disagree(fits):
    table = compute_criteria(*fits, n=100)
    assert table.selected["bic"] == 3
    assert table.selected["aic"] == 3
    assert table.selected["icl_tau"] == 2
    assert table.selected["icl_map"] == 2
    assert table.selected["lcc_icl"] == 2


def test_select_k_ties_go_to_the_smallest_k():
    table = CriterionTable(n=10, rows=(), values={"bic": {1: -5.0, 2: -3.0, 3: -3.0}})
    assert select_k(table, "bic") == 2
    flat = CriterionTable(n=10, rows=(), values={"bic": {2: 1.0, 3: 1.0, 4: 1.0}})
    assert select_k(flat, "BIC") == 2
    with pytest.raises(UnknownCriterionError):
        select_k(flat, "icl_tau")


def test_single_k_selects_it(fits):
    mle, mlcce = fits
    table = compute_criteria(mle[:1], mlcce[:1], n=100)
    assert set(table.selected.values()) == {1}


def neg_k(row, n):
    return -row.K


def test_custom_and_dotted_criteria(fits):
    selector = CriterionSelector([neg_k, "icl-tau", "lcc_mixtures.criteria.bic"])
    assert selector.names == ["neg_k", "icl_tau", "lcc_mixtures.criteria.bic"]
    table = compute_criteria(*fits, n=100, selector=selector)
    assert table.selected["neg_k"] == 1
    assert table.values["lcc_mixtures.criteria.bic"] == table.values["bic"]


def test_selector_parsing():
    assert CriterionSelector("all").names == ["aic", "bic", "icl_map", "icl_tau", "lcc_icl"]
    assert CriterionSelector("bic, Lcc-ICL").names == ["bic", "lcc_icl"]
    with pytest.raises(UnknownCriterionError):
        CriterionSelector("nope")
    with pytest.raises(UnknownCriterionError):
        CriterionSelector("no_such_module.criterion")
    with pytest.raises(UnknownCriterionError):
        CriterionSelector("")


def test_compute_criteria_rejects_bad_inputs(fits):
    mle, mlcce = fits
    with pytest.raises(CriterionInputError):
        compute_criteria(mle, mlcce, n=1)
    with pytest.raises(CriterionInputError):
        compute_criteria(mle, mlcce[:2], n=100)
    with pytest.raises(CriterionInputError):
        compute_criteria(mlcce, mlcce, n=100)
    with pytest.raises(CriterionInputError):
        compute_criteria(mle + mle[:1], mlcce, n=100)


def test_bic_penalty():
    assert bic_penalty(100, 4) == pytest.approx(2 * math.log(100))


def test_bic_shaped_penalty_passes_the_checks():
    report = check_penalty_family(penalty_grid("bic", {1: 2, 2: 5, 3: 8}, [100, 1000, 10000]))
    assert report.passed
    assert report.heuristic
    assert report.failures == ()


def test_linear_penalty_fails_the_vanishing_rate():
    report = check_penalty_family(penalty_grid("linear", {1: 2, 2: 5}, [100, 1000, 10000]))
    assert report.positive
    assert not report.vanishing_rate
    assert not report.passed


def test_constant_penalty_fails_divergence():
    report = check_penalty_family(penalty_grid("aic", {1: 2, 2: 5}, [100, 1000, 10000]))
    assert report.vanishing_rate
    assert not report.diverging_differences
    assert check_penalty_family(penalty_grid("sqrt", {1: 2, 2: 5}, [100, 1000])).passed
    assert not check_penalty_family(penalty_grid("constant", {1: 2, 2: 5}, [100, 1000])).passed


def test_penalty_grid_validation():
    with pytest.raises(UnknownCriterionError):
        penalty_grid("cubic", {1: 2}, [10])
    with pytest.raises(ConfigurationError):
        check_penalty_family({100: {1: 1.0, 2: 2.0}})
    with pytest.raises(ConfigurationError):
        check_penalty_family({100: {1: 1.0}, 200: {1: 2.0}})
    assert set(PENALTY_SHAPES) == {"bic", "aic", "linear", "sqrt", "constant"}


def test_criteria_recompose_from_fitted_contrasts():
    rng = np.random.default_rng(88)
    for _ in range(4):
        n = int(rng.integers(60, 150))
        X = (np.where(rng.random(n) < 0.4, -3.0, 2.0) + rng.standard_normal(n)).reshape(-1, 1)
        family = ModelFamily.for_data(X, ["full", "spherical"][rng.integers(2)])
        config = FitConfig(n_restarts=2, max_em_iters=100, max_grad_iters=100, seed=int(rng.integers(2**31)))
        fits = [fit_estimators(X, ModelSpec(family, K, 1), config) for K in (1, 2, 3)]
        table = compute_criteria([mle for mle, _ in fits], [mlcce for _, mlcce in fits], n)
        for (mle, mlcce), row in zip(fits, table.rows):
            penalty = 0.5 * math.log(n) * mle.spec.dimension
            resp = responsibilities(mle.params, X)
            map_log_tau = float(np.sum(resp.log_entries[np.arange(n), map_classify(mle.params, X)]))
            assert row.entropy_mle == pytest.approx(resp.entropy_rows().sum(), abs=1e-9)
            assert abs(row.icl_tau - row.bic + mle.contrast.entropy) < 1e-9
            assert abs(row.bic - (mle.contrast.log_lik - penalty)) < 1e-9
            assert abs(row.aic - (mle.contrast.log_lik - mle.spec.dimension)) < 1e-9
            assert abs(row.icl_map - (mle.contrast.log_lik + map_log_tau - penalty)) < 1e-9
            assert abs(row.lcc_icl - (mlcce.contrast.lcc - penalty)) < 1e-9
        assert table.selected["bic"] == max(table.rows, key=lambda r: (r.bic, -r.K)).K
