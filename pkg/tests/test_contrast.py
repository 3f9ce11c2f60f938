import numpy as np
import pytest
from scipy.stats import norm

from lcc_mixtures.contrast import (
    classification_loglik,
    conditional_classification_loglik,
    entropy,
    entropy_contributions,
    h,
    h_K,
    log_likelihood,
    map_classify,
    responsibilities,
    weighted_contrast,
)
from lcc_mixtures.custom_exceptions import ConfigurationError, DimensionMismatchError, LabelMismatchError
from lcc_mixtures.models import LabelMatrix, MixtureParams


@pytest.fixture
def mixture():
    return MixtureParams.univariate([0.3, 0.7], [0.0, 2.0], [1.0, 1.5])


@pytest.fixture
def data():
    return np.random.default_rng(11).normal(1.0, 1.5, size=(50, 1))


def naive_densities(params, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    return np.stack(
        [w * norm.pdf(x, m[0], np.sqrt(c[0, 0])) for w, m, c in zip(params.weights, params.means, params.covariances)],
        axis=1,
    )


def test_single_component_responsibilities_are_one(data):
    params = MixtureParams.univariate([1.0], [0.0], [1.0])
    resp = responsibilities(params, data)
    assert np.all(resp.entries == 1.0)
    assert entropy(params, data) == 0.0
    values = conditional_classification_loglik(params, data)
    assert values.lcc == values.log_lik


def test_symmetric_pair_midpoint_is_uniform():
    params = MixtureParams.univariate([0.5, 0.5], [-1.0, 1.0], [1.0, 1.0])
    resp = responsibilities(params, [[0.0]])
    np.testing.assert_allclose(resp.entries, [[0.5, 0.5]], rtol=0, atol=1e-15)
    assert entropy_contributions(params, [[0.0]])[0] == pytest.approx(np.log(2.0), abs=1e-12)
    assert map_classify(params, [[0.0]]).tolist() == [0]


def test_responsibilities_match_direct_formula(mixture):
    densities = naive_densities(mixture, [1.0])
    expected = densities / densities.sum()
    np.testing.assert_allclose(responsibilities(mixture, [[1.0]]).entries, expected, rtol=1e-12)


def test_responsibilities_are_stable_far_from_the_means(mixture):
    resp = responsibilities(mixture, [[1e3], [-1e3]])
    assert np.all(np.isfinite(resp.entries))
    np.testing.assert_allclose(resp.entries.sum(axis=1), 1.0)
    assert np.all(np.isfinite(resp.log_entries))


def test_log_likelihood(mixture, data):
    params = MixtureParams.univariate([1.0], [0.0], [1.0])
    assert log_likelihood(params, [[0.0]]) == pytest.approx(-0.9189385332046727, abs=1e-12)
    doubled = np.concatenate([data, data])
    assert log_likelihood(mixture, doubled) == pytest.approx(2 * log_likelihood(mixture, data), rel=1e-14)
    naive = float(np.sum(np.log(naive_densities(mixture, data).sum(axis=1))))
    assert log_likelihood(mixture, data) == pytest.approx(naive, abs=1e-9)


def test_entropy_bounds_and_maximum(mixture, data):
    value = entropy(mixture, data)
    assert 0.0 <= value <= data.shape[0] * np.log(2)
    # identical components leave tau at the prior weights
    same = MixtureParams.univariate([0.25, 0.25, 0.5], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    assert entropy(same, data) == pytest.approx(data.shape[0] * h_K([0.25, 0.25, 0.5]), rel=1e-12)
    uniform = MixtureParams.univariate([1 / 3, 1 / 3, 1 / 3], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    assert entropy(uniform, [[0.4]]) == pytest.approx(np.log(3), rel=1e-12)


def test_entropy_vanishes_for_separated_components():
    params = MixtureParams.univariate([0.5, 0.5], [-100.0, 100.0], [1.0, 1.0])
    data = np.array([[-100.5], [-99.0], [99.2], [101.0]])
    assert entropy(params, data) < 1e-6


def test_lcc_is_log_lik_minus_entropy(mixture, data):
    values = conditional_classification_loglik(mixture, data)
    assert values.lcc == pytest.approx(log_likelihood(mixture, data) - entropy(mixture, data), abs=1e-10)
    assert values.lcc <= values.log_lik


def test_contrast_is_invariant_to_label_switching(mixture, data):
    values = conditional_classification_loglik(mixture, data)
    switched = conditional_classification_loglik(mixture.permuted([1, 0]), data)
    assert switched.lcc == pytest.approx(values.lcc, rel=1e-12)


def test_classification_loglik(mixture, data):
    single = MixtureParams.univariate([1.0], [0.0], [1.0])
    labels = LabelMatrix(np.ones((data.shape[0], 1)))
    assert classification_loglik(single, data, labels) == pytest.approx(log_likelihood(single, data), rel=1e-14)

    map_labels = LabelMatrix.from_labels(map_classify(mixture, data), 2)
    assert classification_loglik(mixture, data, map_labels) <= log_likelihood(mixture, data)

    separated = MixtureParams.univariate([0.5, 0.5], [-100.0, 100.0], [1.0, 1.0])
    points = np.array([[-100.5], [-99.0], [99.2], [101.0]])
    hard = LabelMatrix.from_labels(map_classify(separated, points), 2)
    assert classification_loglik(separated, points, hard) == pytest.approx(
        conditional_classification_loglik(separated, points).lcc, abs=1e-6
    )

    with pytest.raises(LabelMismatchError):
        classification_loglik(mixture, data, LabelMatrix.from_labels([0, 1], 2))


def test_map_classify_single_component(data):
    params = MixtureParams.univariate([1.0], [3.0], [2.0])
    assert np.all(map_classify(params, data) == 0)


def test_weighted_contrast(mixture, data):
    values = conditional_classification_loglik(mixture, data)
    assert weighted_contrast(1.0, mixture, data) == values.log_lik
    assert weighted_contrast(0.5, mixture, data) == pytest.approx(0.5 * values.lcc, rel=1e-14)
    with pytest.raises(ConfigurationError):
        weighted_contrast(1.5, mixture, data)


def test_h_and_h_K():
    assert h(0.0) == 0.0
    assert h(1.0) == 0.0
    assert h(1 / np.e) == pytest.approx(1 / np.e, rel=1e-14)
    assert h_K([0.25] * 4) == pytest.approx(np.log(4), rel=1e-14)
    np.testing.assert_allclose(h(np.array([0.0, 0.5])), [0.0, 0.5 * np.log(2)])
    with pytest.raises(ConfigurationError):
        h(-0.1)
    with pytest.raises(ConfigurationError):
        h(1.5)


def test_dimension_mismatch(mixture):
    with pytest.raises(DimensionMismatchError):
        responsibilities(mixture, np.zeros((3, 2)))


def random_mixture(rng, K, d):
    weights = rng.dirichlet(np.ones(K))
    means = rng.normal(scale=2.0, size=(K, d))
    factors = rng.normal(size=(K, d, d))
    covariances = factors @ factors.transpose(0, 2, 1) + 0.5 * np.eye(d)
    return MixtureParams(weights, means, covariances)


def test_classification_loglik_decomposes_over_random_labels():
    rng = np.random.default_rng(2002)
    for _ in range(100):
        K, d, n = rng.integers(1, 5), rng.integers(1, 4), rng.integers(1, 40)
        params = random_mixture(rng, K, d)
        X = rng.normal(scale=2.0, size=(n, d))
        labels = LabelMatrix.from_labels(rng.integers(0, K, size=n), K)
        resp = responsibilities(params, X)
        expected = log_likelihood(params, X) + float(np.sum(labels.entries * resp.log_entries))
        assert abs(classification_loglik(params, X, labels) - expected) < 1e-9


def test_entropy_stays_within_its_bounds_on_random_mixtures():
    rng = np.random.default_rng(2003)
    for _ in range(1000):
        K, d, n = rng.integers(1, 6), rng.integers(1, 3), rng.integers(1, 20)
        params = random_mixture(rng, K, d)
        X = rng.normal(scale=3.0, size=(n, d))
        value = entropy(params, X)
        assert value >= 0.0
        assert value <= n * np.log(K) + 1e-9
        if K == 1:
            assert value == 0.0


def test_map_labels_follow_the_components_under_label_switching():
    rng = np.random.default_rng(2004)
    for _ in range(50):
        K, d = rng.integers(2, 5), rng.integers(1, 3)
        params = random_mixture(rng, K, d)
        X = rng.normal(scale=2.0, size=(30, d))
        order = rng.permutation(K)
        switched = params.permuted(order)
        np.testing.assert_array_equal(map_classify(switched, X), np.argsort(order)[map_classify(params, X)])
        np.testing.assert_allclose(
            responsibilities(switched, X).entries, responsibilities(params, X).entries[:, order], rtol=0, atol=1e-14
        )
        assert conditional_classification_loglik(switched, X).lcc == pytest.approx(
            conditional_classification_loglik(params, X).lcc, rel=1e-12
        )
