import numpy as np
import pytest

from lcc_mixtures.custom_exceptions import (
    ConfigurationError,
    DegenerateDataError,
    InvalidParametersError,
    LabelMismatchError,
    NonFiniteValueError,
)
from lcc_mixtures.models import (
    Bounds,
    CovarianceStructure,
    LabelMatrix,
    MixtureParams,
    ModelFamily,
    ModelSpec,
    Proportions,
    as_data_matrix,
    count_free_parameters,
    project_components,
    project_to_bounds,
)


def make_family(structure="full", proportions="free", d=1, prop_floor=1e-3, var_floor=1e-4, var_ceil=1e4, box=10.0):
    return ModelFamily(structure, proportions, Bounds(prop_floor, var_floor, var_ceil, ((-box, box),) * d))


@pytest.mark.parametrize(
    "structure, proportions, K, d, expected",
    [
        ("diag", "equal", 2, 2, 8),
        ("diag-eqvol", "equal", 2, 2, 7),
        ("full", "free", 1, 3, 9),
        ("full", "free", 2, 2, 11),
        ("spherical", "free", 3, 2, 11),
        ("diag", "free", 2, 3, 13),
        ("diag-eqvol", "free", 2, 3, 12),
    ],
)
def test_count_free_parameters(structure, proportions, K, d, expected):
    assert count_free_parameters(make_family(structure, proportions, d), K, d) == expected
    assert ModelSpec(make_family(structure, proportions, d), K, d).dimension == expected


def test_count_free_parameters_symmetric_pair():
    family = ModelFamily("spherical", "equal", Bounds(1e-3, 1e-4, 1e4, ((-5, 5),)), symmetric_pair=True)
    assert count_free_parameters(family, 2, 1) == 2


def test_mixture_params_rejects_invalid_values():
    with pytest.raises(InvalidParametersError):
        MixtureParams.univariate([0.5, 0.6], [0.0, 1.0], [1.0, 1.0])
    with pytest.raises(InvalidParametersError):
        MixtureParams.univariate([0.5, 0.5], [0.0, 1.0], [1.0, -1.0])
    with pytest.raises(InvalidParametersError):
        MixtureParams(np.array([1.0]), np.zeros((1, 2)), np.eye(3)[None])
    with pytest.raises(InvalidParametersError):
        MixtureParams(np.array([1.0]), np.zeros((1, 2)), np.array([[[1.0, 0.5], [0.4, 1.0]]]))
    # ConfigurationError is also a ValueError
    with pytest.raises(ValueError):
        MixtureParams.univariate([1.0], [np.nan], [1.0])


def test_mixture_params_are_read_only():
    params = MixtureParams.univariate([0.3, 0.7], [0.0, 2.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        params.means[0, 0] = 5.0


def test_permuted_and_components():
    params = MixtureParams.univariate([0.3, 0.7], [0.0, 2.0], [1.0, 4.0])
    swapped = params.permuted([1, 0])
    assert swapped.weights.tolist() == [0.7, 0.3]
    assert swapped.components[0].covariance[0, 0] == 4.0
    assert swapped.permuted([1, 0]).allclose(params, atol=0)


def test_projection_is_identity_inside_bounds():
    family = make_family(d=2)
    params = MixtureParams(
        np.array([0.4, 0.6]),
        np.array([[-1.0, 0.5], [2.0, -0.5]]),
        np.array([[[1.0, 0.3], [0.3, 2.0]], [[0.5, 0.0], [0.0, 0.5]]]),
    )
    projected = project_to_bounds(params, family)
    assert projected.allclose(params, atol=0)
    assert project_to_bounds(projected, family).allclose(projected, atol=0)


def test_projection_floors_weights():
    family = make_family(prop_floor=0.05)
    params = MixtureParams.univariate([0.999, 0.001], [0.0, 1.0], [1.0, 1.0])
    projected = project_to_bounds(params, family)
    np.testing.assert_allclose(projected.weights, [0.95, 0.05], rtol=0, atol=1e-12)


def test_projection_clamps_variance_and_means():
    family = make_family(var_floor=1e-4, box=3.0)
    params = MixtureParams.univariate([1.0], [7.5], [1e-9])
    projected = project_to_bounds(params, family)
    assert projected.covariances[0, 0, 0] == pytest.approx(1e-4, rel=1e-12)
    assert projected.means[0, 0] == 3.0


def test_projection_clamps_full_covariance_eigenvalues():
    family = make_family(d=2, var_floor=0.1, var_ceil=10.0)
    covariance = np.array([[20.0, 0.0], [0.0, 0.01]])
    params = MixtureParams(np.array([1.0]), np.zeros((1, 2)), covariance[None])
    projected = project_to_bounds(params, family)
    np.testing.assert_allclose(np.linalg.eigvalsh(projected.covariances[0]), [0.1, 10.0], rtol=1e-12)


def test_projection_reduces_to_structure():
    params = MixtureParams(
        np.array([0.5, 0.5]),
        np.zeros((2, 2)),
        np.array([[[1.0, 0.3], [0.3, 3.0]], [[2.0, 0.0], [0.0, 8.0]]]),
    )
    spherical = project_to_bounds(params, make_family("spherical", d=2))
    np.testing.assert_allclose(spherical.covariances[0], 2.0 * np.eye(2))
    np.testing.assert_allclose(spherical.covariances[1], 5.0 * np.eye(2))

    diagonal = project_to_bounds(params, make_family("diag", d=2))
    np.testing.assert_allclose(diagonal.covariances[0], np.diag([1.0, 3.0]))

    equal_volume = project_to_bounds(params, make_family("diag-eqvol", d=2))
    volumes = np.prod(np.diagonal(equal_volume.covariances, axis1=1, axis2=2), axis=1)
    assert volumes[0] == pytest.approx(volumes[1], rel=1e-9)
    assert equal_volume.covariances[0, 0, 1] == 0.0


def test_equal_proportions_projection():
    params = MixtureParams.univariate([0.2, 0.8], [0.0, 1.0], [1.0, 1.0])
    projected = project_to_bounds(params, make_family(proportions=Proportions.EQUAL))
    assert projected.weights.tolist() == [0.5, 0.5]


def test_family_for_data_scales_bounds():
    rng = np.random.default_rng(0)
    data = rng.normal(scale=2.0, size=(500, 1))
    family = ModelFamily.for_data(data)
    assert family.covariance_structure is CovarianceStructure.FULL
    assert family.bounds.var_floor == pytest.approx(1e-4 * data.var())
    low, high = family.bounds.mean_box[0]
    assert low < data.min() and high > data.max()


def test_family_for_data_rejects_constant_data():
    with pytest.raises(DegenerateDataError):
        ModelFamily.for_data(np.ones((10, 2)))


def test_family_checks():
    with pytest.raises(ConfigurationError):
        ModelFamily("full", "equal", Bounds(1e-3, 1e-4, 1e4, ((-1, 1),)), symmetric_pair=True)
    with pytest.raises(ConfigurationError):
        ModelSpec(make_family(prop_floor=0.5), 3, 1)
    with pytest.raises(ConfigurationError):
        Bounds(0.0, 1e-4, 1e4, ((-1, 1),))
    with pytest.raises(ConfigurationError):
        Bounds(1e-3, 1.0, 0.5, ((-1, 1),))


def test_as_data_matrix():
    assert as_data_matrix([1.0, 2.0, 3.0]).shape == (3, 1)
    with pytest.raises(NonFiniteValueError) as excinfo:
        as_data_matrix([[1.0, 2.0], [3.0, np.inf]])
    assert (excinfo.value.line, excinfo.value.column) == (2, 2)


def test_label_matrix():
    labels = LabelMatrix.from_labels([0, 2, 1], 3)
    assert labels.labels.tolist() == [0, 2, 1]
    with pytest.raises(LabelMismatchError):
        LabelMatrix(np.array([[1, 1], [0, 1]]))
    with pytest.raises(LabelMismatchError):
        LabelMatrix.from_labels([0, 3], 3)


def random_raw_components(rng, K, d):
    weights = rng.dirichlet(np.ones(K)) * rng.uniform(0.5, 2.0)
    weights[rng.random(K) < 0.3] = 1e-6
    means = rng.normal(scale=15.0, size=(K, d))
    rotations = np.linalg.qr(rng.normal(size=(K, d, d)))[0]
    eigenvalues = np.exp(rng.uniform(-15.0, 15.0, size=(K, d))) * rng.choice([-1.0, 1.0], size=(K, d), p=[0.2, 0.8])
    covariances = (rotations * eigenvalues[:, None, :]) @ rotations.transpose(0, 2, 1)
    return weights, means, covariances


@pytest.mark.parametrize("structure", ["spherical", "diag", "diag-eqvol", "full"])
@pytest.mark.parametrize("proportions", ["free", "equal"])
def test_projection_of_random_raw_estimates_is_feasible_and_idempotent(structure, proportions):
    rng = np.random.default_rng(31)
    floor, ceil = 1e-4, 1e4
    for _ in range(40):
        K, d = rng.integers(1, 6), rng.integers(1, 4)
        family = make_family(structure, proportions, d=d, var_floor=floor, var_ceil=ceil)
        weights, means, covariances = project_components(*random_raw_components(rng, K, d), family)

        assert weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(weights >= family.bounds.prop_floor * (1 - 1e-12))
        if proportions == "equal":
            np.testing.assert_allclose(weights, 1.0 / K, rtol=0, atol=1e-15)
        assert np.all(np.abs(means) <= 10.0)
        eigenvalues = np.linalg.eigvalsh(covariances)
        assert np.all(eigenvalues >= floor * (1 - 1e-9) - 1e-10 * ceil)
        assert np.all(eigenvalues <= ceil * (1 + 1e-9))
        if structure != "full":
            assert np.all(covariances == np.diagonal(covariances, axis1=1, axis2=2)[:, :, None] * np.eye(d))
        if structure == "spherical":
            diagonals = np.diagonal(covariances, axis1=1, axis2=2)
            assert np.all(diagonals == diagonals[:, :1])
        if structure == "diag-eqvol":
            volumes = np.log(np.diagonal(covariances, axis1=1, axis2=2)).sum(axis=1)
            np.testing.assert_allclose(volumes, volumes[0], rtol=0, atol=1e-8)

        again = project_components(weights, means, covariances, family)
        np.testing.assert_allclose(again[0], weights, rtol=0, atol=1e-15)
        np.testing.assert_array_equal(again[1], means)
        np.testing.assert_allclose(again[2], covariances, rtol=1e-9, atol=1e-10 * ceil)


def test_projection_of_random_symmetric_pairs():
    rng = np.random.default_rng(32)
    for _ in range(40):
        d = rng.integers(1, 4)
        family = ModelFamily("spherical", "equal", Bounds(1e-3, 1e-4, 1e4, ((-10.0, 10.0),) * d), symmetric_pair=True)
        weights, means, covariances = project_components(*random_raw_components(rng, 2, d), family)
        assert weights.tolist() == [0.5, 0.5]
        np.testing.assert_array_equal(means[0], -means[1])
        assert np.all(np.abs(means) <= 10.0)
        np.testing.assert_array_equal(covariances[0], covariances[1])
        again = project_components(weights, means, covariances, family)
        np.testing.assert_array_equal(again[1], means)
        np.testing.assert_allclose(again[2], covariances, rtol=1e-12)
