import numpy as np
import pytest

from shift_analysis.pca import pca_fit, pca_project
from utils.errors import EstimatorError


def test_line_data_has_one_component():
    t = np.linspace(-2.0, 3.0, 50)
    X = np.column_stack([t, t])

    model = pca_fit(X, q=1)

    np.testing.assert_allclose(model.components[:, 0], np.array([1.0, 1.0]) / np.sqrt(2.0), atol=1e-12)
    assert model.explained_variance_ratio[0] == pytest.approx(1.0)


def test_line_data_cannot_keep_two_components():
    t = np.linspace(-2.0, 3.0, 50)
    with pytest.raises(EstimatorError, match="rank"):
        pca_fit(np.column_stack([t, 2.0 * t]), q=2)


def test_isotropic_gaussian_splits_variance_evenly():
    X = np.random.default_rng(0).normal(size=(10000, 2))
    model = pca_fit(X, q=2)
    np.testing.assert_allclose(model.explained_variance_ratio, [0.5, 0.5], atol=0.05)


def test_components_are_orthonormal_and_ordered():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(500, 5)) * np.array([5.0, 3.0, 2.0, 1.0, 0.5])
    model = pca_fit(X, q=3)

    np.testing.assert_allclose(model.components.T @ model.components, np.eye(3), atol=1e-8)
    ratios = model.explained_variance_ratio
    assert np.all(np.diff(ratios) <= 0)
    assert np.all((ratios >= 0) & (ratios <= 1))
    for j in range(3):
        column = model.components[:, j]
        assert column[np.argmax(np.abs(column))] > 0


def test_projection_centres_on_fitted_mean():
    rng = np.random.default_rng(2)
    X = rng.normal(3.0, 1.0, size=(100, 3))
    model = pca_fit(X)
    np.testing.assert_allclose(pca_project(model, model.mean[None, :]).data, np.zeros((1, 2)), atol=1e-12)
    assert pca_project(model, rng.normal(size=(7, 3))).data.shape == (7, 2)


def test_invalid_requests():
    X = np.random.default_rng(3).normal(size=(3, 2))
    with pytest.raises(EstimatorError):
        pca_fit(X, q=3)
    with pytest.raises(EstimatorError):
        pca_fit(X[:2], q=2)
    model = pca_fit(np.random.default_rng(4).normal(size=(20, 3)))
    with pytest.raises(EstimatorError):
        pca_project(model, np.zeros((2, 4)))
