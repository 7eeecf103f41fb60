import numpy as np
import pytest

from data.dataset import ClimateDataset, GridCell
from data.normalizer import area_weighted_mean, area_weights, fit_normalizer, global_mean_series
from utils.errors import DatasetValidationError, ValidationError


def column_dataset(features, targets, lats=(0.0,), feature_names=("x",), target_names=("pr",),
                   log_columns=()):
    """One row per timestep for each cell, in the order given"""
    features = np.asarray(features, dtype=float).reshape(-1, len(feature_names))
    targets = np.asarray(targets, dtype=float).reshape(-1, len(target_names))
    n_cells = len(lats)
    n_times = features.shape[0] // n_cells
    return ClimateDataset.from_arrays(
        time_ids=np.arange(n_times), months=np.arange(n_times) % 12 + 1,
        cells=[GridCell(id=i, lat=lat, lon=0.0) for i, lat in enumerate(lats)],
        features=features, targets=targets,
        feature_names=feature_names, target_names=target_names,
        sample_time=np.repeat(np.arange(n_times), n_cells),
        sample_cell=np.tile(np.arange(n_cells), n_times),
        log_columns=log_columns,
    )


def test_population_statistics_on_train_only():
    ds = column_dataset([1.0, 3.0, 100.0, -50.0], [0.0, 2.0, 7.0, 9.0])
    normalizer = fit_normalizer(ds, [0, 1])

    assert normalizer.feature_mean.tolist() == [2.0]
    assert normalizer.feature_std.tolist() == [1.0]
    assert normalizer.transform_features(np.array([[5.0]]))[0, 0] == pytest.approx(3.0)


def test_test_content_does_not_change_statistics():
    a = column_dataset([1.0, 3.0, 100.0, -50.0], [0.0, 2.0, 7.0, 9.0])
    b = column_dataset([1.0, 3.0, 5.0, 6.0], [0.0, 2.0, -1.0, 4.0])
    assert fit_normalizer(a, [0, 1]).statistics_hash() == fit_normalizer(b, [0, 1]).statistics_hash()


def test_log_column_uses_offset():
    ds = column_dataset([1.0, 2.0], [0.0, 1.0], log_columns=("pr",))
    normalizer = fit_normalizer(ds, [0, 1], epsilon=1e-8)

    logs = np.log(np.array([0.0, 1.0]) + 1e-8)
    assert normalizer.target_mean[0] == pytest.approx(logs.mean())
    assert normalizer.target_std[0] == pytest.approx(logs.std())
    assert normalizer.transform_targets(np.array([[0.0]]))[0, 0] == pytest.approx(
        (np.log(1e-8) - logs.mean()) / logs.std())


def test_negative_value_in_log_column():
    ds = column_dataset([1.0, 2.0], [-1.0, 1.0])
    with pytest.raises(DatasetValidationError, match="pr"):
        fit_normalizer(ds, [0, 1], log_columns=["pr"])


def test_constant_column_is_named():
    ds = column_dataset([4.0, 4.0, 1.0], [0.0, 1.0, 2.0])
    with pytest.raises(DatasetValidationError, match="x"):
        fit_normalizer(ds, [0, 1])


def test_empty_train_index():
    ds = column_dataset([1.0, 2.0], [0.0, 1.0])
    with pytest.raises(ValidationError):
        fit_normalizer(ds, [])


def test_inverse_recovers_values():
    rng = np.random.default_rng(3)
    features = rng.normal(5.0, 2.0, size=(40, 2))
    targets = rng.gamma(2.0, 1.0, size=(40, 1))
    ds = column_dataset(features, targets, feature_names=("a", "b"), log_columns=("pr",))
    normalizer = fit_normalizer(ds, np.arange(30))

    np.testing.assert_allclose(normalizer.inverse_features(normalizer.transform_features(features)),
                               features, rtol=1e-10)
    np.testing.assert_allclose(normalizer.inverse_targets(normalizer.transform_targets(targets)),
                               targets, rtol=1e-10)


def test_residuals_scale_with_target_std():
    ds = column_dataset([1.0, 2.0], [-4.0, 4.0])
    normalizer = fit_normalizer(ds, [0, 1])
    assert normalizer.target_std[0] == 4.0
    assert normalizer.denormalise_residuals(np.array([[0.25]]))[0, 0] == 1.0


def test_area_weighted_mean():
    cells = [GridCell(id=0, lat=0.0, lon=0.0), GridCell(id=1, lat=60.0, lon=0.0)]
    np.testing.assert_allclose(area_weights(cells), [2.0 / 3.0, 1.0 / 3.0], rtol=1e-12)
    assert area_weighted_mean([3.0, 6.0], cells) == pytest.approx(4.0)


def test_area_weights_same_latitude_and_single_cell():
    same = [GridCell(id=i, lat=20.0, lon=10.0 * i) for i in range(4)]
    assert area_weighted_mean([1.0, 2.0, 3.0, 6.0], same) == pytest.approx(3.0)
    assert area_weighted_mean([7.5], same[:1]) == 7.5
    assert area_weights(same).sum() == pytest.approx(1.0, abs=1e-12)


def test_all_polar_grid_is_rejected():
    cells = [GridCell(id=0, lat=90.0, lon=0.0), GridCell(id=1, lat=-90.0, lon=0.0)]
    with pytest.raises(ValidationError):
        area_weights(cells)


def test_global_mean_series_weights_each_timestep():
    ds = column_dataset([3.0, 6.0, 0.0, 3.0], [1.0, 1.0, 2.0, 2.0], lats=(0.0, 60.0))
    times, series = global_mean_series(ds, np.arange(4), ["x", "pr"])

    assert times.tolist() == [0, 1]
    np.testing.assert_allclose(series[:, 0], [4.0, 1.0])
    np.testing.assert_allclose(series[:, 1], [1.0, 2.0])
