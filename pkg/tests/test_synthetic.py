import numpy as np
import pytest
from pydantic import ValidationError as PydanticValidationError

from data.partition import partition
from data.synthetic import generate_synthetic, planted_mapping
from database.models import PartitionSpec, SyntheticConfig
from physics.radiation import INPUT_NAMES, RadiationInputs
from shift_analysis.divergence import energy_distance


def seasonal_groups(ds):
    return partition(ds, PartitionSpec(temporal="season"))


def test_covariate_layout(covariate_dataset):
    ds = covariate_dataset
    assert ds.n_samples == 3 * 12 * 3 * 4
    assert ds.feature_names == ("x0", "x1", "x2")
    assert ds.target_names == ("y",)
    assert ds.years.min() == 1979 and ds.years.max() == 1981


def test_same_seed_same_data():
    config = SyntheticConfig(n_years=1, n_lat=2, n_lon=2)
    assert generate_synthetic(config, 5).content_hash() == generate_synthetic(config, 5).content_hash()
    assert generate_synthetic(config, 5).content_hash() != generate_synthetic(config, 6).content_hash()


def test_mapping_is_shared_by_all_groups():
    config = SyntheticConfig(n_years=2, n_lat=2, n_lon=3, shift_magnitude=2.0, noise=0.0, mapping="sine")
    ds = generate_synthetic(config, 1)
    np.testing.assert_allclose(ds.targets[:, 0], planted_mapping(ds.features, "sine"), atol=1e-12)


def test_ed_grows_with_shift_magnitude():
    values = []
    for magnitude in (1.0, 2.0, 4.0):
        config = SyntheticConfig(n_years=2, n_lat=2, n_lon=3, shift_magnitude=magnitude)
        ds = generate_synthetic(config, 0)
        groups = seasonal_groups(ds)
        X, Y = ds.features[groups["DJF"]], ds.features[groups["JJA"]]
        estimate = energy_distance(X, Y, pair_budget=10 ** 9)
        assert estimate.exact
        values.append(estimate.value)
    assert values[0] < values[1] < values[2]


def test_zero_shift_keeps_group_means_close():
    config = SyntheticConfig(n_years=4, n_lat=4, n_lon=6, shift_magnitude=0.0)
    ds = generate_synthetic(config, 2)
    groups = seasonal_groups(ds)
    means = np.array([ds.features[idx].mean(axis=0) for idx in groups.values()])
    assert np.abs(means).max() < 0.25


def test_radiation_mode_respects_physics(radiation_dataset):
    ds = radiation_dataset
    assert ds.feature_names == INPUT_NAMES
    assert ds.target_names == ("NETSW", "FLWDS")
    assert np.all(ds.column("NETSW") >= 0.0)
    assert np.all(ds.column("FLWDS") >= 0.0)
    night = ds.column("COSZRS") <= 0
    assert night.any()
    assert np.all(ds.column("NETSW")[night] == 0.0)
    RadiationInputs.from_matrix(ds.features, ds.feature_names).check_valid()


def test_invalid_config():
    with pytest.raises(PydanticValidationError):
        SyntheticConfig(n_years=0)
    with pytest.raises(PydanticValidationError):
        SyntheticConfig(mapping="cubic")
