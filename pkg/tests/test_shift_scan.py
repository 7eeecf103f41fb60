import pytest

from data.synthetic import generate_synthetic
from database.models import DivergenceSettings, Estimator, NormalizationMode, SyntheticConfig
from harness.shift_scan import decade_shift_scan, default_permutations
from tests.conftest import tiny_dataset
from utils.errors import PartitionError, ValidationError

SETTINGS = DivergenceSettings(pair_budget=10 ** 6, seed=0)
FAST = {Estimator.ED: 50, Estimator.MMD2: 50, Estimator.KL: 20}


@pytest.fixture
def trending():
    config = SyntheticConfig(n_years=6, n_lat=4, n_lon=6, shift_magnitude=0.0, trend_magnitude=4.0)
    return generate_synthetic(config, seed=1)


def test_strong_trend_is_detected(trending):
    (row,) = decade_shift_scan(trending, (1979, 1981), [(1982, 1984)], SETTINGS,
                               NormalizationMode.TRAIN_ONLY, permutations=FAST)

    assert row.interval == (1982, 1984)
    assert (row.n_reference, row.n_comparison) == (36, 36)
    assert set(row.tests) == {"ED", "MMD2", "KL"}
    assert row.tests["ED"].p_value == pytest.approx(1.0 / 51.0)
    assert row.tests["MMD2"].p_value == pytest.approx(1.0 / 51.0)
    assert row.tests["KL"].B == 20


def test_normalisation_mode_changes_the_statistic(trending):
    kwargs = dict(estimators=[Estimator.ED], permutations=FAST)
    (train_only,) = decade_shift_scan(trending, (1979, 1981), [(1982, 1984)], SETTINGS,
                                      NormalizationMode.TRAIN_ONLY, **kwargs)
    (full,) = decade_shift_scan(trending, (1979, 1981), [(1982, 1984)], SETTINGS,
                                NormalizationMode.FULL_PERIOD, **kwargs)
    assert train_only.tests["ED"].observed != full.tests["ED"].observed


def test_one_row_per_interval(trending):
    rows = decade_shift_scan(trending, (1979, 1980), [(1981, 1982), (1983, 1984)], SETTINGS,
                             "full-period", estimators=["ED"], permutations=FAST, columns=["x0", "y"])
    assert [r.interval for r in rows] == [(1981, 1982), (1983, 1984)]
    assert all(r.n_comparison == 24 for r in rows)


def test_default_permutation_counts():
    assert default_permutations(Estimator.KL) == 500
    assert default_permutations(Estimator.ED) == 1000
    assert default_permutations(Estimator.MMD2) == 1000


def test_invalid_scans(trending):
    with pytest.raises(ValidationError):
        decade_shift_scan(trending, (1979, 1981), [], SETTINGS, NormalizationMode.TRAIN_ONLY)
    with pytest.raises(PartitionError, match="2050"):
        decade_shift_scan(trending, (1979, 1981), [(2050, 2060)], SETTINGS,
                          NormalizationMode.TRAIN_ONLY, permutations=FAST)
    with pytest.raises(PartitionError, match="year"):
        decade_shift_scan(tiny_dataset(), (1979, 1981), [(1982, 1984)], SETTINGS,
                          NormalizationMode.TRAIN_ONLY)
