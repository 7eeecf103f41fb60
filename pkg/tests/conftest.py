import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT))

_LOG_DIR = tempfile.mkdtemp(prefix="shiftlab-test-logs-")
os.environ.setdefault("SHIFTLAB_LOG_FILE", os.path.join(_LOG_DIR, "shiftlab.log"))
os.environ.setdefault("SHIFTLAB_LOG_LEVEL", "WARNING")

from data.dataset import ClimateDataset, GridCell  # noqa: E402
from data.synthetic import generate_synthetic  # noqa: E402
from database.models import SyntheticConfig  # noqa: E402


@pytest.fixture
def write_table(tmp_path):
    """Write a data CSV and its manifest; returns both paths"""

    def write(frame: pd.DataFrame, features, targets, log_columns=(), layout="dense", name="data"):
        data_path = tmp_path / f"{name}.csv"
        manifest_path = tmp_path / f"{name}.json"
        frame.to_csv(data_path, index=False)
        manifest_path.write_text(json.dumps({
            "features": list(features),
            "targets": list(targets),
            "log_columns": list(log_columns),
            "layout": layout,
        }), encoding='utf-8')
        return data_path, manifest_path

    return write


def grid_frame(n_times=2, lats=(0.0, 45.0), n_features=3, seed=0, start_year=None):
    """Dense (time, cell) frame with random features and one target"""
    rng = np.random.default_rng(seed)
    rows = []
    for t in range(n_times):
        for lat in lats:
            row = {"time": t, "month": t % 12 + 1, "lat": lat, "lon": 10.0}
            if start_year is not None:
                row["year"] = start_year + t // 12
            for j in range(n_features):
                row[f"f{j}"] = float(rng.standard_normal())
            row["y"] = float(rng.standard_normal())
            rows.append(row)
    return pd.DataFrame(rows)


def tiny_dataset(times=12, lats=(0.0, 60.0), years=None, seed=0, d=2):
    """In-memory dense dataset with monthly timesteps"""
    rng = np.random.default_rng(seed)
    cells = [GridCell(id=i, lat=lat, lon=0.0) for i, lat in enumerate(lats)]
    time_ids = np.arange(times)
    sample_time = np.repeat(time_ids, len(cells))
    sample_cell = np.tile(np.arange(len(cells)), times)
    n = sample_time.size
    return ClimateDataset.from_arrays(
        time_ids=time_ids,
        months=time_ids % 12 + 1,
        years=years if years is None else np.asarray(years),
        cells=cells,
        features=rng.standard_normal((n, d)),
        targets=rng.standard_normal((n, 1)),
        feature_names=[f"x{j}" for j in range(d)],
        target_names=["y"],
        sample_time=sample_time,
        sample_cell=sample_cell,
    )


@pytest.fixture
def covariate_dataset():
    config = SyntheticConfig(mode="covariate", n_years=3, n_lat=3, n_lon=4, n_features=3,
                             shift_magnitude=1.0, mapping="quadratic", noise=0.01)
    return generate_synthetic(config, seed=0)


@pytest.fixture
def radiation_dataset():
    config = SyntheticConfig(mode="radiation", n_years=2, n_lat=4, n_lon=6, noise=0.0)
    return generate_synthetic(config, seed=0)
