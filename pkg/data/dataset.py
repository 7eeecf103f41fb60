import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError

from utils.errors import DatasetValidationError
from utils.logger import logger

REQUIRED_COLUMNS = ("time", "month", "lat", "lon")
OPTIONAL_COLUMNS = ("year",)


class GridCell(BaseModel):
    """One spatial grid cell"""
    model_config = ConfigDict(frozen=True)

    id: int
    lat: float = Field(ge=-90.0, le=90.0)
    lon: float = Field(ge=-180.0, lt=360.0)


class DatasetManifest(BaseModel):
    """Column declaration accompanying a data file"""
    features: List[str]
    targets: List[str]
    log_columns: List[str] = Field(default_factory=list)
    layout: Literal["dense", "sparse"] = "dense"


def _freeze(array):
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ClimateDataset:
    """Immutable (time, cell) tabular store of features and targets.

    Sample ``i`` lives at time ``time_ids[sample_time[i]]`` and cell
    ``cells[sample_cell[i]]``.
    """

    time_ids: np.ndarray
    months: np.ndarray
    years: Optional[np.ndarray]
    cells: Tuple[GridCell, ...]
    features: np.ndarray
    targets: np.ndarray
    feature_names: Tuple[str, ...]
    target_names: Tuple[str, ...]
    sample_time: np.ndarray
    sample_cell: np.ndarray
    log_columns: Tuple[str, ...] = ()

    @classmethod
    def from_arrays(cls, *, time_ids, months, cells, features, targets, feature_names,
                    target_names, sample_time, sample_cell, years=None, log_columns=(),
                    sparse=False):
        """Build a validated dataset from in-memory arrays"""
        features = np.asarray(features, dtype=float)
        targets = np.asarray(targets, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        if targets.ndim == 1:
            targets = targets[:, None]
        dataset = cls(
            time_ids=_freeze(np.asarray(time_ids, dtype=np.int64)),
            months=_freeze(np.asarray(months, dtype=np.int64)),
            years=None if years is None else _freeze(np.asarray(years, dtype=np.int64)),
            cells=tuple(cells),
            features=_freeze(features),
            targets=_freeze(targets),
            feature_names=tuple(feature_names),
            target_names=tuple(target_names),
            sample_time=_freeze(np.asarray(sample_time, dtype=np.int64)),
            sample_cell=_freeze(np.asarray(sample_cell, dtype=np.int64)),
            log_columns=tuple(log_columns),
        )
        dataset.validate(sparse=sparse)
        return dataset

    def validate(self, sparse=False):
        """Check the structural invariants"""
        names = list(self.feature_names) + list(self.target_names)
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise DatasetValidationError(f"Duplicate column names: {', '.join(duplicates)}")
        unknown = [c for c in self.log_columns if c not in names]
        if unknown:
            raise DatasetValidationError(f"Log columns not in dataset: {', '.join(unknown)}")

        n = self.sample_time.shape[0]
        if self.features.shape != (n, len(self.feature_names)):
            raise DatasetValidationError("Feature matrix shape does not match names and samples")
        if self.targets.shape != (n, len(self.target_names)):
            raise DatasetValidationError("Target matrix shape does not match names and samples")
        if self.sample_cell.shape[0] != n:
            raise DatasetValidationError("sample_cell length differs from sample_time")
        if len(self.months) != len(self.time_ids):
            raise DatasetValidationError("Every time index needs a month label")
        if np.any((self.months < 1) | (self.months > 12)):
            raise DatasetValidationError("Month labels must lie in 1..12")
        if self.years is not None and len(self.years) != len(self.time_ids):
            raise DatasetValidationError("Every time index needs a year label")
        if len({c.id for c in self.cells}) != len(self.cells):
            raise DatasetValidationError("Cell ids must be unique")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.targets))):
            raise DatasetValidationError("Dataset contains NaN or Inf values")
        if n and (self.sample_time.min() < 0 or self.sample_time.max() >= len(self.time_ids)
                  or self.sample_cell.min() < 0 or self.sample_cell.max() >= len(self.cells)):
            raise DatasetValidationError("Sample index points outside the time or cell axis")

        pairs = self.sample_time * max(len(self.cells), 1) + self.sample_cell
        if np.unique(pairs).size != n:
            raise DatasetValidationError("Duplicate (time, cell) pairs")
        if not sparse and n != len(self.time_ids) * len(self.cells):
            raise DatasetValidationError(
                f"Dense layout expects {len(self.time_ids) * len(self.cells)} samples, found {n}"
            )

    @property
    def n_samples(self) -> int:
        return int(self.sample_time.shape[0])

    @property
    def d_in(self) -> int:
        return len(self.feature_names)

    @property
    def d_out(self) -> int:
        return len(self.target_names)

    @property
    def sample_months(self) -> np.ndarray:
        return self.months[self.sample_time]

    @property
    def sample_years(self) -> Optional[np.ndarray]:
        if self.years is None:
            return None
        return self.years[self.sample_time]

    @property
    def cell_lats(self) -> np.ndarray:
        return np.array([c.lat for c in self.cells], dtype=float)

    def column(self, name: str) -> np.ndarray:
        """Values of one feature or target column"""
        if name in self.feature_names:
            return self.features[:, self.feature_names.index(name)]
        if name in self.target_names:
            return self.targets[:, self.target_names.index(name)]
        raise DatasetValidationError(f"Unknown column: {name}")

    def columns(self, names: Sequence[str], idx=None) -> np.ndarray:
        """Matrix of the named columns, optionally restricted to sample indices"""
        matrix = np.column_stack([self.column(n) for n in names]) if names else np.empty((self.n_samples, 0))
        return matrix if idx is None else matrix[idx]

    def content_hash(self) -> str:
        """Stable digest of the dataset content"""
        digest = hashlib.sha256()
        for array in (self.time_ids, self.months, self.features, self.targets,
                      self.sample_time, self.sample_cell):
            digest.update(np.ascontiguousarray(array).tobytes())
        if self.years is not None:
            digest.update(self.years.tobytes())
        header = {
            "features": self.feature_names,
            "targets": self.target_names,
            "cells": [(c.id, c.lat, c.lon) for c in self.cells],
        }
        digest.update(json.dumps(header, sort_keys=True).encode('utf-8'))
        return digest.hexdigest()


def load_manifest(manifest_path) -> DatasetManifest:
    """Read and validate a JSON manifest"""
    path = Path(manifest_path)
    if not path.exists():
        raise DatasetValidationError(f"Manifest not found: {path}")
    try:
        return DatasetManifest(**json.loads(path.read_text(encoding='utf-8')))
    except (json.JSONDecodeError, PydanticValidationError, TypeError) as e:
        raise DatasetValidationError(f"Invalid manifest {path}: {e}") from e


def _first_bad_cell(frame, columns):
    """Locate the first non-finite cell as (row, column), rows 1-based"""
    for col in columns:
        values = frame[col].to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            yield int(bad[0]) + 1, col


def load_dataset(data_path, manifest_path) -> ClimateDataset:
    """Load a CSV data file described by a JSON manifest.

    Rows are reported 1-based over data rows (the header is not counted).
    """
    manifest = load_manifest(manifest_path)
    path = Path(data_path)
    if not path.exists():
        raise DatasetValidationError(f"Data file not found: {path}")

    frame = pd.read_csv(path, encoding='utf-8')
    declared = list(manifest.features) + list(manifest.targets)

    missing_required = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing_required:
        raise DatasetValidationError(f"Missing required columns: {', '.join(missing_required)}")
    unknown = [c for c in declared if c not in frame.columns]
    if unknown:
        raise DatasetValidationError(f"Manifest declares unknown columns: {', '.join(unknown)}")
    unknown_log = [c for c in manifest.log_columns if c not in declared]
    if unknown_log:
        raise DatasetValidationError(f"Log columns not declared as features or targets: {', '.join(unknown_log)}")

    has_year = "year" in frame.columns
    numeric = list(REQUIRED_COLUMNS) + (["year"] if has_year else []) + declared
    for col in numeric:
        frame[col] = pd.to_numeric(frame[col], errors='coerce')

    bad = [(row, col) for row, col in _first_bad_cell(frame, numeric)]
    if bad:
        row, col = min(bad)
        raise DatasetValidationError(f"Non-finite or non-numeric value at row {row}, column '{col}'")

    months = frame["month"].to_numpy(dtype=float)
    wrong_month = np.flatnonzero((months < 1) | (months > 12) | (months != np.round(months)))
    if wrong_month.size:
        raise DatasetValidationError(f"Month outside 1..12 at row {int(wrong_month[0]) + 1}")
    lats = frame["lat"].to_numpy(dtype=float)
    wrong_lat = np.flatnonzero((lats < -90) | (lats > 90))
    if wrong_lat.size:
        raise DatasetValidationError(f"Latitude outside [-90, 90] at row {int(wrong_lat[0]) + 1}")
    lons = frame["lon"].to_numpy(dtype=float)
    wrong_lon = np.flatnonzero((lons < -180) | (lons >= 360))
    if wrong_lon.size:
        raise DatasetValidationError(f"Longitude outside [-180, 360) at row {int(wrong_lon[0]) + 1}")

    dup = frame.duplicated(subset=["time", "lat", "lon"], keep='first').to_numpy()
    if dup.any():
        row = int(np.flatnonzero(dup)[0]) + 1
        raise DatasetValidationError(f"Duplicate (time, cell) pair at row {row}")

    times = frame["time"].to_numpy(dtype=np.int64)
    time_ids, sample_time = np.unique(times, return_inverse=True)
    time_months = np.zeros(len(time_ids), dtype=np.int64)
    time_months[sample_time] = months.astype(np.int64)
    inconsistent = np.flatnonzero(time_months[sample_time] != months)
    if inconsistent.size:
        raise DatasetValidationError(f"Month label disagrees with earlier rows of the same time at row {int(inconsistent[0]) + 1}")

    time_years = None
    if has_year:
        years = frame["year"].to_numpy(dtype=np.int64)
        time_years = np.zeros(len(time_ids), dtype=np.int64)
        time_years[sample_time] = years
        inconsistent = np.flatnonzero(time_years[sample_time] != years)
        if inconsistent.size:
            raise DatasetValidationError(f"Year label disagrees with earlier rows of the same time at row {int(inconsistent[0]) + 1}")

    coords = np.column_stack([lats, lons])
    unique_coords, sample_cell = np.unique(coords, axis=0, return_inverse=True)
    cells = tuple(GridCell(id=i, lat=float(lat), lon=float(lon)) for i, (lat, lon) in enumerate(unique_coords))

    dataset = ClimateDataset.from_arrays(
        time_ids=time_ids,
        months=time_months,
        years=time_years,
        cells=cells,
        features=frame[list(manifest.features)].to_numpy(dtype=float),
        targets=frame[list(manifest.targets)].to_numpy(dtype=float),
        feature_names=manifest.features,
        target_names=manifest.targets,
        sample_time=sample_time.reshape(-1),
        sample_cell=sample_cell.reshape(-1),
        log_columns=manifest.log_columns,
        sparse=manifest.layout == "sparse",
    )
    logger.info(
        f"Loaded {dataset.n_samples} samples ({len(time_ids)} times x {len(cells)} cells, "
        f"d_in={dataset.d_in}, d_out={dataset.d_out}) from {path}"
    )
    return dataset


def save_dataset(dataset: ClimateDataset, data_path, manifest_path, float_format='%.12g'):
    """Write a dataset back to the CSV + manifest convention"""
    frame = pd.DataFrame({
        "time": dataset.time_ids[dataset.sample_time],
        "month": dataset.sample_months,
        "lat": dataset.cell_lats[dataset.sample_cell],
        "lon": np.array([c.lon for c in dataset.cells])[dataset.sample_cell],
    })
    if dataset.years is not None:
        frame["year"] = dataset.sample_years
    for i, name in enumerate(dataset.feature_names):
        frame[name] = dataset.features[:, i]
    for i, name in enumerate(dataset.target_names):
        frame[name] = dataset.targets[:, i]
    Path(data_path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(data_path, index=False, float_format=float_format)

    layout = "dense" if dataset.n_samples == len(dataset.time_ids) * len(dataset.cells) else "sparse"
    manifest = DatasetManifest(features=list(dataset.feature_names), targets=list(dataset.target_names),
                               log_columns=list(dataset.log_columns), layout=layout)
    Path(manifest_path).write_text(json.dumps(manifest.model_dump(), indent=2), encoding='utf-8')
