from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from data.dataset import ClimateDataset
from database.models import PartitionSpec, Season
from utils.errors import PartitionError, ValidationError
from utils.logger import logger

SEASON_OF_MONTH = {
    12: Season.DJF, 1: Season.DJF, 2: Season.DJF,
    3: Season.MAM, 4: Season.MAM, 5: Season.MAM,
    6: Season.JJA, 7: Season.JJA, 8: Season.JJA,
    9: Season.SON, 10: Season.SON, 11: Season.SON,
}

# Latitude bands of the regional groupings
REGIONS = {
    "nh_midlat": (30.0, 60.0),
    "nh_tropics": (0.0, 20.0),
    "sh_tropics": (-20.0, 0.0),
    "sh_midlat": (-60.0, -30.0),
}


def season_of(month: int) -> Season:
    """Meteorological season of a calendar month"""
    if isinstance(month, bool) or int(month) != month or not 1 <= month <= 12:
        raise ValidationError(f"Month must be an integer in 1..12, got {month}")
    return SEASON_OF_MONTH[int(month)]


def region_spec(name: str, temporal="season", **kwargs) -> PartitionSpec:
    """Partition spec restricted to a named latitude band"""
    if name not in REGIONS:
        raise PartitionError(f"Unknown region '{name}', expected one of {', '.join(REGIONS)}")
    return PartitionSpec(temporal=temporal, lat_band=REGIONS[name], region=name, **kwargs)


def _lat_band(spec: PartitionSpec):
    if spec.lat_band is not None:
        return spec.lat_band
    if spec.region is not None:
        if spec.region not in REGIONS:
            raise PartitionError(f"Unknown region '{spec.region}'")
        return REGIONS[spec.region]
    return None


def selected_cells(ds: ClimateDataset, spec: PartitionSpec) -> np.ndarray:
    """Indices into ds.cells admitted by the spatial rule"""
    if spec.cell_ids is not None:
        wanted = set(spec.cell_ids)
        known = {c.id for c in ds.cells}
        unknown = sorted(wanted - known)
        if unknown:
            raise PartitionError(f"Unknown cell ids: {unknown}")
        chosen = np.array([i for i, c in enumerate(ds.cells) if c.id in wanted], dtype=np.int64)
    else:
        band = _lat_band(spec)
        lats = ds.cell_lats
        if band is None:
            chosen = np.arange(len(ds.cells), dtype=np.int64)
        else:
            lo, hi = band
            chosen = np.flatnonzero((lats >= lo) & (lats <= hi))
    if chosen.size == 0:
        raise PartitionError("Spatial rule selects zero cells")
    return chosen


def _time_labels(ds: ClimateDataset, spec: PartitionSpec) -> np.ndarray:
    """Group label per time index; empty string marks unassigned times"""
    if spec.temporal == "all":
        return np.full(len(ds.time_ids), "all", dtype=object)

    if spec.temporal == "season":
        mapping = spec.season_map or SEASON_OF_MONTH
        return np.array([mapping[int(m)].value for m in ds.months], dtype=object)

    if ds.years is None:
        raise PartitionError("Year intervals need a 'year' column in the data file")
    labels = np.full(len(ds.time_ids), "", dtype=object)
    for start, end in spec.year_intervals:
        hit = (ds.years >= start) & (ds.years <= end)
        labels[hit] = f"{start}-{end}"
    return labels


def group_keys(spec: PartitionSpec):
    """Ordered group keys a spec can produce"""
    if spec.temporal == "all":
        return ["all"]
    if spec.temporal == "season":
        return [s.value for s in Season]
    return [f"{start}-{end}" for start, end in sorted(spec.year_intervals)]


def partition(ds: ClimateDataset, spec: PartitionSpec) -> Dict[str, np.ndarray]:
    """Split sample indices into disjoint spatio-temporal groups.

    Every group the rule can produce is present; empty groups map to an
    empty index array and are logged.
    """
    cells = selected_cells(ds, spec)
    in_space = np.isin(ds.sample_cell, cells)
    labels = _time_labels(ds, spec)[ds.sample_time]

    groups = {}
    for key in group_keys(spec):
        idx = np.flatnonzero(in_space & (labels == key))
        groups[key] = idx
        if idx.size == 0:
            logger.warning(f"Partition group '{key}' is empty")
    return groups


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint train/val/test sample assignment of one group"""
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        parts = [self.train, self.val, self.test]
        total = sum(p.size for p in parts)
        if np.unique(np.concatenate(parts)).size != total:
            raise PartitionError("Split parts overlap")


def split_group(ds: ClimateDataset, idx, val_fraction=0.10, test_fraction=0.0) -> SplitSpec:
    """Time-contiguous split of one group.

    The final ``test_fraction`` of the group's timesteps form the test part,
    the final ``val_fraction`` of the remaining timesteps form validation.
    """
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise PartitionError("Cannot split an empty group")
    if not 0.0 < val_fraction < 1.0 or not 0.0 <= test_fraction < 1.0:
        raise PartitionError("Split fractions must lie in (0, 1) for val and [0, 1) for test")

    times = np.unique(ds.sample_time[idx])
    n_times = times.size
    n_test = int(round(test_fraction * n_times))
    if test_fraction > 0:
        n_test = max(1, n_test)
    n_fit = n_times - n_test
    n_val = max(1, int(round(val_fraction * n_fit)))
    n_train = n_fit - n_val
    if n_train < 1:
        raise PartitionError(
            f"Group with {n_times} timesteps is too short for val={val_fraction}, test={test_fraction}"
        )

    train_times = times[:n_train]
    val_times = times[n_train:n_fit]
    test_times = times[n_fit:]
    sample_times = ds.sample_time[idx]
    return SplitSpec(
        train=idx[np.isin(sample_times, train_times)],
        val=idx[np.isin(sample_times, val_times)],
        test=idx[np.isin(sample_times, test_times)],
    )
