"""Permutation tests of later periods against a reference period on spatial-mean vectors."""
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from data.dataset import ClimateDataset
from data.normalizer import fit_normalizer, global_mean_series
from database.models import DivergenceSettings, Estimator, NormalizationMode, ShiftScanRow
from shift_analysis.stat_tests import divergence_test
from utils.errors import PartitionError, ValidationError
from utils.logger import logger


def _years_index(ds: ClimateDataset, interval: Tuple[int, int]) -> np.ndarray:
    if ds.years is None:
        raise PartitionError("The shift scan needs a 'year' column in the data file")
    start, end = interval
    if start > end:
        raise PartitionError(f"Year interval {start}-{end} is reversed")
    in_years = (ds.years >= start) & (ds.years <= end)
    idx = np.flatnonzero(in_years[ds.sample_time])
    if idx.size == 0:
        raise PartitionError(f"No samples in years {start}-{end}")
    return idx


def default_permutations(kind: Estimator) -> int:
    return Config.PERMUTATIONS_KL if kind == Estimator.KL else Config.PERMUTATIONS_ED_MMD


def decade_shift_scan(ds: ClimateDataset, reference_years: Tuple[int, int],
                      comparison_intervals: Sequence[Tuple[int, int]], settings: DivergenceSettings,
                      normalization: NormalizationMode, seed: int = 0,
                      columns: Optional[Sequence[str]] = None,
                      estimators: Sequence[Estimator] = (Estimator.ED, Estimator.MMD2, Estimator.KL),
                      permutations: Optional[Dict[Estimator, int]] = None,
                      permutation_budget: Optional[int] = None,
                      workers: int = 1) -> List[ShiftScanRow]:
    """Compare each comparison period with the reference period.

    Each timestep is reduced to one area-weighted mean vector over all
    columns (features then targets by default). Normalisation statistics
    come from the reference period (``train-only``) or all samples
    (``full-period``).
    """
    if not comparison_intervals:
        raise ValidationError("The shift scan needs at least one comparison interval")
    columns = list(columns or (ds.feature_names + ds.target_names))
    permutations = permutations or {}

    ref_idx = _years_index(ds, reference_years)
    fit_idx = ref_idx if NormalizationMode(normalization) == NormalizationMode.TRAIN_ONLY \
        else np.arange(ds.n_samples)
    normalizer = fit_normalizer(ds, fit_idx)
    _, reference = global_mean_series(ds, ref_idx, columns, normalizer)

    rows = []
    for interval in comparison_intervals:
        _, comparison = global_mean_series(ds, _years_index(ds, interval), columns, normalizer)
        tests = {}
        for kind in map(Estimator, estimators):
            B = permutations.get(kind, default_permutations(kind))
            tests[kind.value] = divergence_test(reference, comparison, kind, settings, B, seed,
                                                permutation_budget, workers)
        logger.info(f"Shift scan {interval[0]}-{interval[1]}: "
                    + ", ".join(f"{k} p={t.p_value:.4g}" for k, t in tests.items()))
        rows.append(ShiftScanRow(interval=tuple(interval), n_reference=reference.shape[0],
                                 n_comparison=comparison.shape[0], tests=tests))
    return rows
