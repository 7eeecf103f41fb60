import hashlib
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from data.dataset import ClimateDataset, GridCell
from utils.errors import DatasetValidationError, ValidationError


def area_weights(cells: Sequence[GridCell]) -> np.ndarray:
    """cos(latitude) weights normalised to sum to one"""
    lats = np.array([c.lat for c in cells], dtype=float)
    weights = np.cos(np.radians(lats))
    weights[np.abs(lats) >= 90.0] = 0.0
    weights = np.maximum(weights, 0.0)
    total = weights.sum()
    if total <= 0.0:
        raise ValidationError("Area weights sum to zero (all cells polar)")
    return weights / total


def area_weighted_mean(values, cells: Sequence[GridCell]) -> float:
    """Area-weighted mean of one value per cell"""
    values = np.asarray(values, dtype=float)
    if values.shape != (len(cells),):
        raise ValidationError(f"Expected {len(cells)} values, got shape {values.shape}")
    return float(np.dot(area_weights(cells), values))


@dataclass(frozen=True)
class Normalizer:
    """Frozen standardisation statistics with optional log transform.

    Columns in ``log_columns`` become ``log(x + epsilon)`` before the
    affine standardisation.
    """

    feature_names: Tuple[str, ...]
    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_names: Tuple[str, ...]
    target_mean: np.ndarray
    target_std: np.ndarray
    log_columns: frozenset
    epsilon: float

    def _log_mask(self, names):
        return np.array([n in self.log_columns for n in names], dtype=bool)

    def _forward(self, matrix, names, mean, std):
        matrix = np.array(matrix, dtype=float, copy=True)
        if matrix.ndim == 1:
            matrix = matrix[:, None]
        if matrix.shape[1] != len(names):
            raise ValidationError(f"Expected {len(names)} columns, got {matrix.shape[1]}")
        mask = self._log_mask(names)
        if mask.any():
            shifted = matrix[:, mask] + self.epsilon
            if np.any(shifted <= 0):
                bad = [n for n, m in zip(names, mask) if m]
                raise ValidationError(f"Negative value in log column(s) {bad} after offset")
            matrix[:, mask] = np.log(shifted)
        return (matrix - mean) / std

    def _inverse(self, matrix, names, mean, std):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim == 1:
            matrix = matrix[:, None]
        out = matrix * std + mean
        mask = self._log_mask(names)
        if mask.any():
            out[:, mask] = np.exp(out[:, mask]) - self.epsilon
        return out

    def transform_features(self, X):
        return self._forward(X, self.feature_names, self.feature_mean, self.feature_std)

    def inverse_features(self, Z):
        return self._inverse(Z, self.feature_names, self.feature_mean, self.feature_std)

    def transform_targets(self, Y):
        return self._forward(Y, self.target_names, self.target_mean, self.target_std)

    def inverse_targets(self, Z):
        return self._inverse(Z, self.target_names, self.target_mean, self.target_std)

    def denormalise_residuals(self, residuals):
        """Scale normalised residuals back to target units (log units for log targets)"""
        return np.asarray(residuals, dtype=float) * self.target_std

    def target_index(self, name):
        return self.target_names.index(name)

    def statistics_hash(self) -> str:
        """Digest of every frozen statistic"""
        digest = hashlib.sha256()
        for array in (self.feature_mean, self.feature_std, self.target_mean, self.target_std):
            digest.update(np.ascontiguousarray(array, dtype=float).tobytes())
        digest.update(repr((self.feature_names, self.target_names, sorted(self.log_columns),
                            self.epsilon)).encode('utf-8'))
        return digest.hexdigest()


def _column_stats(matrix, names):
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)  # population convention
    constant = [n for n, s in zip(names, std) if not s > 0]
    if constant:
        raise DatasetValidationError(f"Constant column(s) cannot be normalised: {', '.join(constant)}")
    return mean, std


def fit_normalizer(ds: ClimateDataset, train_idx, log_columns: Optional[Iterable[str]] = None,
                   epsilon: float = 1e-8) -> Normalizer:
    """Fit standardisation statistics on the training samples only"""
    train_idx = np.asarray(train_idx, dtype=np.int64)
    if train_idx.size == 0:
        raise ValidationError("Cannot fit a normaliser on an empty index set")
    log_columns = frozenset(ds.log_columns if log_columns is None else log_columns)
    unknown = log_columns - set(ds.feature_names) - set(ds.target_names)
    if unknown:
        raise ValidationError(f"Unknown log columns: {', '.join(sorted(unknown))}")
    if log_columns and not epsilon > 0:
        raise ValidationError("Log offset epsilon must be positive")

    def transformed(matrix, names):
        matrix = np.array(matrix[train_idx], dtype=float, copy=True)
        for j, name in enumerate(names):
            if name in log_columns:
                shifted = matrix[:, j] + epsilon
                if np.any(shifted <= 0):
                    raise DatasetValidationError(f"Negative value in log column '{name}' after offset")
                matrix[:, j] = np.log(shifted)
        return matrix

    f_mean, f_std = _column_stats(transformed(ds.features, ds.feature_names), ds.feature_names)
    t_mean, t_std = _column_stats(transformed(ds.targets, ds.target_names), ds.target_names)
    return Normalizer(
        feature_names=ds.feature_names,
        feature_mean=f_mean,
        feature_std=f_std,
        target_names=ds.target_names,
        target_mean=t_mean,
        target_std=t_std,
        log_columns=log_columns,
        epsilon=float(epsilon),
    )


def global_mean_series(ds: ClimateDataset, idx, columns: Sequence[str],
                       normalizer: Optional[Normalizer] = None):
    """Area-weighted spatial mean vector per timestep.

    Returns ``(time_ids, matrix)`` with one row per timestep present in
    ``idx``. Weights are renormalised over the cells present at each time.
    """
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise ValidationError("Cannot reduce an empty index set")

    if normalizer is not None:
        values = np.empty((idx.size, len(columns)))
        feats = [c for c in columns if c in normalizer.feature_names]
        if feats:
            full = normalizer.transform_features(ds.features[idx])
            for c in feats:
                values[:, list(columns).index(c)] = full[:, normalizer.feature_names.index(c)]
        targs = [c for c in columns if c not in normalizer.feature_names]
        if targs:
            full = normalizer.transform_targets(ds.targets[idx])
            for c in targs:
                values[:, list(columns).index(c)] = full[:, normalizer.target_names.index(c)]
    else:
        values = ds.columns(columns, idx)

    lats = ds.cell_lats[ds.sample_cell[idx]]
    weights = np.cos(np.radians(lats))
    weights[np.abs(lats) >= 90.0] = 0.0
    times, inverse = np.unique(ds.sample_time[idx], return_inverse=True)
    inverse = inverse.reshape(-1)
    weight_sum = np.bincount(inverse, weights=weights, minlength=times.size)
    if np.any(weight_sum <= 0):
        raise ValidationError("A timestep has only polar cells")
    series = np.column_stack([
        np.bincount(inverse, weights=weights * values[:, j], minlength=times.size) / weight_sum
        for j in range(values.shape[1])
    ])
    return ds.time_ids[times], series
