from typing import List, Optional, Sequence

import numpy as np

from database.models import ArchitectureSpec, SearchSpace
from utils.errors import ValidationError


def _log_uniform(rng, lo, hi):
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def sample_hyperparams(space: SearchSpace, seed) -> ArchitectureSpec:
    """One random-search draw; ``seed`` may be an int or an int sequence"""
    rng = np.random.default_rng(seed)
    layers = space.hidden_layers[int(rng.integers(len(space.hidden_layers)))]
    lo, hi = space.width
    width = int(np.clip(round(_log_uniform(rng, lo, hi)), lo, hi))
    dropout = float(rng.uniform(*space.dropout))
    weight_decay = _log_uniform(rng, *space.weight_decay)
    learning_rate = _log_uniform(rng, *space.learning_rate)
    activation = space.activations[int(rng.integers(len(space.activations)))]
    return ArchitectureSpec(hidden_layers=layers, width=width, activation=activation,
                            dropout=dropout,
                            weight_decay=weight_decay, learning_rate=learning_rate)


def sample_architectures(space: SearchSpace, n: int, seed: int) -> List[ArchitectureSpec]:
    """``n`` draws, the i-th from child seed (seed, i)"""
    return [sample_hyperparams(space, [seed, i]) for i in range(n)]


def percentile_threshold(values, percentile: float) -> float:
    """Linear-interpolation percentile over the finite values"""
    values = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=float)
    if values.size < 2:
        raise ValidationError("Percentile threshold needs at least two finite values")
    return float(np.percentile(values, percentile, method='linear'))


def quality_filter(first_rmse: Sequence[Optional[float]], second_rmse: Sequence[Optional[float]],
                   percentile: float = 90.0) -> List[int]:
    """Indices whose training RMSE stays at or below the percentile in both splits.

    Missing (failed) entries are never retained.
    """
    if not 0.0 < percentile < 100.0:
        raise ValidationError(f"Percentile must lie in (0, 100), got {percentile}")
    if len(first_rmse) != len(second_rmse):
        raise ValidationError("Both splits need one RMSE per architecture")
    first_cut = percentile_threshold(first_rmse, percentile)
    second_cut = percentile_threshold(second_rmse, percentile)

    def ok(value, cut):
        return value is not None and np.isfinite(value) and value <= cut

    return [i for i, (a, b) in enumerate(zip(first_rmse, second_rmse))
            if ok(a, first_cut) and ok(b, second_cut)]
