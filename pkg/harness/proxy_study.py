"""Seasonal-proxy study: does seasonal OOD skill predict skill under a second shift?

Every sampled architecture is trained once per split with the same seed.
RMSEs are reported in target units after undoing the standardisation; log
targets stay in log units.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats

from data.dataset import ClimateDataset
from data.normalizer import Normalizer, fit_normalizer
from data.partition import partition, split_group
from database.models import (ArchitectureSpec, ProxyRow, ProxySplit, ProxyStudyResult,
                             SearchSpace, TrainConfig)
from emulators.mlp import MlpModel
from emulators.search import quality_filter, sample_architectures
from emulators.training import TrainData, train
from shift_analysis.stat_tests import correlation_report
from utils.errors import InsufficientRecordsError, PartitionError, ShiftLabError
from utils.logger import logger

MIN_ARCHITECTURES = 3


@dataclass(frozen=True)
class PreparedSplit:
    """Normalised train/val/OOD arrays of one proxy split"""
    name: str
    normalizer: Normalizer
    data: TrainData
    X_ood: np.ndarray
    Y_ood: np.ndarray


def _union(groups, names: Sequence[str], label: str) -> np.ndarray:
    missing = [n for n in names if n not in groups]
    if missing:
        raise PartitionError(f"{label}: unknown group(s) {', '.join(missing)}")
    idx = np.sort(np.concatenate([groups[n] for n in names]))
    if idx.size == 0:
        raise PartitionError(f"{label}: selected groups are empty")
    return idx


def prepare_split(ds: ClimateDataset, split: ProxySplit, val_fraction: float, name: str) -> PreparedSplit:
    """Train/val from the training groups, OOD from the held-out groups"""
    groups = partition(ds, split.partition)
    fit_idx = _union(groups, split.train_groups, f"{name} train")
    ood_idx = _union(groups, split.test_groups, f"{name} test")
    parts = split_group(ds, fit_idx, val_fraction, 0.0)
    normalizer = fit_normalizer(ds, parts.train)

    def xy(idx):
        return normalizer.transform_features(ds.features[idx]), normalizer.transform_targets(ds.targets[idx])

    X_train, Y_train = xy(parts.train)
    X_val, Y_val = xy(parts.val)
    X_ood, Y_ood = xy(ood_idx)
    logger.info(f"Proxy split {name}: train {parts.train.size}, val {parts.val.size}, OOD {ood_idx.size}")
    return PreparedSplit(name, normalizer, TrainData(X_train, Y_train, X_val, Y_val), X_ood, Y_ood)


def rmse(model: MlpModel, normalizer: Normalizer, X, Y) -> float:
    residuals = normalizer.denormalise_residuals(model.predict(X) - Y)
    return float(np.sqrt(np.mean(residuals ** 2)))


def _train_on(prepared: PreparedSplit, arch: ArchitectureSpec, seed: int, cell: str):
    d_in = prepared.data.X_train.shape[1]
    d_out = prepared.data.Y_train.shape[1]
    model, _ = train(prepared.data, arch.with_dims(d_in, d_out), TrainConfig.proxy_protocol(seed), cell)
    n = prepared.normalizer
    return (rmse(model, n, prepared.data.X_train, prepared.data.Y_train),
            rmse(model, n, prepared.data.X_val, prepared.data.Y_val),
            rmse(model, n, prepared.X_ood, prepared.Y_ood))


def evaluate_architecture(index: int, arch: ArchitectureSpec, first: PreparedSplit,
                          second: PreparedSplit, seed: int) -> ProxyRow:
    """Train one architecture under both splits with a shared training seed"""
    row = ProxyRow(architecture=index, config=arch.model_dump(mode='json'))
    try:
        row.first_train_rmse, row.first_id_rmse, row.first_ood_rmse = \
            _train_on(first, arch, seed, f"arch{index}|{first.name}")
        row.second_train_rmse, row.second_id_rmse, row.second_ood_rmse = \
            _train_on(second, arch, seed, f"arch{index}|{second.name}")
    except (ShiftLabError, ArithmeticError, ValueError) as e:
        logger.error("Architecture failed", f"arch{index}", error=e)
        row.failure = f"{type(e).__name__}: {e}"
    return row


def _ood_id_iqr(rows: List[ProxyRow], prefix: str) -> float:
    ratios = [getattr(r, f"{prefix}_ood_rmse") / getattr(r, f"{prefix}_id_rmse") for r in rows]
    return float(stats.iqr(ratios))


def proxy_study(ds: ClimateDataset, first: ProxySplit, second: ProxySplit, n_architectures: int = 200,
                seed: int = 42, percentile: float = 90.0, space: Optional[SearchSpace] = None,
                val_fraction: float = 0.10, workers: int = 1) -> ProxyStudyResult:
    """Correlate paired OOD RMSEs of random architectures across two splits"""
    space = space or SearchSpace()
    prepared_first = prepare_split(ds, first, val_fraction, "first")
    prepared_second = prepare_split(ds, second, val_fraction, "second")
    architectures = sample_architectures(space, n_architectures, seed)

    def run(item):
        index, arch = item
        return evaluate_architecture(index, arch, prepared_first, prepared_second, seed + index)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(run, enumerate(architectures)))
    else:
        rows = [run(item) for item in enumerate(architectures)]

    retained = set(quality_filter([r.first_train_rmse for r in rows],
                                  [r.second_train_rmse for r in rows], percentile))
    for r in rows:
        r.retained = r.architecture in retained
    kept = [r for r in rows if r.retained]
    if len(kept) < MIN_ARCHITECTURES:
        raise InsufficientRecordsError(
            f"Only {len(kept)} architectures survived the quality filter, need {MIN_ARCHITECTURES}"
        )

    report = correlation_report([r.first_ood_rmse for r in kept], [r.second_ood_rmse for r in kept])
    logger.info(f"Proxy study: {len(kept)}/{len(rows)} architectures kept, "
                f"pearson {report.pearson_r:.3f} (p {report.pearson_p:.3g})")
    return ProxyStudyResult(
        correlation=report,
        rows=rows,
        ood_id_iqr={"first": _ood_id_iqr(kept, "first"), "second": _ood_id_iqr(kept, "second")},
        n_excluded=len(rows) - len(kept),
    )
