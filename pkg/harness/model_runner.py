"""Fit one roster entry on one group's training split and predict in physical units."""
import hashlib
import threading
from typing import Dict, List, Optional, Sequence

import numpy as np

from data.dataset import ClimateDataset
from data.normalizer import Normalizer
from data.partition import SplitSpec
from database.models import ErrorLoss, ModelKind, ModelSpec
from emulators.checkpoint import mlp_to_bytes
from emulators.compositional import (CompositionalModel, FrozenGate, compositional_to_bytes,
                                     design_matrix, train_compositional)
from emulators.mlp import MlpModel
from emulators.training import TrainData, train
from harness.robustness import error_loss
from physics.calibration import calibrate, fitted_params
from physics.params import PhysicalParams
from physics.radiation import TARGET_NAMES, RadiationInputs, forward
from utils.errors import ValidationError
from utils.logger import logger


class MlpPredictor:
    def __init__(self, model: MlpModel, normalizer: Normalizer):
        self.model = model
        self.normalizer = normalizer

    def predict(self, ds: ClimateDataset, idx) -> np.ndarray:
        X = self.normalizer.transform_features(ds.features[idx])
        return self.normalizer.inverse_targets(self.model.predict(X))

    def artifact(self):
        return mlp_to_bytes(self.model), ".mlp"


class PhysicalPredictor:
    def __init__(self, params: PhysicalParams):
        self.params = params

    def predict(self, ds: ClimateDataset, idx) -> np.ndarray:
        inputs = RadiationInputs.from_matrix(ds.features[idx], ds.feature_names)
        outputs = forward(inputs, self.params)
        return np.column_stack([getattr(outputs, name) for name in ds.target_names])

    def artifact(self):
        return self.params.to_json().encode('utf-8'), ".json"


class CompositionalPredictor:
    def __init__(self, model: CompositionalModel, normalizer: Normalizer):
        self.model = model
        self.normalizer = normalizer

    def predict(self, ds: ClimateDataset, idx) -> np.ndarray:
        X = design_matrix(self.normalizer.transform_features(ds.features[idx]),
                          RadiationInputs.from_matrix(ds.features[idx], ds.feature_names),
                          self.model.gate)
        return self.model.predict_physical(X, self.normalizer)

    def artifact(self):
        return compositional_to_bytes(self.model), ".comp"


def require_radiation_targets(ds: ClimateDataset):
    if sorted(ds.target_names) != sorted(TARGET_NAMES):
        raise ValidationError(f"Physical and compositional models need exactly the targets {TARGET_NAMES}")


def calibrate_on(ds: ClimateDataset, idx, spec: ModelSpec, cell: Optional[str] = None) -> PhysicalParams:
    """Staged calibration of the default registry on the given samples"""
    require_radiation_targets(ds)
    inputs = RadiationInputs.from_matrix(ds.features[idx], ds.feature_names).check_valid()
    targets = ds.columns(list(TARGET_NAMES), idx)
    settings = spec.calibration
    result = calibrate(inputs, targets, PhysicalParams.defaults(), settings.stages,
                       settings.tol, settings.max_iter)
    logger.log_cell(cell, "calibrated", f"objective {result.initial_objective:.6g} -> {result.final_objective:.6g}")
    return fitted_params(result)


class CalibrationCache:
    """Calibrated parameters shared by every seed of one (training split, calibration settings) pair.

    Calibration is deterministic, so seeds reuse the first result. Safe under the cell thread pool.
    """

    def __init__(self):
        self._params: Dict[tuple, PhysicalParams] = {}
        self._locks: Dict[tuple, threading.Lock] = {}
        self._guard = threading.Lock()
        self.calibrations = 0

    @staticmethod
    def key(idx, spec: ModelSpec) -> tuple:
        idx = np.ascontiguousarray(idx)
        return (hashlib.sha256(idx.tobytes()).hexdigest(), spec.calibration.model_dump_json())

    def get(self, ds: ClimateDataset, idx, spec: ModelSpec, cell: Optional[str] = None) -> PhysicalParams:
        key = self.key(idx, spec)
        with self._guard:
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            if key not in self._params:
                self._params[key] = calibrate_on(ds, idx, spec, cell)
                self.calibrations += 1
            else:
                logger.log_cell(cell, "calibration reused")
            return self._params[key]


def _train_data(ds, split: SplitSpec, normalizer: Normalizer) -> TrainData:
    return TrainData(
        X_train=normalizer.transform_features(ds.features[split.train]),
        Y_train=normalizer.transform_targets(ds.targets[split.train]),
        X_val=normalizer.transform_features(ds.features[split.val]),
        Y_val=normalizer.transform_targets(ds.targets[split.val]),
    )


def fit_predictor(spec: ModelSpec, ds: ClimateDataset, split: SplitSpec, normalizer: Normalizer,
                  seed: int, cell: Optional[str] = None, calibrations: Optional[CalibrationCache] = None):
    """Train (or calibrate) a roster entry on the training split"""
    calibrations = calibrations if calibrations is not None else CalibrationCache()
    if spec.kind == ModelKind.PHYSICAL:
        return PhysicalPredictor(calibrations.get(ds, split.train, spec, cell))

    train_cfg = spec.training.model_copy(update={"seed": seed})
    if spec.kind == ModelKind.MLP:
        config = spec.architecture.with_dims(ds.d_in, ds.d_out)
        model, _ = train(_train_data(ds, split, normalizer), config, train_cfg, cell)
        return MlpPredictor(model, normalizer)

    frozen_gate = FrozenGate.from_params(calibrations.get(ds, split.train, spec, cell), normalizer)

    def matrix(idx):
        return design_matrix(normalizer.transform_features(ds.features[idx]),
                             RadiationInputs.from_matrix(ds.features[idx], ds.feature_names),
                             frozen_gate)

    data = TrainData(X_train=matrix(split.train), Y_train=normalizer.transform_targets(ds.targets[split.train]),
                     X_val=matrix(split.val), Y_val=normalizer.transform_targets(ds.targets[split.val]))
    model, _ = train_compositional(data, frozen_gate, ds.feature_names, ds.target_names,
                                   spec.architecture, train_cfg, cell)
    return CompositionalPredictor(model, normalizer)


def evaluate_losses(predictor, ds: ClimateDataset, test_sets: Dict[str, np.ndarray], kind: ErrorLoss,
                    variable_groups: Dict[str, Sequence[str]]) -> Dict[str, dict]:
    """Overall and per-variable-group losses on every group's test split"""
    columns: Dict[str, List[int]] = {}
    for name, targets in variable_groups.items():
        unknown = [t for t in targets if t not in ds.target_names]
        if unknown:
            raise ValidationError(f"Variable group {name} names unknown targets: {', '.join(unknown)}")
        columns[name] = [ds.target_names.index(t) for t in targets]

    losses = {}
    for group, idx in test_sets.items():
        pred = predictor.predict(ds, idx)
        truth = ds.targets[idx]
        losses[group] = {
            "overall": error_loss(kind, pred, truth),
            "groups": {name: error_loss(kind, pred[:, cols], truth[:, cols]) for name, cols in columns.items()},
        }
    return losses
