"""Four regime/target expert MLPs blended through a frozen physical gate.

The gate supplies a cloud weight alpha and a day indicator d per sample:

    NETSW = d [(1 - alpha) f_sw_clear + alpha f_sw_cloud] + (1 - d) c_night
    FLWDS = (1 - alpha) f_lw_clear + alpha f_lw_cloud

in standardised target units. Experts see only their own input columns.
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from data.normalizer import Normalizer
from database.models import Activation, ArchitectureSpec, MlpConfig, TrainConfig, TrainRecord
from emulators.checkpoint import decode_bundle, encode_bundle
from emulators.mlp import MlpModel, ParamGroup
from emulators.training import TrainData, fit
from physics.params import GATE_PARAMS, PhysicalParams
from physics.radiation import RadiationInputs, cloud_weight
from utils.errors import ValidationError
from utils.logger import logger

COMP_MAGIC = b"SHIFTLAB-COMP-v1\n"

SW_CLEAR_INPUTS = ("SOLIN", "COSZRS", "RH", "ICEFRAC", "LANDFRAC", "OCNFRAC", "ASDIR", "ASDIF", "PS")
LW_CLEAR_INPUTS = ("RH", "T", "LWUP", "PS")
EXPERT_INPUTS = {
    "sw_clear": SW_CLEAR_INPUTS,
    "sw_cloud": SW_CLEAR_INPUTS + ("qn",),
    "lw_clear": LW_CLEAR_INPUTS,
    "lw_cloud": LW_CLEAR_INPUTS + ("qn",),
}
EXPERTS = tuple(EXPERT_INPUTS)
SHORTWAVE = ("sw_clear", "sw_cloud")

DEFAULT_EXPERT = ArchitectureSpec(hidden_layers=3, width=512, activation=Activation.GELU,
                                  dropout=0.1, weight_decay=0.01, learning_rate=3e-4)


@dataclass(frozen=True)
class FrozenGate:
    """Calibrated gate coefficients and the standardised night value of NETSW"""
    params: Tuple[Tuple[str, float], ...]
    c_night: float

    @classmethod
    def from_params(cls, params: PhysicalParams, normalizer: Normalizer,
                    target: str = "NETSW") -> "FrozenGate":
        if target in normalizer.log_columns:
            raise ValidationError(f"{target} must not be log-transformed for the night constant")
        j = normalizer.target_index(target)
        c_night = float(-normalizer.target_mean[j] / normalizer.target_std[j])
        return cls(params=tuple((n, float(params[n])) for n in GATE_PARAMS), c_night=c_night)

    def as_dict(self) -> Dict[str, float]:
        return dict(self.params)

    def to_json(self) -> str:
        return json.dumps({"params": self.as_dict(), "c_night": self.c_night}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FrozenGate":
        payload = json.loads(text)
        return cls(params=tuple((n, float(payload["params"][n])) for n in GATE_PARAMS),
                   c_night=float(payload["c_night"]))

    def gate_bytes(self) -> bytes:
        return self.to_json().encode('utf-8')


def gate(inputs: RadiationInputs, g: FrozenGate):
    """(alpha, d): cloud weight from the frozen coefficients, d = 1{COSZRS > 0}"""
    _, alpha = cloud_weight(inputs, g.as_dict())
    d = (inputs.COSZRS > 0).astype(float)
    return alpha, d


def blend(clear, cloud, alpha):
    """(1 - alpha) clear + alpha cloud, kept inside [min, max] of the two"""
    value = (1.0 - alpha) * clear + alpha * cloud
    return np.clip(value, np.minimum(clear, cloud), np.maximum(clear, cloud))


def combine(expert_outputs: Dict[str, np.ndarray], alpha, d, c_night: float):
    """Standardised (NETSW, FLWDS) from the four expert outputs"""
    out = {k: np.asarray(v, dtype=float).reshape(-1) for k, v in expert_outputs.items()}
    alpha = np.asarray(alpha, dtype=float)
    d = np.asarray(d, dtype=float)
    shortwave = np.where(d > 0, blend(out["sw_clear"], out["sw_cloud"], alpha), c_night)
    longwave = blend(out["lw_clear"], out["lw_cloud"], alpha)
    return shortwave, longwave


def design_matrix(X_norm, inputs: RadiationInputs, g: FrozenGate) -> np.ndarray:
    """Normalised features with the gate's alpha and d appended as two columns"""
    alpha, d = gate(inputs, g)
    return np.column_stack([np.asarray(X_norm, dtype=float), alpha, d])


class CompositionalModel:
    """Expert networks plus frozen gate; implements the training protocol of ``fit``"""

    def __init__(self, experts: Dict[str, MlpModel], frozen_gate: FrozenGate,
                 feature_names: Sequence[str], target_names: Sequence[str]):
        self.experts = {name: experts[name] for name in EXPERTS}
        self.gate = frozen_gate
        self.feature_names = tuple(feature_names)
        self.target_names = tuple(target_names)
        missing = sorted({c for cols in EXPERT_INPUTS.values() for c in cols} - set(self.feature_names))
        if missing:
            raise ValidationError(f"Features missing for the experts: {', '.join(missing)}")
        if sorted(self.target_names) != ["FLWDS", "NETSW"]:
            raise ValidationError("Compositional model predicts exactly NETSW and FLWDS")
        self.columns = {name: [self.feature_names.index(c) for c in EXPERT_INPUTS[name]]
                        for name in EXPERTS}
        for name, model in self.experts.items():
            cfg = model.config
            if cfg.output_dim != 1 or cfg.input_dim != len(EXPERT_INPUTS[name]):
                raise ValidationError(f"Expert {name} must map {len(EXPERT_INPUTS[name])} inputs to one scalar")
        self._sw = self.target_names.index("NETSW")
        self._lw = self.target_names.index("FLWDS")

    @classmethod
    def initialize(cls, frozen_gate: FrozenGate, feature_names, target_names,
                   expert_cfgs: Union[ArchitectureSpec, Dict[str, ArchitectureSpec]] = DEFAULT_EXPERT,
                   seed: int = 0) -> "CompositionalModel":
        experts = {}
        for k, name in enumerate(EXPERTS):
            spec = expert_cfgs[name] if isinstance(expert_cfgs, dict) else expert_cfgs
            config = spec.with_dims(len(EXPERT_INPUTS[name]), 1)
            experts[name] = MlpModel.initialize(config, np.random.SeedSequence([seed, 0, k]))
        return cls(experts, frozen_gate, feature_names, target_names)

    @property
    def expert_param_counts(self) -> Dict[str, int]:
        return {name: m.n_params for name, m in self.experts.items()}

    def parameter_groups(self):
        groups = []
        for name, model in self.experts.items():
            (group,) = model.parameter_groups()
            groups.append(ParamGroup(group.params, group.lr, group.weight_decay, name))
        return groups

    def snapshot(self):
        return {name: m.snapshot() for name, m in self.experts.items()}

    def restore(self, snapshot):
        for name, m in self.experts.items():
            m.restore(snapshot[name])

    def _split(self, X_aug):
        X_aug = np.asarray(X_aug, dtype=float)
        if X_aug.ndim != 2 or X_aug.shape[1] != len(self.feature_names) + 2:
            raise ValidationError(f"Expected {len(self.feature_names) + 2} columns (features, alpha, d)")
        return X_aug[:, :-2], X_aug[:, -2], X_aug[:, -1]

    def _assemble(self, shortwave, longwave):
        pred = np.empty((shortwave.shape[0], 2))
        pred[:, self._sw] = shortwave
        pred[:, self._lw] = longwave
        return pred

    def predict(self, X_aug) -> np.ndarray:
        """Standardised predictions in target_names order"""
        X, alpha, d = self._split(X_aug)
        outputs = {name: m.predict(X[:, self.columns[name]]) for name, m in self.experts.items()}
        return self._assemble(*combine(outputs, alpha, d, self.gate.c_night))

    def predict_physical(self, X_aug, normalizer: Normalizer) -> np.ndarray:
        """Predictions in physical units; night NETSW is exactly zero"""
        _, _, d = self._split(X_aug)
        physical = normalizer.inverse_targets(self.predict(X_aug))
        physical[d <= 0, self._sw] = 0.0
        return physical

    def loss_and_grads(self, X_aug, Y, loss, rng=None, train_mode=True):
        X, alpha, d = self._split(X_aug)
        seeds = rng.integers(0, 2 ** 32, size=len(EXPERTS)) if rng is not None else [None] * len(EXPERTS)
        outputs, caches = {}, {}
        for seed, (name, model) in zip(seeds, self.experts.items()):
            expert_rng = np.random.default_rng(seed) if seed is not None else None
            outputs[name], caches[name] = model.forward_cached(X[:, self.columns[name]], train_mode, expert_rng)

        pred = self._assemble(*combine(outputs, alpha, d, self.gate.c_night))
        value, grad = loss(pred, Y)
        g_sw, g_lw = grad[:, self._sw], grad[:, self._lw]
        upstream = {
            "sw_clear": d * (1.0 - alpha) * g_sw,
            "sw_cloud": d * alpha * g_sw,
            "lw_clear": (1.0 - alpha) * g_lw,
            "lw_cloud": alpha * g_lw,
        }
        day = bool(np.any(d > 0))
        grads = []
        for name, model in self.experts.items():
            if name in SHORTWAVE and not day:
                grads.append(None)
            else:
                grads.append(model.backward(caches[name], upstream[name][:, None]))
        return value, grads


def train_compositional(data: TrainData, frozen_gate: FrozenGate, feature_names, target_names,
                        expert_cfgs=DEFAULT_EXPERT, train_cfg: Optional[TrainConfig] = None,
                        cell: Optional[str] = None) -> Tuple[CompositionalModel, TrainRecord]:
    """Joint training of all four experts on the blended loss.

    ``data`` holds design matrices from ``design_matrix``; the gate stays
    constant throughout.
    """
    train_cfg = train_cfg or TrainConfig.radiation_protocol()
    model = CompositionalModel.initialize(frozen_gate, feature_names, target_names,
                                          expert_cfgs, train_cfg.seed)
    experts = {name: m.config.model_dump(mode='json') for name, m in model.experts.items()}
    snapshot = {"experts": experts, "gate": json.loads(frozen_gate.to_json()),
                "training": train_cfg.model_dump(mode='json')}
    record = fit(model, data, train_cfg, snapshot, cell)
    logger.info(f"Compositional model trained; expert sizes {model.expert_param_counts}", cell)
    return model, record


def compositional_to_bytes(model: CompositionalModel) -> bytes:
    header = {
        "gate": json.loads(model.gate.to_json()),
        "feature_names": list(model.feature_names),
        "target_names": list(model.target_names),
        "experts": [{"name": n, "config": m.config.model_dump(mode='json')} for n, m in model.experts.items()],
    }
    arrays = [p for m in model.experts.values() for p in m.parameters()]
    return encode_bundle(COMP_MAGIC, header, arrays)


def compositional_from_bytes(blob: bytes) -> CompositionalModel:
    header, arrays = decode_bundle(COMP_MAGIC, blob)
    experts, offset = {}, 0
    for entry in header["experts"]:
        config = MlpConfig(**entry["config"])
        n_arrays = 2 * (config.hidden_layers + 1)
        chunk = arrays[offset:offset + n_arrays]
        experts[entry["name"]] = MlpModel(config, chunk[0::2], chunk[1::2])
        offset += n_arrays
    frozen_gate = FrozenGate.from_json(json.dumps(header["gate"]))
    return CompositionalModel(experts, frozen_gate, header["feature_names"], header["target_names"])


def save_compositional(model: CompositionalModel, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(compositional_to_bytes(model))


def load_compositional(path) -> CompositionalModel:
    return compositional_from_bytes(Path(path).read_bytes())
