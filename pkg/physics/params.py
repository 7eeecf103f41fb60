import json
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from database.models import ParamSpec, Stage
from utils.errors import ValidationError

OPTICAL_DEPTH_BOUNDS = (0.0, 50.0)
EXPONENT_BOUNDS = (0.1, 3.0)
ALBEDO_BOUNDS = (0.0, 1.0)

# (name, initial value, lo, hi, stage)
_CORE = [
    # regime definition
    ("w_qn", 8.0, 0.0, 1.0e4, Stage.JOINT),
    ("w_rh", 1.4, 0.0, 50.0, Stage.JOINT),
    ("w_sun", 0.6, 0.0, 50.0, Stage.JOINT),
    ("tau", 0.75, -10.0, 10.0, Stage.JOINT),
    ("s", 10.0, 0.1, 100.0, Stage.JOINT),
    # shortwave clear sky
    ("gamma", 1.0, *EXPONENT_BOUNDS, Stage.CLEAR),
    ("k0", 0.12, *OPTICAL_DEPTH_BOUNDS, Stage.CLEAR),
    ("k1", 0.20, *OPTICAL_DEPTH_BOUNDS, Stage.CLEAR),
    ("k2", 0.08, *OPTICAL_DEPTH_BOUNDS, Stage.CLEAR),
    # shortwave cloudy sky
    ("m0", 0.22, *OPTICAL_DEPTH_BOUNDS, Stage.CLOUDY),
    ("m1", 6.0, *OPTICAL_DEPTH_BOUNDS, Stage.CLOUDY),
    ("m2", 0.70, *OPTICAL_DEPTH_BOUNDS, Stage.CLOUDY),
    ("p", 0.6, *EXPONENT_BOUNDS, Stage.CLOUDY),
    # albedo
    ("a0", 0.14, *ALBEDO_BOUNDS, Stage.CLEAR),
    ("a1", 0.36, *ALBEDO_BOUNDS, Stage.CLEAR),
    ("a2", 0.06, *ALBEDO_BOUNDS, Stage.CLEAR),
    ("a3", 0.03, *ALBEDO_BOUNDS, Stage.CLEAR),
    ("a4", 0.02, *ALBEDO_BOUNDS, Stage.CLOUDY),
    ("a5", 0.02, *ALBEDO_BOUNDS, Stage.CLOUDY),
    # longwave clear sky
    ("b0", 0.20, *OPTICAL_DEPTH_BOUNDS, Stage.CLEAR),
    ("b1", 0.90, *OPTICAL_DEPTH_BOUNDS, Stage.CLEAR),
    ("b2", 0.08, *OPTICAL_DEPTH_BOUNDS, Stage.CLEAR),
    # longwave cloudy sky
    ("c0", 0.35, *OPTICAL_DEPTH_BOUNDS, Stage.CLOUDY),
    ("c1", 1.20, *OPTICAL_DEPTH_BOUNDS, Stage.CLOUDY),
    ("c2", 4.50, *OPTICAL_DEPTH_BOUNDS, Stage.CLOUDY),
]

# Registered but not used by the forward equations.
_EXTENDED = [
    ("c_sun", 0.18, 0.0, 1.0, Stage.JOINT),
    ("k3", 0.15, *OPTICAL_DEPTH_BOUNDS, Stage.CLEAR),
    ("m3", 0.65, *OPTICAL_DEPTH_BOUNDS, Stage.CLOUDY),
    ("p2", 1.2, *EXPONENT_BOUNDS, Stage.CLOUDY),
    ("a_low_sun", 0.08, *ALBEDO_BOUNDS, Stage.CLEAR),
    ("a_cloud", 0.07, *ALBEDO_BOUNDS, Stage.CLOUDY),
    ("b3_lw", 0.70, *OPTICAL_DEPTH_BOUNDS, Stage.CLOUDY),
    ("delta_T", -1.0, -50.0, 50.0, Stage.JOINT),
    ("t_rh", 2.0, -50.0, 50.0, Stage.JOINT),
    ("t_qn", -15.0, -50.0, 50.0, Stage.JOINT),
    ("Gamma", 8.0, -50.0, 50.0, Stage.JOINT),
    ("t_rh_c", 1.2, -50.0, 50.0, Stage.JOINT),
    ("t_qn_c", 20.0, -50.0, 50.0, Stage.JOINT),
]

GATE_PARAMS = ("w_qn", "w_rh", "w_sun", "tau", "s")


class PhysicalParams:
    """Ordered, bounded coefficient registry of the radiation model.

    Instances are treated as values: updates return a new registry.
    """

    def __init__(self, specs: Iterable[ParamSpec]):
        self._specs: Dict[str, ParamSpec] = {}
        for spec in specs:
            if spec.name in self._specs:
                raise ValidationError(f"Duplicate parameter '{spec.name}'")
            self._specs[spec.name] = spec

    @classmethod
    def defaults(cls) -> "PhysicalParams":
        """Registry initialised to the physically plausible starting values"""
        specs = [ParamSpec(name=n, value=v, lo=lo, hi=hi, stage=st, active=True)
                 for n, v, lo, hi, st in _CORE]
        specs += [ParamSpec(name=n, value=v, lo=lo, hi=hi, stage=st, active=False)
                  for n, v, lo, hi, st in _EXTENDED]
        return cls(specs)

    def __getitem__(self, name) -> float:
        return self._specs[name].value

    def __contains__(self, name):
        return name in self._specs

    def __len__(self):
        return len(self._specs)

    def __eq__(self, other):
        return isinstance(other, PhysicalParams) and self.specs() == other.specs()

    def spec(self, name) -> ParamSpec:
        return self._specs[name]

    def specs(self) -> List[ParamSpec]:
        return list(self._specs.values())

    def names(self, active_only=True) -> List[str]:
        return [n for n, s in self._specs.items() if s.active or not active_only]

    def stage_names(self, stage: Stage) -> List[str]:
        """Active parameters freed in a calibration stage"""
        if stage == Stage.JOINT:
            return self.names()
        return [n for n, s in self._specs.items() if s.active and s.stage == stage]

    def vector(self, names: Sequence[str]) -> np.ndarray:
        return np.array([self._specs[n].value for n in names], dtype=float)

    def bounds(self, names: Sequence[str]):
        return [(self._specs[n].lo, self._specs[n].hi) for n in names]

    def with_values(self, names: Sequence[str], values) -> "PhysicalParams":
        """New registry with the named values replaced (clamped to bounds)"""
        updated = dict(self._specs)
        for name, value in zip(names, np.asarray(values, dtype=float)):
            spec = self._specs[name]
            clamped = float(min(max(value, spec.lo), spec.hi))
            updated[name] = spec.model_copy(update={"value": clamped})
        return PhysicalParams(updated.values())

    def perturbed(self, fraction: float, seed: int, names=None) -> "PhysicalParams":
        """Multiply each named value by a factor in [1-fraction, 1+fraction], clamped"""
        names = self.names() if names is None else list(names)
        rng = np.random.default_rng(seed)
        factors = rng.uniform(1.0 - fraction, 1.0 + fraction, size=len(names))
        return self.with_values(names, self.vector(names) * factors)

    def subset(self, names: Sequence[str]) -> Dict[str, float]:
        return {n: self._specs[n].value for n in names}

    def to_records(self) -> List[dict]:
        return [s.model_dump(mode='json') for s in self._specs.values()]

    def to_json(self) -> str:
        return json.dumps(self.to_records(), indent=2)

    @classmethod
    def from_records(cls, records) -> "PhysicalParams":
        try:
            return cls(ParamSpec(**r) for r in records)
        except (PydanticValidationError, TypeError) as e:
            raise ValidationError(f"Invalid parameter registry: {e}") from e

    def save(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_json(), encoding='utf-8')

    @classmethod
    def load(cls, path) -> "PhysicalParams":
        try:
            records = json.loads(Path(path).read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError(f"Cannot read parameter file {path}: {e}") from e
        return cls.from_records(records)
