"""Piecewise clear-sky / cloudy-sky surface radiation model.

Both fluxes blend a clear and a cloudy branch through a sigmoid cloud
weight. Pressure enters as log(PS / 1e5 Pa).
"""
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
from scipy.special import expit

from physics.params import PhysicalParams
from utils.errors import ValidationError

STEFAN_BOLTZMANN = 5.670374419e-8  # W m-2 K-4
REFERENCE_PRESSURE = 1.0e5  # Pa
_TINY = np.finfo(float).tiny

INPUT_NAMES = ("T", "RH", "qn", "PS", "SOLIN", "COSZRS", "ASDIF", "ASDIR",
               "LWUP", "ICEFRAC", "LANDFRAC", "OCNFRAC")
TARGET_NAMES = ("NETSW", "FLWDS")


@dataclass(frozen=True)
class RadiationInputs:
    """Batch of the twelve near-surface inputs (1-D arrays of equal length)"""
    T: np.ndarray
    RH: np.ndarray
    qn: np.ndarray
    PS: np.ndarray
    SOLIN: np.ndarray
    COSZRS: np.ndarray
    ASDIF: np.ndarray
    ASDIR: np.ndarray
    LWUP: np.ndarray
    ICEFRAC: np.ndarray
    LANDFRAC: np.ndarray
    OCNFRAC: np.ndarray

    def __post_init__(self):
        lengths = set()
        for f in fields(self):
            value = np.atleast_1d(np.asarray(getattr(self, f.name), dtype=float))
            object.__setattr__(self, f.name, value)
            lengths.add(value.shape)
        if len(lengths) != 1:
            raise ValidationError(f"Radiation inputs have mismatched shapes: {sorted(lengths)}")

    @classmethod
    def from_matrix(cls, matrix, names: Sequence[str]) -> "RadiationInputs":
        """Pick the twelve inputs out of a named feature matrix"""
        matrix = np.asarray(matrix, dtype=float)
        missing = [n for n in INPUT_NAMES if n not in names]
        if missing:
            raise ValidationError(f"Missing radiation inputs: {', '.join(missing)}")
        names = list(names)
        return cls(**{n: matrix[:, names.index(n)] for n in INPUT_NAMES})

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([getattr(self, n) for n in INPUT_NAMES])

    def __len__(self):
        return self.T.shape[0]

    def check_valid(self):
        """Raise when a physical invariant of the inputs is violated"""
        problems = []
        if np.any(self.SOLIN < 0):
            problems.append("SOLIN < 0")
        if np.any(self.LWUP <= 0):
            problems.append("LWUP <= 0")
        if np.any(self.PS <= 0):
            problems.append("PS <= 0")
        for name in ("ICEFRAC", "LANDFRAC", "OCNFRAC", "ASDIF", "ASDIR", "RH"):
            value = getattr(self, name)
            if np.any((value < 0) | (value > 1)):
                problems.append(f"{name} outside [0, 1]")
        if problems:
            raise ValidationError(f"Invalid radiation inputs: {'; '.join(problems)}")
        return self


@dataclass(frozen=True)
class RadiationOutputs:
    NETSW: np.ndarray
    FLWDS: np.ndarray

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([self.NETSW, self.FLWDS])


def solar_factor(inp: RadiationInputs) -> np.ndarray:
    """mu0 = max(0, cos zenith)"""
    return np.maximum(inp.COSZRS, 0.0)


def cloud_weight(inp: RadiationInputs, p: PhysicalParams):
    """Cloud regime index z and sigmoid weight w = sigmoid(s (z - tau))"""
    mu0 = solar_factor(inp)
    z = p["w_qn"] * inp.qn + p["w_rh"] * inp.RH + p["w_sun"] * (1.0 - mu0)
    w = expit(p["s"] * (z - p["tau"]))
    return z, w


def _log_pressure(inp: RadiationInputs) -> np.ndarray:
    if np.any(inp.PS <= 0):
        raise ValidationError("Surface pressure must be positive")
    return np.log(inp.PS / REFERENCE_PRESSURE)


def _transmittance(optical_depth):
    return np.clip(np.exp(-optical_depth), _TINY, 1.0)


def _emissivity(optical_depth):
    return np.clip(1.0 - np.exp(-optical_depth), 0.0, 1.0)


def surface_albedo(inp: RadiationInputs, p: PhysicalParams) -> np.ndarray:
    alpha = p["a0"] + p["a1"] * inp.ICEFRAC + p["a2"] * inp.LANDFRAC + p["a3"] * inp.OCNFRAC
    return np.clip(alpha, 0.0, 1.0)


def cloud_albedo(inp: RadiationInputs, p: PhysicalParams) -> np.ndarray:
    alpha = surface_albedo(inp, p) + p["a4"] * inp.ASDIR + p["a5"] * inp.ASDIF
    return np.clip(alpha, 0.0, 1.0)


def shortwave_branches(inp: RadiationInputs, p: PhysicalParams):
    """Clear and cloudy NETSW branches"""
    log_ps = _log_pressure(inp)
    qn = np.maximum(inp.qn, 0.0)
    incoming = inp.SOLIN * solar_factor(inp) ** p["gamma"]
    t_clear = _transmittance(p["k0"] + p["k1"] * inp.RH + p["k2"] * log_ps)
    t_cloud = _transmittance(p["m0"] + p["m1"] * qn ** p["p"] + p["m2"] * inp.RH)
    clear = incoming * t_clear * (1.0 - surface_albedo(inp, p))
    cloudy = incoming * t_cloud * (1.0 - cloud_albedo(inp, p))
    return clear, cloudy


def netsw_forward(inp: RadiationInputs, p: PhysicalParams) -> np.ndarray:
    """Net shortwave flux at the surface (W/m2)"""
    _, w = cloud_weight(inp, p)
    clear, cloudy = shortwave_branches(inp, p)
    return np.maximum((1.0 - w) * clear + w * cloudy, 0.0)


def surface_temperature(lwup) -> np.ndarray:
    """Radiating temperature (LWUP / sigma)^(1/4)"""
    lwup = np.asarray(lwup, dtype=float)
    if np.any(lwup <= 0):
        raise ValidationError("LWUP must be positive")
    return (lwup / STEFAN_BOLTZMANN) ** 0.25


def emissivities(inp: RadiationInputs, p: PhysicalParams):
    log_ps = _log_pressure(inp)
    eps_clear = _emissivity(p["b0"] + p["b1"] * inp.RH + p["b2"] * log_ps)
    eps_cloud = _emissivity(p["c0"] + p["c1"] * inp.RH + p["c2"] * np.maximum(inp.qn, 0.0))
    return eps_clear, eps_cloud


def longwave_branches(inp: RadiationInputs, p: PhysicalParams):
    """Clear and cloudy FLWDS branches"""
    t_s = surface_temperature(inp.LWUP)
    surface_emission = STEFAN_BOLTZMANN * t_s ** 4
    air_emission = STEFAN_BOLTZMANN * inp.T ** 4
    eps_clear, eps_cloud = emissivities(inp, p)
    clear = eps_clear * surface_emission + (1.0 - eps_clear) * air_emission
    cloudy = eps_cloud * surface_emission
    return clear, cloudy


def flwds_forward(inp: RadiationInputs, p: PhysicalParams) -> np.ndarray:
    """Downward longwave flux at the surface (W/m2)"""
    _, w = cloud_weight(inp, p)
    clear, cloudy = longwave_branches(inp, p)
    return np.maximum((1.0 - w) * clear + w * cloudy, 0.0)


def forward(inp: RadiationInputs, p: PhysicalParams) -> RadiationOutputs:
    return RadiationOutputs(NETSW=netsw_forward(inp, p), FLWDS=flwds_forward(inp, p))
