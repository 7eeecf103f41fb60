"""Synthetic spatio-temporal datasets with planted covariate shift.

Covariate mode keeps the input->target map fixed and moves the input
distribution per season (and optionally along a yearly trend). Radiation
mode draws the twelve near-surface inputs and computes NETSW / FLWDS with
the physical forward model.
"""
import numpy as np

from data.dataset import ClimateDataset, GridCell
from data.partition import SEASON_OF_MONTH
from database.models import Season, SyntheticConfig
from physics.params import PhysicalParams
from physics.radiation import INPUT_NAMES, STEFAN_BOLTZMANN, RadiationInputs, forward
from utils.logger import logger

# Position of each season along the shift direction
SEASON_OFFSETS = {Season.DJF: 0.0, Season.MAM: 1.0, Season.JJA: 2.0, Season.SON: 3.0}

SOLAR_CONSTANT = 1361.0


def _grid(config: SyntheticConfig):
    lo, hi = config.lat_range
    lats = np.linspace(lo, hi, config.n_lat) if config.n_lat > 1 else np.array([(lo + hi) / 2.0])
    lons = np.linspace(0.0, 360.0, config.n_lon, endpoint=False)
    cells = [GridCell(id=i * config.n_lon + j, lat=float(lat), lon=float(lon))
             for i, lat in enumerate(lats) for j, lon in enumerate(lons)]
    return cells


def _axes(config: SyntheticConfig):
    n_times = config.n_years * 12
    time_ids = np.arange(n_times)
    months = time_ids % 12 + 1
    years = config.start_year + time_ids // 12
    cells = _grid(config)
    sample_time = np.repeat(time_ids, len(cells))
    sample_cell = np.tile(np.arange(len(cells)), n_times)
    return time_ids, months, years, cells, sample_time, sample_cell


def shift_direction(n_features: int) -> np.ndarray:
    return np.ones(n_features) / np.sqrt(n_features)


def planted_mapping(X, mapping: str) -> np.ndarray:
    """The fixed input->target map shared by every group"""
    d = X.shape[1]
    a = np.linspace(0.5, 1.5, d) / np.sqrt(d)
    u = shift_direction(d)
    projection = X @ u
    if mapping == "linear":
        return X @ a + 0.5
    if mapping == "quadratic":
        return projection ** 2 + 0.5 * (X @ a)
    return np.sin(projection) + 0.3 * (X @ a)


def _covariate(config: SyntheticConfig, rng):
    time_ids, months, years, cells, sample_time, sample_cell = _axes(config)
    n = sample_time.size
    d = config.n_features
    u = shift_direction(d)

    season_pos = np.array([SEASON_OFFSETS[SEASON_OF_MONTH[int(m)]] for m in months])[sample_time]
    year_pos = (years[sample_time] - config.start_year) / max(config.n_years - 1, 1)
    offset = config.shift_magnitude * season_pos + config.trend_magnitude * year_pos

    X = rng.standard_normal((n, d)) + offset[:, None] * u[None, :]
    y = planted_mapping(X, config.mapping) + config.noise * rng.standard_normal(n)
    return ClimateDataset.from_arrays(
        time_ids=time_ids, months=months, years=years, cells=cells,
        features=X, targets=y[:, None],
        feature_names=[f"x{j}" for j in range(d)], target_names=["y"],
        sample_time=sample_time, sample_cell=sample_cell,
    )


def radiation_inputs(config: SyntheticConfig, rng, sample_time, sample_cell, months, cells):
    """Draw physically plausible near-surface inputs with a seasonal cycle"""
    n = sample_time.size
    lat = np.radians(np.array([c.lat for c in cells]))[sample_cell]
    month = months[sample_time]
    seasonal = config.shift_magnitude * np.sin(2.0 * np.pi * (month - 3) / 12.0)
    declination = np.radians(23.44) * np.clip(seasonal, -1.0, 1.0)
    hour_angle = rng.uniform(-np.pi, np.pi, n)
    coszrs = (np.sin(lat) * np.sin(declination)
              + np.cos(lat) * np.cos(declination) * np.cos(hour_angle))

    hemisphere = np.sign(lat)
    T = 273.0 + 27.0 * np.cos(lat) + 8.0 * seasonal * hemisphere + 3.0 * rng.standard_normal(n)
    RH = np.clip(0.65 + 0.1 * seasonal * hemisphere + 0.15 * rng.standard_normal(n), 0.05, 1.0)
    qn = rng.gamma(shape=0.5, scale=4.0e-4, size=n) * (RH > 0.6)
    PS = 101325.0 + 900.0 * rng.standard_normal(n)
    LWUP = STEFAN_BOLTZMANN * (T + 1.0 + 2.0 * rng.standard_normal(n)) ** 4

    cell_land = np.random.default_rng(7).uniform(0.0, 0.6, len(cells))[sample_cell]
    ice = np.clip((np.abs(np.degrees(lat)) - 55.0) / 20.0 - 0.3 * seasonal * hemisphere, 0.0, 1.0)
    land = cell_land * (1.0 - ice)
    ocean = np.clip(1.0 - ice - land, 0.0, 1.0)
    asdir = np.clip(0.06 + 0.5 * ice + 0.05 * rng.standard_normal(n), 0.0, 1.0)
    asdif = np.clip(0.08 + 0.5 * ice + 0.05 * rng.standard_normal(n), 0.0, 1.0)

    return RadiationInputs(
        T=T, RH=RH, qn=qn, PS=PS, SOLIN=SOLAR_CONSTANT * np.maximum(coszrs, 0.0), COSZRS=coszrs,
        ASDIF=asdif, ASDIR=asdir, LWUP=LWUP, ICEFRAC=ice, LANDFRAC=land, OCNFRAC=ocean,
    )


def _radiation(config: SyntheticConfig, rng):
    time_ids, months, years, cells, sample_time, sample_cell = _axes(config)
    inputs = radiation_inputs(config, rng, sample_time, sample_cell, months, cells)
    outputs = forward(inputs, PhysicalParams.defaults())
    n = len(inputs)
    netsw = np.maximum(outputs.NETSW * (1.0 + config.noise * rng.standard_normal(n)), 0.0)
    flwds = np.maximum(outputs.FLWDS * (1.0 + config.noise * rng.standard_normal(n)), 0.0)
    return ClimateDataset.from_arrays(
        time_ids=time_ids, months=months, years=years, cells=cells,
        features=inputs.as_matrix(), targets=np.column_stack([netsw, flwds]),
        feature_names=INPUT_NAMES, target_names=["NETSW", "FLWDS"],
        sample_time=sample_time, sample_cell=sample_cell,
    )


def generate_synthetic(config: SyntheticConfig, seed: int) -> ClimateDataset:
    """Generate a dense synthetic dataset"""
    rng = np.random.default_rng(seed)
    dataset = _covariate(config, rng) if config.mode == "covariate" else _radiation(config, rng)
    logger.info(f"Generated synthetic {config.mode} dataset: {dataset.n_samples} samples, seed {seed}")
    return dataset
