import math

import numpy as np
import pytest
from pydantic import ValidationError as PydanticValidationError

from database.models import ParamSpec, Stage
from physics.params import GATE_PARAMS, PhysicalParams
from physics.radiation import (INPUT_NAMES, STEFAN_BOLTZMANN, RadiationInputs, cloud_weight,
                               flwds_forward, forward, longwave_branches, netsw_forward,
                               shortwave_branches, surface_temperature)
from utils.errors import ValidationError


def inputs(n=1, **overrides):
    values = dict(T=288.0, RH=0.5, qn=1e-4, PS=1.0e5, SOLIN=1000.0, COSZRS=0.8, ASDIF=0.1,
                  ASDIR=0.1, LWUP=390.0, ICEFRAC=0.0, LANDFRAC=0.3, OCNFRAC=0.7)
    values.update(overrides)
    return RadiationInputs(**{k: np.full(n, v) if np.isscalar(v) else v for k, v in values.items()})


def random_batch(rng, n):
    return RadiationInputs(
        T=rng.uniform(220, 320, n), RH=rng.uniform(0, 1, n), qn=rng.uniform(0, 1e-3, n),
        PS=rng.uniform(5e4, 1.05e5, n), SOLIN=rng.uniform(0, 1400, n), COSZRS=rng.uniform(-1, 1, n),
        ASDIF=rng.uniform(0, 1, n), ASDIR=rng.uniform(0, 1, n), LWUP=rng.uniform(150, 550, n),
        ICEFRAC=rng.uniform(0, 1, n), LANDFRAC=rng.uniform(0, 1, n), OCNFRAC=rng.uniform(0, 1, n),
    ).check_valid()


def scalar_fluxes(x, p):
    """Straight-line transcription of the forward equations for one sample"""
    sigma = 5.670374419e-8
    clip01 = lambda v: min(max(v, 0.0), 1.0)  # noqa: E731
    mu0 = max(x["COSZRS"], 0.0)
    z = p["w_qn"] * x["qn"] + p["w_rh"] * x["RH"] + p["w_sun"] * (1.0 - mu0)
    w = 1.0 / (1.0 + math.exp(-p["s"] * (z - p["tau"])))
    log_ps = math.log(x["PS"] / 1.0e5)
    qn = max(x["qn"], 0.0)

    incoming = x["SOLIN"] * mu0 ** p["gamma"]
    t_clear = min(math.exp(-(p["k0"] + p["k1"] * x["RH"] + p["k2"] * log_ps)), 1.0)
    t_cloud = min(math.exp(-(p["m0"] + p["m1"] * qn ** p["p"] + p["m2"] * x["RH"])), 1.0)
    albedo = clip01(p["a0"] + p["a1"] * x["ICEFRAC"] + p["a2"] * x["LANDFRAC"] + p["a3"] * x["OCNFRAC"])
    cloud_albedo = clip01(albedo + p["a4"] * x["ASDIR"] + p["a5"] * x["ASDIF"])
    sw_clear = incoming * t_clear * (1.0 - albedo)
    sw_cloud = incoming * t_cloud * (1.0 - cloud_albedo)
    netsw = max((1.0 - w) * sw_clear + w * sw_cloud, 0.0)

    surface = sigma * ((x["LWUP"] / sigma) ** 0.25) ** 4
    air = sigma * x["T"] ** 4
    eps_clear = clip01(1.0 - math.exp(-(p["b0"] + p["b1"] * x["RH"] + p["b2"] * log_ps)))
    eps_cloud = clip01(1.0 - math.exp(-(p["c0"] + p["c1"] * x["RH"] + p["c2"] * qn)))
    lw_clear = eps_clear * surface + (1.0 - eps_clear) * air
    lw_cloud = eps_cloud * surface
    flwds = max((1.0 - w) * lw_clear + w * lw_cloud, 0.0)
    return netsw, flwds


@pytest.fixture
def params():
    return PhysicalParams.defaults()


def test_night_has_no_shortwave(params):
    night = inputs(3, COSZRS=np.array([0.0, -0.2, -1.0]))
    np.testing.assert_array_equal(netsw_forward(night, params), np.zeros(3))
    assert np.all(flwds_forward(night, params) > 0)


@pytest.mark.slow
def test_fluxes_are_non_negative_over_random_inputs(params):
    rng = np.random.default_rng(0)
    for _ in range(10):
        out = forward(random_batch(rng, 100_000), params)
        assert np.all(out.NETSW >= 0) and np.all(out.FLWDS >= 0)
        assert np.all(np.isfinite(out.as_matrix()))


@pytest.mark.parametrize("seed", [0, 1])
def test_forward_matches_scalar_transcription(params, seed):
    p = params.perturbed(0.5, seed=seed) if seed else params
    batch = random_batch(np.random.default_rng(10 + seed), 400)
    out = forward(batch, p)
    for i in range(len(batch)):
        x = {name: float(getattr(batch, name)[i]) for name in INPUT_NAMES}
        netsw, flwds = scalar_fluxes(x, p)
        assert out.NETSW[i] == pytest.approx(netsw, rel=1e-12, abs=1e-12)
        assert out.FLWDS[i] == pytest.approx(flwds, rel=1e-12, abs=1e-12)


def test_clear_sky_shortwave_by_hand(params):
    inp = inputs()
    clear, _ = shortwave_branches(inp, params)
    albedo = 0.14 + 0.36 * 0.0 + 0.06 * 0.3 + 0.03 * 0.7
    transmittance = np.exp(-(0.12 + 0.20 * 0.5))
    assert clear[0] == pytest.approx(1000.0 * 0.8 * transmittance * (1 - albedo), rel=1e-12)


def test_fluxes_blend_between_branches(params):
    inp = inputs(4, qn=np.array([0.0, 1e-4, 1e-3, 1e-2]))
    sw_clear, sw_cloudy = shortwave_branches(inp, params)
    lw_clear, lw_cloudy = longwave_branches(inp, params)
    netsw, flwds = netsw_forward(inp, params), flwds_forward(inp, params)
    assert np.all(netsw >= np.minimum(sw_clear, sw_cloudy) - 1e-9)
    assert np.all(netsw <= np.maximum(sw_clear, sw_cloudy) + 1e-9)
    assert np.all(flwds >= np.minimum(lw_clear, lw_cloudy) - 1e-9)
    assert np.all(flwds <= np.maximum(lw_clear, lw_cloudy) + 1e-9)


def test_cloud_weight_grows_with_condensate(params):
    _, w = cloud_weight(inputs(4, qn=np.array([0.0, 0.01, 0.02, 0.05])), params)
    assert np.all(np.diff(w) > 0)
    assert np.all((w > 0) & (w < 1))


def test_steep_gate_selects_one_branch(params):
    sharp = params.with_values(["s", "tau"], [100.0, 10.0])
    inp = inputs()
    clear, _ = shortwave_branches(inp, sharp)
    assert netsw_forward(inp, sharp)[0] == pytest.approx(clear[0], rel=1e-12)


def test_clear_longwave_equals_surface_emission_at_equal_temperatures(params):
    t = 290.0
    inp = inputs(T=t, LWUP=STEFAN_BOLTZMANN * t ** 4)
    clear, _ = longwave_branches(inp, params)
    assert clear[0] == pytest.approx(STEFAN_BOLTZMANN * t ** 4, rel=1e-12)
    assert surface_temperature([STEFAN_BOLTZMANN * 300.0 ** 4])[0] == pytest.approx(300.0)


def test_input_validation():
    with pytest.raises(ValidationError, match="RH"):
        inputs(RH=1.5).check_valid()
    with pytest.raises(ValidationError, match="LWUP"):
        inputs(LWUP=0.0).check_valid()
    with pytest.raises(ValidationError):
        RadiationInputs(**{n: np.ones(2) for n in INPUT_NAMES[:-1]}, OCNFRAC=np.ones(3))
    with pytest.raises(ValidationError, match="Missing"):
        RadiationInputs.from_matrix(np.ones((2, 3)), ["T", "RH", "qn"])
    with pytest.raises(ValidationError):
        surface_temperature([-1.0])


def test_from_matrix_picks_named_columns():
    base = inputs(2, T=np.array([280.0, 300.0]))
    names = list(reversed(INPUT_NAMES)) + ["extra"]
    matrix = np.column_stack([getattr(base, n) for n in reversed(INPUT_NAMES)] + [np.zeros(2)])
    picked = RadiationInputs.from_matrix(matrix, names)
    np.testing.assert_array_equal(picked.as_matrix(), base.as_matrix())


def test_registry_layout(params):
    assert len(params) == 38
    assert len(params.names()) == 25
    assert "c_sun" in params and "c_sun" not in params.names()
    assert set(GATE_PARAMS) <= set(params.stage_names(Stage.JOINT))
    assert params.stage_names(Stage.CLEAR) == ["gamma", "k0", "k1", "k2", "a0", "a1", "a2", "a3",
                                               "b0", "b1", "b2"]
    assert not set(GATE_PARAMS) & set(params.stage_names(Stage.CLOUDY))


def test_registry_updates_are_clamped_copies(params):
    updated = params.with_values(["k0", "a0"], [-3.0, 2.0])
    assert updated["k0"] == 0.0 and updated["a0"] == 1.0
    assert params["k0"] == 0.12
    assert updated != params


def test_perturbation_is_seeded_and_bounded(params):
    a = params.perturbed(0.2, seed=3)
    assert a == params.perturbed(0.2, seed=3)
    for name in params.names():
        spec = a.spec(name)
        assert spec.lo <= spec.value <= spec.hi
    assert all(a[n] == params[n] for n in params.names(active_only=False) if n not in params.names())


def test_registry_persistence(params, tmp_path):
    path = tmp_path / "params.json"
    params.save(path)
    assert PhysicalParams.load(path) == params

    path.write_text("[{\"name\": \"k0\"}]", encoding='utf-8')
    with pytest.raises(ValidationError):
        PhysicalParams.load(path)
    with pytest.raises(ValidationError):
        PhysicalParams([params.spec("k0"), params.spec("k0")])
    with pytest.raises(PydanticValidationError):
        ParamSpec(name="x", value=2.0, lo=0.0, hi=1.0, stage=Stage.CLEAR)
