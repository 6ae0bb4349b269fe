import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcsim.model import (
    STAGES,
    SUCCESSORS,
    ConfigurationError,
    HazardRate,
    ScenarioConfig,
    State,
    TransitionParams,
    annual_to_cycle_probability,
    background_mortality_probability,
    incidence_probability,
    rate_to_probability,
)
from bcsim.model import DEFAULT_INCIDENCE_BY_DECADE as INC


def test_ten_states_and_absorbing_deceased():
    assert len(State) == 10
    assert SUCCESSORS[State.DECEASED] == ()
    assert set(SUCCESSORS) == set(State)


def test_no_stage_regression():
    for src, dests in SUCCESSORS.items():
        for dst in dests:
            if src.is_cancer and dst.is_cancer:
                assert dst.stage >= src.stage
                if dst.is_undiagnosed == src.is_undiagnosed:
                    assert dst.stage == src.stage + 1


def test_hazard_rate_units():
    r = HazardRate(0.52, "year")
    assert r.per_cycle().value == pytest.approx(0.01)
    assert r.per_cycle().per_year().value == pytest.approx(0.52)
    with pytest.raises(ValueError):
        HazardRate(-1.0)
    with pytest.raises(ValueError):
        HazardRate(1.0, "month")


@pytest.mark.parametrize(
    "rate,t,expected",
    [(0.1, 1, 0.09516258196404048), (0, 5, 0.0), (0.1642, 5, 0.5600085570060664)],
)
def test_rate_to_probability(rate, t, expected):
    assert rate_to_probability(rate, t) == pytest.approx(expected, abs=1e-12)


def test_rate_to_probability_domain():
    with pytest.raises(ValueError):
        rate_to_probability(-0.1, 1)
    with pytest.raises(ValueError):
        rate_to_probability(0.1, -1)


@given(st.floats(1e-6, 5), st.floats(1e-6, 5), st.floats(1.01, 3))
def test_rate_to_probability_increasing(rate, t, f):
    p = rate_to_probability(rate, t)
    assert 0 <= p < 1
    assert rate_to_probability(rate * f, t) > p
    assert rate_to_probability(rate, t * f) > p


@pytest.mark.parametrize(
    "p,expected",
    # 1 - (1 - p) ** (1 / 52), evaluated independently
    [(0.124, 0.002542707752285711), (0.116, 0.0023683106616426697), (0.0, 0.0), (1.0, 1.0)],
)
def test_annual_to_cycle(p, expected):
    assert annual_to_cycle_probability(p) == pytest.approx(expected, abs=1e-15)


@given(st.floats(0, 1))
def test_annual_to_cycle_round_trip(p):
    c = annual_to_cycle_probability(p)
    assert 0 <= c <= 1
    assert 1 - (1 - c) ** 52 == pytest.approx(p, abs=1e-12)


def test_annual_to_cycle_domain():
    for bad in (-0.1, 1.1):
        with pytest.raises(ValueError):
            annual_to_cycle_probability(bad)


@pytest.mark.parametrize("age,expected", [(40, 0.000029), (25, 0.000002), (85, 0.000058), (49, 0.000029), (80, 0.000058)])
def test_incidence_lookup(age, expected):
    assert incidence_probability(age, INC) == expected


def test_incidence_young_rejected():
    with pytest.raises(ValueError):
        incidence_probability(24, INC)


def test_background_mortality():
    table = {30: 0.01, 31: 0.0}
    assert background_mortality_probability(30, table) == pytest.approx(0.00019325701294758968, abs=1e-15)
    assert background_mortality_probability(31, table) == 0.0
    with pytest.raises(ConfigurationError):
        background_mortality_probability(110, table)


def test_progression(params):
    assert params.progression_probability(1, True, 1) == pytest.approx(0.0009 * (1 - math.exp(-10)), rel=1e-12)
    assert params.progression_probability(1, True, 0) == 0.0
    assert params.progression_probability(2, False, 3) == pytest.approx(0.0009 * (1 - math.exp(-75)), rel=1e-12)
    with pytest.raises(ValueError):
        params.progression_probability(4, True, 3)


def test_diagnosis(params):
    assert params.diagnosis_probability(False) == pytest.approx(0.002542707752285711, abs=1e-15)
    assert params.diagnosis_probability(True) == pytest.approx(0.0023683106616426697, abs=1e-15)
    assert params.diagnosis_probability(False) > params.diagnosis_probability(True)


def test_healing(params):
    from bcsim.calibration import fit_healing_lambda

    for s in STAGES:
        assert params.healing_probability(s, False, 0) == 0.0
        assert params.healing_probability(s, False, 1e9) == pytest.approx(1 / 3)
    lam3 = fit_healing_lambda(0.52, 1 / 3)
    assert params.healing_probability(3, False, 52) == pytest.approx((1 / 3) * (1 - math.exp(-lam3 * 52)), rel=1e-12)


def test_healing_uncalibrated():
    p = TransitionParams(INC, {25: 0.0})
    with pytest.raises(ConfigurationError):
        p.healing_probability(1, False, 3)


@pytest.mark.parametrize(
    "stage,diagnosed,lockdown,lam",
    [(3, True, False, 0.1642), (4, True, True, 0.3715), (1, False, False, 0.0061), (1, False, True, 0.0061)],
)
def test_cancer_death(params, stage, diagnosed, lockdown, lam):
    assert params.cancer_death_probability(stage, diagnosed, lockdown) == pytest.approx(1 - math.exp(-lam / 52), abs=1e-15)


def test_cancer_death_known_values(params):
    assert params.cancer_death_probability(3, True, False) == pytest.approx(0.0031527, abs=5e-8)
    assert params.cancer_death_probability(4, True, True) == pytest.approx(0.0071190, abs=5e-7)
    assert params.cancer_death_probability(1, False, False) == pytest.approx(0.00011730, abs=5e-9)


def test_lockdown_death_ordering(params):
    for s in (2, 3, 4):
        assert params.cancer_death_probability(s, True, True) >= params.cancer_death_probability(s, True, False)
    # published stage-1 lockdown hazard is below the normal one; kept verbatim
    assert params.cancer_death_probability(1, True, True) < params.cancer_death_probability(1, True, False)


@settings(max_examples=200)
@given(
    state=st.sampled_from([s for s in State if s != State.DECEASED]),
    age=st.integers(25, 105),
    t=st.integers(0, 5000),
    lockdown=st.booleans(),
)
def test_segments_are_probabilities(params, state, age, t, lockdown):
    segs = params.event_segments(state, age, t, lockdown)
    assert all(0.0 <= p <= 1.0 for _, p in segs)
    assert sum(p for _, p in segs) < 1.0
    assert {d for d, _ in segs} <= set(SUCCESSORS[state])


@given(st.integers(1, 3), st.booleans(), st.integers(0, 2000), st.integers(1, 50))
def test_ramps_monotone_and_bounded(params, stage, diagnosed, t, dt):
    p0 = params.progression_probability(stage, diagnosed, t)
    assert p0 <= params.progression_probability(stage, diagnosed, t + dt) <= params.progression_k
    h0 = params.healing_probability(stage, diagnosed, t)
    assert h0 <= params.healing_probability(stage, diagnosed, t + dt) <= params.healing_k


def test_deceased_has_no_segments(params):
    assert params.event_segments(State.DECEASED, 50, 3, False) == ()


def test_scenario_window():
    sc = ScenarioConfig(True, (61, 113))
    assert not sc.lockdown_active(60)
    assert sc.lockdown_active(61) and sc.lockdown_active(112)
    assert not sc.lockdown_active(113)
    assert not ScenarioConfig(False, (61, 113)).lockdown_active(80)
    with pytest.raises(ValueError):
        ScenarioConfig(True, (10, 10))
    with pytest.raises(ConfigurationError):
        ScenarioConfig(True, (10, 400)).validate_against(364)


def test_params_validation():
    with pytest.raises(ConfigurationError):
        TransitionParams(INC, {25: 0.0}, dfs5={"normal": (1.2, 0.5, 0.5, 0.5), "lockdown": (0.5,) * 4})
    with pytest.raises(ConfigurationError):
        TransitionParams(INC, {25: 0.0}, death_lambda_undiagnosed=(0.1, 0.2, 0.3))
    with pytest.raises(ConfigurationError):
        TransitionParams(INC, {25: -0.1})
