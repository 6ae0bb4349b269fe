"""Ten-state breast cancer model and its per-cycle transition probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Mapping, Optional, Sequence, Tuple

CYCLES_PER_YEAR = 52
STAGES = (1, 2, 3, 4)


def _check_stage(stage: int) -> None:
    if stage not in STAGES:
        raise ValueError(f"stage must be one of 1..4, got {stage!r}")


class ModelError(Exception):
    """Raised when parameters produce an invalid transition distribution."""


class ConfigurationError(Exception):
    """Raised when a required parameter or table entry is missing or invalid."""


class State(IntEnum):
    HEALTHY = 0
    N1 = 1
    N2 = 2
    N3 = 3
    N4 = 4
    D1 = 5
    D2 = 6
    D3 = 7
    D4 = 8
    DECEASED = 9

    @classmethod
    def undiagnosed(cls, stage: int) -> "State":
        _check_stage(stage)
        return cls(stage)

    @classmethod
    def diagnosed(cls, stage: int) -> "State":
        _check_stage(stage)
        return cls(4 + stage)

    @property
    def stage(self) -> Optional[int]:
        if self.is_undiagnosed:
            return int(self)
        if self.is_diagnosed:
            return int(self) - 4
        return None

    @property
    def is_undiagnosed(self) -> bool:
        return 1 <= self <= 4

    @property
    def is_diagnosed(self) -> bool:
        return 5 <= self <= 8

    @property
    def is_cancer(self) -> bool:
        return 1 <= self <= 8


# Allowed transitions, excluding self-loops. Deceased is absorbing.
SUCCESSORS: dict = {
    State.HEALTHY: (State.N1, State.DECEASED),
    **{
        State.undiagnosed(s): tuple(
            x
            for x in (
                State.DECEASED,
                State.undiagnosed(s + 1) if s < 4 else None,
                State.diagnosed(s),
            )
            if x is not None
        )
        for s in STAGES
    },
    **{
        State.diagnosed(s): tuple(
            x
            for x in (
                State.DECEASED,
                State.diagnosed(s + 1) if s < 4 else None,
                State.HEALTHY,
            )
            if x is not None
        )
        for s in STAGES
    },
    State.DECEASED: (),
}


@dataclass(frozen=True)
class HazardRate:
    """A constant event rate with an explicit time unit ('year' or 'cycle')."""

    value: float
    unit: str = "year"

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"hazard rate must be >= 0, got {self.value!r}")
        if self.unit not in ("year", "cycle"):
            raise ValueError(f"unknown hazard unit {self.unit!r}")

    def per_cycle(self, cycles_per_year: int = CYCLES_PER_YEAR) -> "HazardRate":
        if self.unit == "cycle":
            return self
        return HazardRate(self.value / cycles_per_year, "cycle")

    def per_year(self, cycles_per_year: int = CYCLES_PER_YEAR) -> "HazardRate":
        if self.unit == "year":
            return self
        return HazardRate(self.value * cycles_per_year, "year")


def rate_to_probability(rate, t: float) -> float:
    """Probability that an event with constant rate occurs within ``t``.

    ``rate`` may be a plain number or a :class:`HazardRate`; ``t`` is in the
    rate's time unit.
    """
    r = rate.value if isinstance(rate, HazardRate) else rate
    if r < 0 or t < 0:
        raise ValueError(f"rate and t must be nonnegative, got rate={r}, t={t}")
    return -math.expm1(-r * t)


def annual_to_cycle_probability(p_annual: float, cycles_per_year: int = CYCLES_PER_YEAR) -> float:
    if not 0.0 <= p_annual <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p_annual!r}")
    if p_annual == 1.0:
        return 1.0
    return -math.expm1(math.log1p(-p_annual) / cycles_per_year)


def saturating_probability(k: float, lam: float, t: float) -> float:
    """``k * (1 - exp(-lam * t))``, the ramp used for progression and healing."""
    return k * -math.expm1(-lam * t)


@dataclass(frozen=True)
class ScenarioConfig:
    """Lockdown toggle with a half-open cycle window ``[start, end)``."""

    covid_enabled: bool = False
    lockdown_window: Tuple[int, int] = (61, 113)

    def __post_init__(self):
        start, end = self.lockdown_window
        if not 0 <= start < end:
            raise ValueError(f"invalid lockdown window {self.lockdown_window!r}")

    @property
    def name(self) -> str:
        return "covid" if self.covid_enabled else "nocovid"

    def validate_against(self, total_cycles: int) -> None:
        if self.lockdown_window[1] > total_cycles:
            raise ConfigurationError(
                f"lockdown window end {self.lockdown_window[1]} exceeds total cycles {total_cycles}"
            )

    def lockdown_active(self, cycle: int) -> bool:
        start, end = self.lockdown_window
        return self.covid_enabled and start <= cycle < end


def _scenario(lockdown_active: bool) -> str:
    return "lockdown" if lockdown_active else "normal"


@dataclass(frozen=True)
class TransitionParams:
    """All calibrated inputs to the transition probabilities.

    Per-stage sequences are indexed by ``stage - 1``. Scenario-dependent
    entries are mappings with keys ``"normal"`` and ``"lockdown"``.
    ``healing_lambda`` is ``None`` until calibration has run.
    """

    incidence_by_decade: Mapping[int, float]
    background_mortality: Mapping[int, float]
    progression_k: float = 0.0009
    progression_lambda_diagnosed: Tuple[float, ...] = (10.0, 15.0, 20.0, 25.0)
    progression_lambda_undiagnosed: Tuple[float, ...] = (20.0, 25.0, 30.0, 35.0)
    healing_k: float = 1.0 / 3.0
    dfs5: Mapping[str, Tuple[float, ...]] = field(
        default_factory=lambda: {
            "normal": (0.987, 0.873, 0.52, 0.037),
            "lockdown": (0.801, 0.708, 0.422, 0.03),
        }
    )
    healing_lambda: Optional[Mapping[str, Tuple[float, ...]]] = None
    death_lambda_diagnosed: Mapping[str, Tuple[float, ...]] = field(
        default_factory=lambda: {
            "normal": (0.0061, 0.0302, 0.1642, 0.2939),
            "lockdown": (0.0056, 0.0344, 0.1903, 0.3715),
        }
    )
    death_lambda_undiagnosed: Tuple[float, ...] = (0.0061, 0.0349, 0.1989, 0.3932)
    annual_diagnosis_prob: Mapping[str, float] = field(
        default_factory=lambda: {"normal": 0.124, "lockdown": 0.116}
    )
    cycles_per_year: int = CYCLES_PER_YEAR

    def __post_init__(self):
        def probs(name, values):
            for v in values:
                if not 0.0 <= v <= 1.0:
                    raise ConfigurationError(f"{name}: probability {v!r} outside [0, 1]")

        def stages(name, values):
            if len(values) != 4:
                raise ConfigurationError(f"{name}: expected 4 per-stage values, got {len(values)}")

        def rates(name, values):
            for v in values:
                if not v >= 0.0:
                    raise ConfigurationError(f"{name}: rate {v!r} must be >= 0")

        probs("incidence_by_decade", self.incidence_by_decade.values())
        probs("background_mortality", self.background_mortality.values())
        probs("progression_k", [self.progression_k])
        probs("healing_k", [self.healing_k])
        for name in ("progression_lambda_diagnosed", "progression_lambda_undiagnosed", "death_lambda_undiagnosed"):
            stages(name, getattr(self, name))
            rates(name, getattr(self, name))
        for name in ("dfs5", "death_lambda_diagnosed", "healing_lambda", "annual_diagnosis_prob"):
            table = getattr(self, name)
            if table is None:
                continue
            for key in ("normal", "lockdown"):
                if key not in table:
                    raise ConfigurationError(f"{name}: missing scenario {key!r}")
                if name == "annual_diagnosis_prob":
                    probs(f"{name}.{key}", [table[key]])
                    continue
                stages(f"{name}.{key}", table[key])
                if name == "dfs5":
                    probs(f"{name}.{key}", table[key])
                else:
                    rates(f"{name}.{key}", table[key])

    def incidence_probability(self, age: float) -> float:
        return incidence_probability(age, self.incidence_by_decade)

    def background_mortality_probability(self, age: int) -> float:
        return background_mortality_probability(age, self.background_mortality, self.cycles_per_year)

    def progression_probability(self, stage: int, diagnosed: bool, t_in_state: float) -> float:
        _check_stage(stage)
        if stage == 4:
            raise ValueError("stage 4 has no successor stage")
        if t_in_state < 0:
            raise ValueError(f"t_in_state must be >= 0, got {t_in_state}")
        lams = self.progression_lambda_diagnosed if diagnosed else self.progression_lambda_undiagnosed
        return saturating_probability(self.progression_k, lams[stage - 1], t_in_state)

    def diagnosis_probability(self, lockdown_active: bool) -> float:
        return annual_to_cycle_probability(
            self.annual_diagnosis_prob[_scenario(lockdown_active)], self.cycles_per_year
        )

    def healing_probability(self, stage: int, lockdown_active: bool, t_in_state: float) -> float:
        _check_stage(stage)
        if self.healing_lambda is None:
            raise ConfigurationError("healing_lambda has not been calibrated")
        if t_in_state < 0:
            raise ValueError(f"t_in_state must be >= 0, got {t_in_state}")
        lam = self.healing_lambda[_scenario(lockdown_active)][stage - 1]
        return saturating_probability(self.healing_k, lam, t_in_state)

    def cancer_death_probability(self, stage: int, diagnosed: bool, lockdown_active: bool) -> float:
        _check_stage(stage)
        if diagnosed:
            lam = self.death_lambda_diagnosed[_scenario(lockdown_active)][stage - 1]
        else:
            lam = self.death_lambda_undiagnosed[stage - 1]
        return rate_to_probability(HazardRate(lam, "year").per_cycle(self.cycles_per_year), 1.0)

    def event_segments(
        self, state: State, age: int, t_in_state: float, lockdown_active: bool
    ) -> Sequence[Tuple[State, float]]:
        """Ordered ``(destination, probability)`` segments for one cycle.

        The remainder of ``[0, 1)`` after the segments means staying put.
        """
        state = State(state)
        if state == State.DECEASED:
            return ()
        if state == State.HEALTHY:
            return (
                (State.N1, self.incidence_probability(age)),
                (State.DECEASED, self.background_mortality_probability(age)),
            )
        s = state.stage
        diagnosed = state.is_diagnosed
        segs = [(State.DECEASED, self.cancer_death_probability(s, diagnosed, lockdown_active))]
        if s < 4:
            nxt = State.diagnosed(s + 1) if diagnosed else State.undiagnosed(s + 1)
            segs.append((nxt, self.progression_probability(s, diagnosed, t_in_state)))
        if diagnosed:
            segs.append((State.HEALTHY, self.healing_probability(s, lockdown_active, t_in_state)))
        else:
            segs.append((State.diagnosed(s), self.diagnosis_probability(lockdown_active)))
        return tuple(segs)


def incidence_probability(age: float, incidence_by_decade: Mapping[int, float]) -> float:
    """Per-cycle cancer onset probability for the greatest decade at or below ``age``."""
    if age < 25:
        raise ValueError(f"incidence is defined for ages >= 25, got {age}")
    decades = sorted(incidence_by_decade)
    band = max(d for d in decades if d <= age) if age >= decades[0] else decades[0]
    return incidence_by_decade[band]


def background_mortality_probability(
    age: int, life_table: Mapping[int, float], cycles_per_year: int = CYCLES_PER_YEAR
) -> float:
    if age < 25:
        raise ValueError(f"background mortality is defined for ages >= 25, got {age}")
    try:
        q = life_table[int(age)]
    except KeyError:
        raise ConfigurationError(f"life table has no row for age {age}") from None
    return annual_to_cycle_probability(q, cycles_per_year)


DEFAULT_INCIDENCE_BY_DECADE = {
    20: 0.000002,
    30: 0.00001,
    40: 0.000029,
    50: 0.000046,
    60: 0.000067,
    70: 0.000079,
    80: 0.000058,
}
