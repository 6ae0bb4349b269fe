"""Weekly Monte Carlo update, replications and paired scenario experiments."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import (
    CYCLES_PER_YEAR,
    STAGES,
    ConfigurationError,
    ModelError,
    ScenarioConfig,
    State,
    TransitionParams,
)
from .population import Cohort, Person, advance_ages

log = logging.getLogger(__name__)

N_STATES = len(State)
COST_METRICS = ("direct_cost", "indirect_death_cost", "indirect_other_cost")
COUNT_METRICS = ("cancer_deaths", "diagnoses", "background_deaths", "new_cases", "healed")
METRICS = COST_METRICS + ("total_cost",) + COUNT_METRICS


@dataclass(frozen=True)
class SimulationConfig:
    total_cycles: int = 364
    cycles_per_year: int = CYCLES_PER_YEAR
    start_year: int = 2019
    replications: int = 100
    population_fraction: float = 0.01
    scale_factor: float = 100.0
    base_seed: int = 20190101
    common_random_numbers: bool = True
    lockdown_window: Tuple[int, int] = (61, 113)
    workers: int = 1

    def __post_init__(self):
        if self.total_cycles <= 0 or self.total_cycles % self.cycles_per_year:
            raise ConfigurationError(
                f"total_cycles ({self.total_cycles}) must be a positive multiple of cycles_per_year ({self.cycles_per_year})"
            )
        if not 0.0 < self.population_fraction <= 1.0:
            raise ConfigurationError(f"population_fraction must lie in (0, 1], got {self.population_fraction}")
        if not np.isclose(self.scale_factor * self.population_fraction, 1.0, rtol=1e-9):
            raise ConfigurationError(
                f"scale_factor ({self.scale_factor}) must equal 1/population_fraction ({1 / self.population_fraction})"
            )
        if self.replications < 0:
            raise ConfigurationError("replications must be >= 0")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        start, end = self.lockdown_window
        if not 0 <= start < end <= self.total_cycles:
            raise ConfigurationError(f"lockdown_window {self.lockdown_window} must satisfy 0 <= start < end <= total_cycles")

    @property
    def years(self) -> List[int]:
        return [self.start_year + k for k in range(self.total_cycles // self.cycles_per_year)]

    def scenario(self, covid: bool) -> ScenarioConfig:
        return ScenarioConfig(covid_enabled=covid, lockdown_window=tuple(self.lockdown_window))

    def seeds(self, index: int) -> Tuple[int, int]:
        """(nocovid, covid) seeds for replication ``index``."""
        if self.common_random_numbers:
            return self.base_seed + index, self.base_seed + index
        return self.base_seed + index, self.base_seed + self.replications + index


@dataclass(frozen=True)
class CostParams:
    direct_yearly_per_stage: Tuple[float, ...] = (1881.0, 3185.0, 5573.0, 7869.0)
    indirect_death: float = 123564.0
    indirect_other_yearly: float = 13159.0

    def __post_init__(self):
        if len(self.direct_yearly_per_stage) != 4:
            raise ConfigurationError("direct_yearly_per_stage needs 4 values")
        for v in (*self.direct_yearly_per_stage, self.indirect_death, self.indirect_other_yearly):
            if not v > 0:
                raise ConfigurationError(f"cost values must be positive, got {v!r}")


@dataclass
class LedgerDelta:
    direct_cost: float = 0.0
    indirect_death_cost: float = 0.0
    indirect_other_cost: float = 0.0
    cancer_deaths: int = 0
    diagnoses: int = 0


def step_person(
    person: Person,
    params: TransitionParams,
    costs: CostParams,
    lockdown_active: bool,
    u: float,
) -> Tuple[Person, LedgerDelta]:
    """Advance one living person by one cycle given a uniform draw ``u``.

    Reference implementation of the cohort update in :class:`_CycleKernel`.
    """
    state = State(person.state)
    if state == State.DECEASED:
        raise ValueError("deceased persons are not stepped")
    delta = LedgerDelta()
    cpy = params.cycles_per_year
    if state.is_diagnosed:
        delta.direct_cost = costs.direct_yearly_per_stage[state.stage - 1] / cpy
        delta.indirect_other_cost = costs.indirect_other_yearly / cpy

    segments = params.event_segments(state, person.age, person.cycles_in_state, lockdown_active)
    total = sum(p for _, p in segments)
    if total > 1.0:
        raise ModelError(f"event probabilities for {state.name} sum to {total} > 1")
    new_state, edge = state, 0.0
    for dest, p in segments:
        edge += p
        if u < edge:
            new_state = dest
            break

    if new_state == state:
        return Person(person.age, state, person.cycles_in_state + 1), delta
    if new_state == State.DECEASED and state.is_cancer:
        delta.cancer_deaths = 1
        delta.indirect_death_cost = costs.indirect_death
    if state.is_undiagnosed and new_state.is_diagnosed:
        delta.diagnoses = 1
    return Person(person.age, new_state, 0), delta


class _CycleKernel:
    """Per-state lookup tables for the vectorized update.

    Every living person has three ordered event segments
    ``(dest_i, p_i)``; for each state the segment probability is
    ``const + k * (1 - exp(-lam * t))`` with ``t`` the cycles spent in the
    current state. Healthy persons instead use age-indexed tables for the
    first two segments.
    """

    def __init__(self, params: TransitionParams, costs: CostParams, max_age: int):
        if params.healing_lambda is None:
            raise ConfigurationError("healing_lambda has not been calibrated")
        self.cycles_per_year = params.cycles_per_year
        ages = np.arange(max_age + 1)
        self.incidence = np.zeros(max_age + 1)
        self.background = np.zeros(max_age + 1)
        for a in ages[ages >= 25]:
            self.incidence[a] = params.incidence_probability(int(a))
            self.background[a] = params.background_mortality_probability(int(a))

        self.dest = np.zeros((3, N_STATES), dtype=np.int8)
        self.tables = {}
        for scenario, lockdown in (("normal", False), ("lockdown", True)):
            const = np.zeros((3, N_STATES))
            k = np.zeros((3, N_STATES))
            lam = np.zeros((3, N_STATES))
            for s in STAGES:
                for diagnosed in (False, True):
                    st = State.diagnosed(s) if diagnosed else State.undiagnosed(s)
                    const[0, st] = params.cancer_death_probability(s, diagnosed, lockdown)
                    self.dest[0, st] = State.DECEASED
                    if s < 4:
                        k[1, st] = params.progression_k
                        lam[1, st] = (params.progression_lambda_diagnosed if diagnosed else params.progression_lambda_undiagnosed)[s - 1]
                        self.dest[1, st] = State.diagnosed(s + 1) if diagnosed else State.undiagnosed(s + 1)
                    else:
                        self.dest[1, st] = st
                    if diagnosed:
                        k[2, st] = params.healing_k
                        lam[2, st] = params.healing_lambda[scenario][s - 1]
                        self.dest[2, st] = State.HEALTHY
                    else:
                        const[2, st] = params.diagnosis_probability(lockdown)
                        self.dest[2, st] = State.diagnosed(s)
            self.tables[lockdown] = (const, k, lam)
        self.dest[0, State.HEALTHY] = State.N1
        self.dest[1, State.HEALTHY] = State.DECEASED
        self.dest[2, State.HEALTHY] = State.HEALTHY
        self.dest[:, State.DECEASED] = State.DECEASED

        cpy = params.cycles_per_year
        self.direct = np.zeros(N_STATES)
        for s in STAGES:
            self.direct[State.diagnosed(s)] = costs.direct_yearly_per_stage[s - 1] / cpy
        self.other = costs.indirect_other_yearly / cpy
        self.death_cost = costs.indirect_death
        self._age_ref = None
        self.last_segment_sum = 0.0

    def _healthy_tables(self, age: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        # ages only change once a year; reuse the per-person lookups until then
        if self._age_ref is not age:
            self._age_ref = age
            self._onset = self.incidence[age]
            self._onset_or_death = self._onset + self.background[age]
            self._healthy_max = float(self._onset_or_death.max(initial=0.0))
        return self._onset, self._onset_or_death

    def segment_probabilities(self, cohort: Cohort, lockdown_active: bool) -> np.ndarray:
        """Segment probabilities, shape ``(3, len(cohort))``."""
        const, k, lam = self.tables[bool(lockdown_active)]
        st = cohort.state
        t = cohort.cycles_in_state.astype(float)
        p = const[:, st] - k[:, st] * np.expm1(-lam[:, st] * t)
        healthy = st == State.HEALTHY
        a = cohort.age[healthy]
        p[0, healthy] = self.incidence[a]
        p[1, healthy] = self.background[a]
        return p

    def step(self, cohort: Cohort, lockdown_active: bool, u: np.ndarray) -> Tuple[Cohort, Dict[str, float]]:
        st = cohort.state
        new = st.copy()

        onset, onset_or_death = self._healthy_tables(cohort.age)
        healthy = st == State.HEALTHY
        got_cancer = healthy & (u < onset)
        died_healthy = healthy & ~got_cancer & (u < onset_or_death)
        new[got_cancer] = State.N1
        new[died_healthy] = State.DECEASED

        sick = np.flatnonzero((st >= State.N1) & (st <= State.D4))
        s = st[sick]
        const, k, lam = self.tables[bool(lockdown_active)]
        t = cohort.cycles_in_state[sick].astype(float)
        edges = np.cumsum(const[:, s] - k[:, s] * np.expm1(-lam[:, s] * t), axis=0)
        worst = max(float(edges[2].max(initial=0.0)), self._healthy_max)
        if worst > 1.0:
            raise ModelError(f"event probabilities sum to {worst} > 1")
        self.last_segment_sum = worst
        us = u[sick]
        moved = np.select(
            [us < edges[0], us < edges[1], us < edges[2]],
            [self.dest[0, s], self.dest[1, s], self.dest[2, s]],
            s,
        ).astype(np.int8)
        new[sick] = moved

        occ = np.bincount(s, minlength=N_STATES)
        dead = moved == State.DECEASED
        deaths = int(np.count_nonzero(dead))
        delta = {
            "direct_cost": float(occ @ self.direct),
            "indirect_other_cost": float(occ[State.D1 : State.D4 + 1].sum()) * self.other,
            "indirect_death_cost": deaths * self.death_cost,
            "cancer_deaths": deaths,
            "diagnoses": int(np.count_nonzero((s <= State.N4) & (moved >= State.D1) & (moved <= State.D4))),
            "background_deaths": int(np.count_nonzero(died_healthy)),
            "new_cases": int(np.count_nonzero(got_cancer)),
            "healed": int(np.count_nonzero(moved == State.HEALTHY)),
        }
        tin = cohort.cycles_in_state + 1
        tin[new != st] = 0
        return Cohort(cohort.age, new, tin), delta


@dataclass
class ReplicationLedger:
    """Per-cycle accumulators for one replication of one scenario."""

    direct_cost: np.ndarray
    indirect_death_cost: np.ndarray
    indirect_other_cost: np.ndarray
    cancer_deaths: np.ndarray
    diagnoses: np.ndarray
    background_deaths: np.ndarray
    new_cases: np.ndarray
    healed: np.ndarray
    occupancy: np.ndarray  # (cycles, states), after each cycle's transitions
    max_segment_sum: float = 0.0

    @classmethod
    def zeros(cls, cycles: int) -> "ReplicationLedger":
        return cls(
            *(np.zeros(cycles) for _ in COST_METRICS),
            *(np.zeros(cycles, dtype=np.int64) for _ in COUNT_METRICS),
            occupancy=np.zeros((cycles, N_STATES), dtype=np.int64),
        )

    @property
    def total_cost(self) -> np.ndarray:
        return self.direct_cost + self.indirect_death_cost + self.indirect_other_cost

    def series(self, metric: str) -> np.ndarray:
        return getattr(self, metric)

    def yearly(self, metric: str, cycles_per_year: int = CYCLES_PER_YEAR) -> np.ndarray:
        x = self.series(metric)
        return x.reshape(-1, cycles_per_year).sum(axis=1)


def _max_age_reached(cohort: Cohort, total_cycles: int, cycles_per_year: int) -> int:
    start = int(cohort.age.max()) if len(cohort) else 25
    return start + total_cycles // cycles_per_year


def run_replication(
    cohort: Cohort,
    config: SimulationConfig,
    scenario: ScenarioConfig,
    seed: int,
    params: TransitionParams,
    costs: CostParams,
    kernel: Optional[_CycleKernel] = None,
) -> ReplicationLedger:
    """Simulate ``config.total_cycles`` weeks for one scenario.

    One uniform variate is drawn per person per cycle, deceased included, so
    person ``i`` sees the same stream in every scenario sharing ``seed``.
    """
    scenario.validate_against(config.total_cycles)
    if kernel is None:
        kernel = _CycleKernel(params, costs, _max_age_reached(cohort, config.total_cycles, config.cycles_per_year))
    rng = np.random.default_rng(seed)
    ledger = ReplicationLedger.zeros(config.total_cycles)
    cur = cohort.copy()
    n = len(cur)
    for cycle in range(config.total_cycles):
        cur = advance_ages(cur, cycle, config.cycles_per_year)
        u = rng.random(n)
        cur, delta = kernel.step(cur, scenario.lockdown_active(cycle), u)
        for key, value in delta.items():
            getattr(ledger, key)[cycle] = value
        ledger.occupancy[cycle] = np.bincount(cur.state, minlength=N_STATES)
        ledger.max_segment_sum = max(ledger.max_segment_sum, kernel.last_segment_sum)
    return ledger


@dataclass
class ExperimentResult:
    """Yearly, national-scale series per scenario, metric and replication."""

    config: SimulationConfig
    years: List[int]
    # yearly[scenario][metric] has shape (replications, years)
    yearly: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)
    seeds: Dict[str, List[int]] = field(default_factory=dict)

    @property
    def replications(self) -> int:
        return self.config.replications

    def totals(self, scenario: str, metric: str) -> np.ndarray:
        return self.yearly[scenario][metric].sum(axis=1)

    def difference(self, metric: str) -> np.ndarray:
        """Per-replication 7-year total of covid minus nocovid."""
        return self.totals("covid", metric) - self.totals("nocovid", metric)


# Worker processes rebuild nothing: inputs arrive once via the initializer.
_WORKER_STATE: dict = {}


def _init_worker(cohort, config, params, costs):
    kernel = _CycleKernel(params, costs, _max_age_reached(cohort, config.total_cycles, config.cycles_per_year))
    _WORKER_STATE.update(cohort=cohort, config=config, params=params, costs=costs, kernel=kernel)


def _run_task(task):
    index, covid, seed = task
    s = _WORKER_STATE
    ledger = run_replication(s["cohort"], s["config"], s["config"].scenario(covid), seed, s["params"], s["costs"], s["kernel"])
    cpy = s["config"].cycles_per_year
    return index, covid, {m: ledger.yearly(m, cpy) for m in METRICS if m != "total_cost"}


def run_experiment(
    config: SimulationConfig,
    cohort: Cohort,
    params: TransitionParams,
    costs: CostParams,
    scenarios: Sequence[str] = ("nocovid", "covid"),
    progress=None,
) -> ExperimentResult:
    """Run ``config.replications`` replications of each requested scenario.

    Outputs are keyed by replication index so the result does not depend
    on worker count or completion order.
    """
    for name in scenarios:
        if name not in ("nocovid", "covid"):
            raise ValueError(f"unknown scenario {name!r}")
    tasks = []
    for i in range(config.replications):
        seed_nc, seed_c = config.seeds(i)
        for name in scenarios:
            covid = name == "covid"
            tasks.append((i, covid, seed_c if covid else seed_nc))

    n_years = config.total_cycles // config.cycles_per_year
    result = ExperimentResult(config=config, years=config.years)
    for name in scenarios:
        result.yearly[name] = {m: np.zeros((config.replications, n_years)) for m in METRICS}
        result.seeds[name] = [config.seeds(i)[name == "covid"] for i in range(config.replications)]

    def collect(out):
        index, covid, series = out
        name = "covid" if covid else "nocovid"
        y = result.yearly[name]
        for m, v in series.items():
            y[m][index] = v * config.scale_factor
        # summed after scaling so the ledger identity holds exactly
        y["total_cost"][index] = y["direct_cost"][index] + y["indirect_death_cost"][index] + y["indirect_other_cost"][index]
        if progress is not None:
            progress()

    if config.workers == 1 or len(tasks) <= 1:
        _init_worker(cohort, config, params, costs)
        try:
            for task in tasks:
                collect(_run_task(task))
        finally:
            _WORKER_STATE.clear()
    else:
        with ProcessPoolExecutor(
            max_workers=config.workers, initializer=_init_worker, initargs=(cohort, config, params, costs)
        ) as pool:
            for out in pool.map(_run_task, tasks):
                collect(out)
    log.info("finished %d replication(s) of %s", config.replications, ", ".join(scenarios))
    return result
