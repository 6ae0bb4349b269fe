"""Configuration loading and validation."""

from __future__ import annotations

import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .calibration import (
    PrevalenceSeries,
    ScreeningStats,
    calibrate_healing,
    estimate_undiagnosed,
    lambda_from_survival,
    project_prevalence,
)
from .engine import CostParams, SimulationConfig
from .model import STAGES, ConfigurationError, TransitionParams
from .population import AgeBandTable, InitialDiseaseTable, read_age_table, read_disease_table

DEFAULT_CONFIG = Path(__file__).with_name("data") / "default.toml"


class ConfigError(ConfigurationError):
    """A configuration problem tied to a file and, when known, a field."""

    def __init__(self, message: str, path: Union[str, Path, None] = None, field: str = ""):
        self.path = path
        self.field = field
        where = str(path) if path else "<config>"
        if field:
            where += f": [{field}]"
        super().__init__(f"{where}: {message}")


@dataclass
class CalibrationInputs:
    survival5_diagnosed: Tuple[float, ...]
    prevalence: PrevalenceSeries
    prevalence_axis: str
    prevalence_targets: Tuple[int, ...]
    screening: ScreeningStats


@dataclass
class RunInputs:
    """Everything a run needs, validated but not yet calibrated."""

    source: Path
    raw: Dict[str, Any]
    simulation: SimulationConfig
    params: TransitionParams
    costs: CostParams
    ages: AgeBandTable
    disease: InitialDiseaseTable
    calibration: CalibrationInputs
    table_paths: Dict[str, Path] = field(default_factory=dict)


class _Section:
    def __init__(self, data: Dict[str, Any], name: str, path: Path):
        self.name, self.path = name, path
        if name not in data:
            raise ConfigError("missing section", path, name)
        self.data = data[name]
        if not isinstance(self.data, dict):
            raise ConfigError("expected a table", path, name)

    def _err(self, key, msg):
        return ConfigError(msg, self.path, f"{self.name}.{key}" if key else self.name)

    def get(self, key, default=None, required=True):
        if key not in self.data:
            if required:
                raise self._err(key, "missing required field")
            return default
        return self.data[key]

    def number(self, key, lo=-math.inf, hi=math.inf, default=None, required=True, integer=False):
        v = self.get(key, default, required)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self._err(key, f"expected a number, got {v!r}")
        if integer and not float(v).is_integer():
            raise self._err(key, f"expected an integer, got {v!r}")
        if not lo <= v <= hi:
            raise self._err(key, f"value {v!r} outside [{lo}, {hi}]")
        return int(v) if integer else float(v)

    def stages(self, key, lo=0.0, hi=math.inf, upper_open=False):
        v = self.get(key)
        if not isinstance(v, list) or len(v) != 4:
            raise self._err(key, f"expected a list of 4 per-stage numbers, got {v!r}")
        out = []
        for i, x in enumerate(v):
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise self._err(f"{key}[{i}]", f"expected a number, got {x!r}")
            if not (lo <= x <= hi) or (upper_open and x >= hi):
                bound = f"[{lo}, {hi})" if upper_open else f"[{lo}, {hi}]"
                raise self._err(f"{key}[{i}]", f"value {x!r} outside {bound}")
            out.append(float(x))
        return tuple(out)


def read_life_table(path: Union[str, Path]) -> Dict[int, float]:
    table = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or len(reader.fieldnames) < 2:
            raise ConfigError("expected a header row with two columns (age, annual death probability)", path)
        age_col, q_col = reader.fieldnames[:2]
        for lineno, rec in enumerate(reader, start=2):
            try:
                age, q = int(rec[age_col]), float(rec[q_col])
            except (TypeError, ValueError):
                raise ConfigError(f"line {lineno}: malformed row {rec!r}", path) from None
            if not 0.0 <= q <= 1.0:
                raise ConfigError(f"line {lineno}: death probability {q} outside [0, 1]", path)
            table[age] = q
    if not table:
        raise ConfigError("life table is empty", path)
    return table


def load_config(path: Union[str, Path, None] = None) -> RunInputs:
    """Parse and validate a TOML run configuration and the tables it names."""
    path = Path(path) if path is not None else DEFAULT_CONFIG
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError("config file not found", path) from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}", path) from None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}", path) from None

    sim = _Section(raw, "simulation", path)
    window = sim.get("lockdown_window")
    if not (isinstance(window, list) and len(window) == 2 and all(isinstance(x, int) for x in window)):
        raise ConfigError(f"expected [start, end] integers, got {window!r}", path, "simulation.lockdown_window")
    fraction = sim.number("population_fraction", 0.0, 1.0)
    if fraction <= 0:
        raise ConfigError("must be > 0", path, "simulation.population_fraction")
    try:
        simulation = SimulationConfig(
            total_cycles=sim.number("total_cycles", 1, integer=True),
            cycles_per_year=sim.number("cycles_per_year", 1, integer=True, default=52, required=False),
            start_year=sim.number("start_year", integer=True),
            replications=sim.number("replications", 0, integer=True),
            population_fraction=fraction,
            scale_factor=sim.number("scale_factor", 0.0, default=1.0 / fraction, required=False),
            base_seed=sim.number("base_seed", 0, integer=True),
            common_random_numbers=bool(sim.get("common_random_numbers", True, required=False)),
            lockdown_window=(window[0], window[1]),
            workers=sim.number("workers", 1, integer=True, default=1, required=False),
        )
    except ConfigurationError as exc:
        raise ConfigError(str(exc), path, "simulation") from None

    tables = _Section(raw, "tables", path)
    table_paths = {}
    for key in ("life_table", "age_distribution", "initial_disease"):
        rel = tables.get(key)
        if not isinstance(rel, str):
            raise ConfigError(f"expected a path string, got {rel!r}", path, f"tables.{key}")
        p = (path.parent / rel).resolve()
        if not p.is_file():
            raise ConfigError(f"table file not found: {p}", path, f"tables.{key}")
        table_paths[key] = p
    life_table = read_life_table(table_paths["life_table"])
    ages = read_age_table(table_paths["age_distribution"])
    disease = read_disease_table(table_paths["initial_disease"])

    inc = _Section(raw, "incidence", path)
    incidence = {}
    for key in inc.data:
        try:
            decade = int(key)
        except ValueError:
            raise ConfigError("incidence keys must be integer ages", path, f"incidence.{key}") from None
        incidence[decade] = inc.number(key, 0.0, 1.0)
    if not incidence or min(incidence) > 25:
        raise ConfigError("incidence table must cover age 25", path, "incidence")

    prog = _Section(raw, "progression", path)
    heal = _Section(raw, "healing", path)
    death = _Section(raw, "death", path)
    diag = _Section(raw, "diagnosis", path)
    try:
        params = TransitionParams(
            incidence_by_decade=incidence,
            background_mortality=life_table,
            progression_k=prog.number("k", 0.0, 1.0),
            progression_lambda_diagnosed=prog.stages("lambda_diagnosed"),
            progression_lambda_undiagnosed=prog.stages("lambda_undiagnosed"),
            healing_k=heal.number("k", 0.0, 1.0),
            dfs5={
                "normal": heal.stages("dfs5_normal", 0.0, 1.0, upper_open=True),
                "lockdown": heal.stages("dfs5_lockdown", 0.0, 1.0, upper_open=True),
            },
            death_lambda_diagnosed={
                "normal": death.stages("lambda_diagnosed_normal"),
                "lockdown": death.stages("lambda_diagnosed_lockdown"),
            },
            death_lambda_undiagnosed=death.stages("lambda_undiagnosed"),
            annual_diagnosis_prob={
                "normal": diag.number("annual_normal", 0.0, 1.0),
                "lockdown": diag.number("annual_lockdown", 0.0, 1.0),
            },
            cycles_per_year=simulation.cycles_per_year,
        )
    except ConfigurationError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), path) from None

    cost = _Section(raw, "costs", path)
    costs = CostParams(
        direct_yearly_per_stage=cost.stages("direct_yearly_per_stage", 1e-300),
        indirect_death=cost.number("indirect_death", 1e-300),
        indirect_other_yearly=cost.number("indirect_other_yearly", 1e-300),
    )

    cal = _Section(raw, "calibration", path)
    prevalence = cal.get("prevalence")
    try:
        series = PrevalenceSeries.from_pairs((int(y), int(c)) for y, c in prevalence)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected [[year, count], ...]: {exc}", path, "calibration.prevalence") from None
    axis = cal.get("prevalence_axis", "index", required=False)
    if axis not in ("index", "year"):
        raise ConfigError(f"must be 'index' or 'year', got {axis!r}", path, "calibration.prevalence_axis")
    try:
        screening = ScreeningStats(
            mammograms_performed=cal.number("mammograms_performed", 0, integer=True),
            positivity_rate=cal.number("positivity_rate", 0.0, 1.0),
            attendance_rate=cal.number("attendance_rate", 0.0, 1.0),
            detected_cases=cal.number("detected_cases", 0, integer=True),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), path, "calibration") from None
    calibration = CalibrationInputs(
        survival5_diagnosed=cal.stages("survival5_diagnosed", 0.0, 1.0),
        prevalence=series,
        prevalence_axis=axis,
        prevalence_targets=tuple(int(y) for y in cal.get("prevalence_targets", [2018, 2019], required=False)),
        screening=screening,
    )
    return RunInputs(path, raw, simulation, params, costs, ages, disease, calibration, table_paths)


def calibrate(inputs: RunInputs) -> Tuple[TransitionParams, List[Tuple[str, str, str, float]]]:
    """Fit healing rates and collect every derived value as ``(name, scenario, stage, value)`` rows."""
    params = calibrate_healing(inputs.params)
    rows: List[Tuple[str, str, str, float]] = []
    p = params
    for s in STAGES:
        for scenario in ("normal", "lockdown"):
            rows.append(("dfs5", scenario, str(s), p.dfs5[scenario][s - 1]))
            rows.append(("healing_lambda", scenario, str(s), p.healing_lambda[scenario][s - 1]))
            rows.append(("death_lambda_diagnosed", scenario, str(s), p.death_lambda_diagnosed[scenario][s - 1]))
            rows.append(
                ("death_probability_diagnosed_per_cycle", scenario, str(s), p.cancer_death_probability(s, True, scenario == "lockdown"))
            )
        rows.append(("death_lambda_undiagnosed", "", str(s), p.death_lambda_undiagnosed[s - 1]))
        rows.append(("death_probability_undiagnosed_per_cycle", "", str(s), p.cancer_death_probability(s, False, False)))
        rows.append(("progression_lambda_diagnosed", "", str(s), p.progression_lambda_diagnosed[s - 1]))
        rows.append(("progression_lambda_undiagnosed", "", str(s), p.progression_lambda_undiagnosed[s - 1]))
        rows.append(
            ("lambda_from_survival5", "", str(s), lambda_from_survival(inputs.calibration.survival5_diagnosed[s - 1]))
        )
    rows.append(("progression_k", "", "", p.progression_k))
    rows.append(("healing_k", "", "", p.healing_k))
    for scenario in ("normal", "lockdown"):
        rows.append(("annual_diagnosis_prob", scenario, "", p.annual_diagnosis_prob[scenario]))
        rows.append(("diagnosis_probability_per_cycle", scenario, "", p.diagnosis_probability(scenario == "lockdown")))
    for decade in sorted(p.incidence_by_decade):
        rows.append((f"incidence_per_cycle_age_{decade}", "", "", p.incidence_by_decade[decade]))
    cal = inputs.calibration
    targets = list(cal.prevalence_targets)
    for year, value in zip(targets, project_prevalence(cal.prevalence, targets, cal.prevalence_axis)):
        rows.append((f"projected_prevalence_{year}", "", "", float(value)))
    rows.append(("estimated_undiagnosed", "", "", float(estimate_undiagnosed(cal.screening))))
    return params, rows
