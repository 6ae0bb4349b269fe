"""Initial cohort construction and aging."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Tuple, Union

import numpy as np

from .model import CYCLES_PER_YEAR, STAGES, ConfigurationError, State

OPEN_BAND_MAX_AGE = 99
MIN_AGE = 25


@dataclass(frozen=True)
class AgeBand:
    label: str
    lo: int
    hi: int  # inclusive

    @classmethod
    def parse(cls, label: str) -> "AgeBand":
        text = label.strip()
        if text.endswith("+"):
            return cls(text, int(text[:-1]), OPEN_BAND_MAX_AGE)
        lo, hi = text.split("-")
        return cls(text, int(lo), int(hi))


@dataclass(frozen=True)
class AgeBandTable:
    rows: Tuple[Tuple[AgeBand, int], ...]

    def __post_init__(self):
        bands = [b for b, _ in self.rows]
        for b, n in self.rows:
            if n < 0:
                raise ConfigurationError(f"age band {b.label}: negative count {n}")
            if b.lo > b.hi:
                raise ConfigurationError(f"age band {b.label}: empty range")
        for prev, nxt in zip(bands, bands[1:]):
            if nxt.lo != prev.hi + 1:
                raise ConfigurationError(f"age bands {prev.label} and {nxt.label} are not contiguous")
        if bands and bands[0].lo != MIN_AGE:
            raise ConfigurationError(f"age bands must start at {MIN_AGE}, got {bands[0].lo}")
        if bands and not bands[-1].label.endswith("+"):
            raise ConfigurationError("the last age band must be open-ended (e.g. '85+')")

    @property
    def total(self) -> int:
        return sum(n for _, n in self.rows)

    @property
    def labels(self) -> List[str]:
        return [b.label for b, _ in self.rows]


@dataclass(frozen=True)
class InitialDiseaseTable:
    """Counts keyed by ``(band_label, stage, diagnosed)``."""

    counts: Dict[Tuple[str, int, bool], int]

    def __post_init__(self):
        for key, n in self.counts.items():
            if n < 0:
                raise ConfigurationError(f"disease table {key}: negative count {n}")

    def band_total(self, label: str) -> int:
        return sum(n for (b, _, _), n in self.counts.items() if b == label)


@dataclass
class Person:
    age: int
    state: State = State.HEALTHY
    cycles_in_state: int = 0


@dataclass
class Cohort:
    """Struct-of-arrays cohort: one entry per simulated woman."""

    age: np.ndarray
    state: np.ndarray
    cycles_in_state: np.ndarray

    def __len__(self) -> int:
        return len(self.age)

    def copy(self) -> "Cohort":
        return Cohort(self.age.copy(), self.state.copy(), self.cycles_in_state.copy())

    def persons(self) -> List[Person]:
        return [
            Person(int(a), State(int(s)), int(t))
            for a, s, t in zip(self.age, self.state, self.cycles_in_state)
        ]

    @classmethod
    def from_persons(cls, persons: Iterable[Person]) -> "Cohort":
        persons = list(persons)
        return cls(
            np.array([p.age for p in persons], dtype=np.int16),
            np.array([int(p.state) for p in persons], dtype=np.int8),
            np.array([p.cycles_in_state for p in persons], dtype=np.int32),
        )

    def state_counts(self) -> np.ndarray:
        return np.bincount(self.state, minlength=len(State))


def _round_half_up(x: float) -> int:
    # tolerate float noise such as 461 * 0.01 == 4.6100000000000005
    return int(math.floor(round(x, 9) + 0.5))


def scaled_cell_counts(
    ages: AgeBandTable, disease: InitialDiseaseTable, fraction: float
) -> Dict[str, Dict[State, int]]:
    """Per-band person counts after scaling; the HEALTHY entry is the remainder."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigurationError(f"population fraction must lie in (0, 1], got {fraction}")
    out = {}
    for band, count in ages.rows:
        n = _round_half_up(count * fraction)
        cells = {}
        for s in STAGES:
            for diagnosed in (True, False):
                raw = disease.counts.get((band.label, s, diagnosed), 0)
                st = State.diagnosed(s) if diagnosed else State.undiagnosed(s)
                cells[st] = _round_half_up(raw * fraction)
        sick = sum(cells.values())
        if sick > n:
            raise ConfigurationError(
                f"age band {band.label}: {sick} diseased persons exceed band population {n}"
            )
        cells[State.HEALTHY] = n - sick
        out[band.label] = cells
    return out


def build_initial_cohort(
    ages: AgeBandTable,
    disease: InitialDiseaseTable,
    fraction: float,
    rng: Union[np.random.Generator, int, None] = None,
) -> Cohort:
    """Sample the starting population.

    Each band gets ``round(count * fraction)`` women with uniformly drawn
    integer ages inside the band; diseased persons follow the scaled disease
    table cell by cell and are placed at random positions within the band.
    """
    rng = np.random.default_rng(rng)
    unknown = {b for (b, _, _) in disease.counts} - set(ages.labels)
    if unknown:
        raise ConfigurationError(f"disease table has bands not in age table: {sorted(unknown)}")
    cells = scaled_cell_counts(ages, disease, fraction)
    age_parts, state_parts = [], []
    for band, _ in ages.rows:
        band_cells = cells[band.label]
        states = np.concatenate(
            [np.full(n, int(st), dtype=np.int8) for st, n in sorted(band_cells.items())]
        )
        age_parts.append(rng.integers(band.lo, band.hi + 1, size=len(states)).astype(np.int16))
        state_parts.append(rng.permutation(states))
    age = np.concatenate(age_parts) if age_parts else np.zeros(0, np.int16)
    state = np.concatenate(state_parts) if state_parts else np.zeros(0, np.int8)
    return Cohort(age, state, np.zeros(len(age), dtype=np.int32))


def advance_ages(cohort: Cohort, cycle_index: int, cycles_per_year: int = CYCLES_PER_YEAR) -> Cohort:
    """Age every living person by one year on each positive multiple of a year."""
    if cycle_index < 0:
        raise ValueError("cycle_index must be >= 0")
    if cycle_index == 0 or cycle_index % cycles_per_year:
        return cohort
    out = cohort.copy()
    out.age[out.state != State.DECEASED] += 1
    return out


def read_age_table(path: Union[str, Path]) -> AgeBandTable:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"age_band", "women"} <= set(reader.fieldnames):
            raise ConfigurationError(f"{path}: expected header with 'age_band' and 'women'")
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append((AgeBand.parse(rec["age_band"]), int(rec["women"])))
            except (ValueError, TypeError) as exc:
                raise ConfigurationError(f"{path}:{lineno}: {exc}") from None
    return AgeBandTable(tuple(rows))


def read_disease_table(path: Union[str, Path]) -> InitialDiseaseTable:
    columns = [(f"{kind}_{s}", s, kind == "diagnosed") for kind in ("diagnosed", "undiagnosed") for s in STAGES]
    counts = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {c for c, _, _ in columns} | {"age_band"}
        missing -= set(reader.fieldnames or ())
        if missing:
            raise ConfigurationError(f"{path}: missing columns {sorted(missing)}")
        for lineno, rec in enumerate(reader, start=2):
            label = rec["age_band"].strip()
            for col, s, diagnosed in columns:
                try:
                    counts[(label, s, diagnosed)] = int(rec[col])
                except (ValueError, TypeError):
                    raise ConfigurationError(f"{path}:{lineno}: column {col}: not an integer: {rec[col]!r}") from None
    return InitialDiseaseTable(counts)
