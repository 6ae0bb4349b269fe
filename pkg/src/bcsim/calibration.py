"""Derive fitted model parameters from published summary statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .model import STAGES, TransitionParams

HEALING_HORIZON_CYCLES = 260  # five years of weekly cycles
BISECTION_TOL = 1e-9
BISECTION_MAX_ITER = 200


class CalibrationError(Exception):
    pass


@dataclass(frozen=True)
class PrevalenceSeries:
    points: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        years = [y for y, _ in self.points]
        if any(c < 0 for _, c in self.points):
            raise ValueError("patient counts must be nonnegative")
        if len(set(years)) != len(years):
            raise ValueError("prevalence years must be distinct")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, int]]) -> "PrevalenceSeries":
        return cls(tuple(sorted((int(y), int(c)) for y, c in pairs)))


@dataclass(frozen=True)
class ScreeningStats:
    mammograms_performed: int
    positivity_rate: float
    attendance_rate: float
    detected_cases: int

    def __post_init__(self):
        for name in ("positivity_rate", "attendance_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if self.detected_cases > self.mammograms_performed:
            raise ValueError("detected_cases cannot exceed mammograms_performed")


def lambda_from_survival(s5: float, years: float = 5.0) -> float:
    """Annual hazard implied by a ``years``-horizon survival fraction."""
    if not 0.0 < s5 <= 1.0:
        raise ValueError(f"survival fraction must lie in (0, 1], got {s5!r}")
    return -math.log(s5) / years


def cumulative_healing(lam: float, k: float, horizon: int = HEALING_HORIZON_CYCLES) -> float:
    """Probability of healing within ``horizon`` cycles with no competing exits.

    The t-th cycle in state (t = 1..horizon) heals with ``k * (1 - exp(-lam * t))``.
    """
    t = np.arange(1, horizon + 1, dtype=float)
    p = k * -np.expm1(-lam * t)
    if np.any(p >= 1.0):
        return 1.0
    return float(-np.expm1(np.sum(np.log1p(-p))))


def fit_healing_lambda(dfs5: float, k: float, horizon: int = HEALING_HORIZON_CYCLES) -> float:
    """Bisect for the ramp rate whose cumulative healing equals ``dfs5``."""
    if not 0.0 <= dfs5 < 1.0:
        raise ValueError(f"dfs5 must lie in [0, 1), got {dfs5!r}")
    if not 0.0 < k <= 1.0:
        raise ValueError(f"k must lie in (0, 1], got {k!r}")
    if dfs5 == 0.0:
        return 0.0
    ceiling = -math.expm1(horizon * math.log1p(-k)) if k < 1.0 else 1.0
    if dfs5 >= ceiling:
        raise CalibrationError(
            f"dfs5={dfs5} is unreachable with k={k}; the maximum over {horizon} cycles is {ceiling}"
        )

    lo, hi = 0.0, 1e-6
    while cumulative_healing(hi, k, horizon) < dfs5:
        lo, hi = hi, hi * 2.0
        if hi > 1e6:
            raise CalibrationError(f"could not bracket dfs5={dfs5}")

    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        resid = cumulative_healing(mid, k, horizon) - dfs5
        if abs(resid) <= BISECTION_TOL:
            return mid
        if resid < 0:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(f"bisection did not converge for dfs5={dfs5}")


def calibrate_healing(params: TransitionParams) -> TransitionParams:
    """Return ``params`` with ``healing_lambda`` fitted from its DFS table."""
    fitted = {
        scenario: tuple(fit_healing_lambda(params.dfs5[scenario][s - 1], params.healing_k) for s in STAGES)
        for scenario in ("normal", "lockdown")
    }
    return replace(params, healing_lambda=fitted)


def project_prevalence(
    series: PrevalenceSeries, target_years: Sequence[int], axis: str = "index"
) -> List[int]:
    """Linear least-squares projection of patient counts.

    With ``axis="year"`` the regressor is the calendar year. With
    ``axis="index"`` the observations are treated as consecutive periods in
    year order (gaps ignored), and a target year maps to
    ``last_index + (year - last_year)``.
    """
    pts = sorted(series.points)
    if len(pts) < 2:
        raise ValueError("at least two points are needed to fit a trend")
    years = np.array([y for y, _ in pts], dtype=float)
    counts = np.array([c for _, c in pts], dtype=float)
    targets = np.asarray(target_years, dtype=float)
    if axis == "year":
        x, xt = years, targets
    elif axis == "index":
        x = np.arange(len(pts), dtype=float)
        xt = x[-1] + (targets - years[-1])
    else:
        raise ValueError(f"axis must be 'year' or 'index', got {axis!r}")

    xm, ym = x.mean(), counts.mean()
    slope = np.sum((x - xm) * (counts - ym)) / np.sum((x - xm) ** 2)
    intercept = ym - slope * xm
    return [int(math.floor(v + 0.5)) for v in intercept + slope * xt]


def estimate_undiagnosed(stats: ScreeningStats) -> int:
    """Positive cases expected among women who skip screening.

    The attending population is ``detected_cases / positivity_rate``; the
    non-attending population is scaled from it by the attendance rate and
    carries the same positivity.
    """
    att = stats.attendance_rate
    if att <= 0.0:
        raise ValueError("attendance_rate must be > 0")
    if stats.positivity_rate == 0.0:
        return 0
    attended = stats.detected_cases / stats.positivity_rate
    missing = attended / att * (1.0 - att)
    return int(math.floor(missing * stats.positivity_rate + 0.5))


def diagnosis_rate(l_pos: float, l_fneg: float, l_nm: float) -> float:
    """Annual diagnosis probability from positive, false-negative and unscreened counts."""
    if min(l_pos, l_fneg, l_nm) < 0:
        raise ValueError("counts must be nonnegative")
    total = l_pos + l_fneg + l_nm
    if total <= 0:
        raise ValueError("denominator must be positive")
    return l_pos / total
