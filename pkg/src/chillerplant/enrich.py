"""Active data enrichment.

Scheduled windows during which the VSD speeds are redrawn uniformly over
their full admissible ranges, de-collapsing the training distribution.
Equipment on/off scheduling is never touched: randomization applies to
micro-control only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .simplant import (
    MINUTES_PER_DAY,
    ControlCommand,
    Controller,
    ControlVector,
    PlantConfig,
    SensorRecord,
)

DEFAULT_WINDOW_MINUTES = 30
DEFAULT_REDRAW_MINUTES = 5


class DoesNotFit(Exception):
    """Requested windows cannot be packed into the day."""


@dataclass(frozen=True)
class SpeedRanges:
    """Per-parameter admissible (lo, hi) speed ranges in percent."""

    cwp: tuple[float, float] = (20.0, 100.0)
    chwp: tuple[float, float] = (20.0, 100.0)
    ct: tuple[float, float] = (20.0, 100.0)

    @staticmethod
    def from_config(config: PlantConfig) -> "SpeedRanges":
        b = (config.speed_min, config.speed_max)
        return SpeedRanges(b, b, b)

    def validate(self, config: PlantConfig) -> None:
        for lo, hi in (self.cwp, self.chwp, self.ct):
            if lo > hi or lo < config.speed_min or hi > config.speed_max:
                raise ValueError("ranges must lie within plant speed bounds")


@dataclass(frozen=True)
class EnrichmentPlan:
    """Non-overlapping randomization windows plus draw ranges and cadence."""

    windows: tuple[tuple[int, int], ...]  # (start minute, duration minutes)
    ranges: SpeedRanges = field(default_factory=SpeedRanges)
    redraw_period: int = DEFAULT_REDRAW_MINUTES

    def __post_init__(self) -> None:
        if self.redraw_period < 1:
            raise ValueError("redraw_period must be at least one minute")
        spans = sorted((s, s + d) for s, d in self.windows)
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            if b0 < a1:
                raise ValueError("windows must not overlap")

    def window_at(self, t: int) -> Optional[tuple[int, int]]:
        for s, d in self.windows:
            if s <= t < s + d:
                return (s, d)
        return None

    def to_dict(self) -> dict:
        return {
            "windows": [[s, d] for s, d in self.windows],
            "ranges": {"cwp": list(self.ranges.cwp),
                       "chwp": list(self.ranges.chwp),
                       "ct": list(self.ranges.ct)},
            "redraw_period": self.redraw_period,
        }

    @staticmethod
    def from_dict(d: dict) -> "EnrichmentPlan":
        rg = d.get("ranges", {})
        ranges = SpeedRanges(
            cwp=tuple(rg.get("cwp", (20.0, 100.0))),
            chwp=tuple(rg.get("chwp", (20.0, 100.0))),
            ct=tuple(rg.get("ct", (20.0, 100.0))),
        )
        return EnrichmentPlan(
            windows=tuple((int(s), int(dur)) for s, dur in d.get("windows", [])),
            ranges=ranges,
            redraw_period=int(d.get("redraw_period", DEFAULT_REDRAW_MINUTES)),
        )


def plan_windows(
    day_length: int,
    n_windows: int,
    duration: int = DEFAULT_WINDOW_MINUTES,
    seed: int = 0,
    ranges: Optional[SpeedRanges] = None,
    redraw_period: int = DEFAULT_REDRAW_MINUTES,
) -> EnrichmentPlan:
    """Place n non-overlapping windows uniformly at random within one day."""
    if n_windows < 0 or duration < 1:
        raise ValueError("n_windows must be >= 0 and duration >= 1")
    if n_windows * duration > day_length:
        raise DoesNotFit(
            f"{n_windows} windows of {duration} min exceed a {day_length} min day"
        )
    ranges = ranges if ranges is not None else SpeedRanges()
    if n_windows == 0:
        return EnrichmentPlan((), ranges, redraw_period)
    rng = np.random.default_rng(seed)
    free = day_length - n_windows * duration
    offsets = np.sort(rng.integers(0, free + 1, size=n_windows))
    starts = [int(offsets[i] + i * duration) for i in range(n_windows)]
    return EnrichmentPlan(
        windows=tuple((s, duration) for s in starts),
        ranges=ranges,
        redraw_period=redraw_period,
    )


def plan_for_days(
    days: int,
    n_windows_per_day: int,
    duration: int = DEFAULT_WINDOW_MINUTES,
    seed: int = 0,
    ranges: Optional[SpeedRanges] = None,
    redraw_period: int = DEFAULT_REDRAW_MINUTES,
) -> EnrichmentPlan:
    """Independent daily window placement concatenated into one multi-day plan."""
    windows: list[tuple[int, int]] = []
    ranges = ranges if ranges is not None else SpeedRanges()
    for day in range(days):
        daily = plan_windows(MINUTES_PER_DAY, n_windows_per_day, duration,
                             seed=(seed, day), ranges=ranges,
                             redraw_period=redraw_period)
        windows.extend((day * MINUTES_PER_DAY + s, d) for s, d in daily.windows)
    return EnrichmentPlan(tuple(windows), ranges, redraw_period)


def window_mask(plan: EnrichmentPlan, duration_minutes: int) -> np.ndarray:
    """Boolean per-minute mask of enrichment coverage."""
    mask = np.zeros(duration_minutes, dtype=bool)
    for s, d in plan.windows:
        mask[max(s, 0):min(s + d, duration_minutes)] = True
    return mask


def perturb(ranges: SpeedRanges, rng: np.random.Generator) -> ControlVector:
    """Draw each speed independently and uniformly from its range."""
    return ControlVector(
        cwp_speed=float(rng.uniform(*ranges.cwp)),
        chwp_speed=float(rng.uniform(*ranges.chwp)),
        ct_speed=float(rng.uniform(*ranges.ct)),
    )


def enrichment_controller(
    plan: EnrichmentPlan,
    base_controller: Optional[Controller],
    seed: int = 0,
) -> Controller:
    """Wrap a controller so that inside plan windows the speeds are redrawn
    every redraw-period minutes; outside windows the base controller runs
    untouched.  On/off schedules from the base controller always pass
    through."""
    rng = np.random.default_rng((seed, 23))
    state = {"t": 0, "window": None, "drawn_at": None, "control": None}

    def controller(record: Optional[SensorRecord]) -> Optional[ControlCommand]:
        t = state["t"]
        state["t"] = t + 1
        base_cmd = base_controller(record) if base_controller is not None else None
        win = plan.window_at(t)
        if win is None:
            state["window"] = None
            return base_cmd
        if state["window"] != win or (t - state["drawn_at"]) >= plan.redraw_period:
            state["window"] = win
            state["drawn_at"] = t
            state["control"] = perturb(plan.ranges, rng)
        cmd = base_cmd if base_cmd is not None else ControlCommand()
        return ControlCommand(
            control=state["control"], onoff=cmd.onoff, chsp=cmd.chsp
        )

    return controller
