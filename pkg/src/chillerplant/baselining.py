"""Energy baselining and savings estimation.

Fits a power model on pre-optimization telemetry using only weather and
cooling load as features, then scores optimized operation against the
counterfactual estimate.  Keeping control parameters out of the feature set
is what makes the estimate a valid counterfactual.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .simplant import MINUTES_PER_DAY, SensorRecord
from .surrogate import MlpModel, fit_mlp, _mlp_to_obj, _mlp_from_obj
from .telemetry import InsufficientData

BASELINE_FEATURES = ("db", "rh", "load_rt")
MIN_BASELINE_DAYS = 3


@dataclass
class BaselineModel:
    """Weather-and-load power model trained on un-optimized operation."""

    mlp: MlpModel
    start_ts: int
    end_ts: int

    def estimate(self, records: Sequence[SensorRecord]) -> np.ndarray:
        X = np.array([[r.db, r.rh, r.load_rt] for r in records], dtype=float)
        return self.mlp.predict(X)


def fit_baseline(records: Sequence[SensorRecord], seed: int = 0,
                 mlp_kwargs: Optional[dict] = None) -> BaselineModel:
    """Train the baseline power model on >= 3 days of un-optimized records."""
    records = list(records)
    if not records:
        raise InsufficientData("no records")
    days = {r.day for r in records}
    if len(days) < MIN_BASELINE_DAYS:
        raise InsufficientData(
            f"baseline period must span >= {MIN_BASELINE_DAYS} days, got {len(days)}"
        )
    X = np.array([[r.db, r.rh, r.load_rt] for r in records], dtype=float)
    y = np.array([r.total_kw for r in records], dtype=float)
    mlp = fit_mlp(X, y, feature_names=BASELINE_FEATURES,
                  target_name="total_kw", seed=seed, **(mlp_kwargs or {}))
    return BaselineModel(mlp=mlp, start_ts=records[0].ts, end_ts=records[-1].ts)


@dataclass
class DailySaving:
    day: int
    estimated_kwh: float
    measured_kwh: float
    saving_pct: float


@dataclass
class SavingsReport:
    days: list[DailySaving]
    mean_saving_pct: float

    def to_dict(self) -> dict:
        return {
            "days": [{"date": d.day, "estimated_kwh": d.estimated_kwh,
                      "measured_kwh": d.measured_kwh,
                      "saving_pct": d.saving_pct} for d in self.days],
            "mean_saving_pct": self.mean_saving_pct,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def savings(model: BaselineModel,
            optimized_records: Sequence[SensorRecord]) -> SavingsReport:
    """Per-day saving percentage: (estimated - measured) / estimated * 100,
    aggregated over simulated-clock days, plus the mean."""
    records = list(optimized_records)
    if not records:
        raise ValueError("optimized record set is empty")
    est = model.estimate(records)
    by_day: dict[int, list[tuple[float, float]]] = {}
    for r, e in zip(records, est):
        by_day.setdefault(r.day, []).append((float(e), r.total_kw))
    days = []
    for day in sorted(by_day):
        pairs = by_day[day]
        est_kwh = sum(p[0] for p in pairs) / 60.0  # per-minute kW samples
        meas_kwh = sum(p[1] for p in pairs) / 60.0
        pct = 100.0 * (est_kwh - meas_kwh) / est_kwh
        days.append(DailySaving(day=day, estimated_kwh=est_kwh,
                                measured_kwh=meas_kwh, saving_pct=pct))
    mean_pct = float(np.mean([d.saving_pct for d in days]))
    return SavingsReport(days=days, mean_saving_pct=mean_pct)


def efficiency_by_day(records: Sequence[SensorRecord]) -> dict[int, float]:
    """Daily mean kW per RT of cooling delivered (conventional efficiency)."""
    by_day: dict[int, list[SensorRecord]] = {}
    for r in records:
        by_day.setdefault(r.day, []).append(r)
    return {
        day: float(np.mean([r.total_kw for r in rs])
                   / np.mean([r.load_rt for r in rs]))
        for day, rs in sorted(by_day.items())
    }


def baseline_to_dict(model: BaselineModel) -> dict:
    return {"mlp": _mlp_to_obj(model.mlp),
            "start_ts": model.start_ts, "end_ts": model.end_ts}


def baseline_from_dict(d: dict) -> BaselineModel:
    return BaselineModel(mlp=_mlp_from_obj(d["mlp"]),
                         start_ts=int(d["start_ts"]), end_ts=int(d["end_ts"]))


def save_baseline(model: BaselineModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(baseline_to_dict(model), fh)
        fh.write("\n")


def load_baseline(path: str | Path) -> BaselineModel:
    with open(path, "r", encoding="utf-8") as fh:
        return baseline_from_dict(json.load(fh))
