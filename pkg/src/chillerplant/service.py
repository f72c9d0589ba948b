"""HTTP control service binding the simulator, telemetry, enrichment and
the optimizer loop.

JSON-over-HTTP stands in for the building automation link: the operator
console performs macro-control (schedules, setpoint), triggers enrichment
windows and toggles the optimizer; the service owns the simulated clock and
serializes every mutation of plant state.
"""
from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import baselining, enrich, optimize, surrogate, telemetry
from .simplant import (
    MINUTES_PER_DAY,
    ControlVector,
    OnOff,
    Scenario,
    Simulation,
    fixed_regime_controller,
    load_scenario,
)

ENV_CONFIG = "PLANTD_CONFIG"


@dataclass
class ServiceConfig:
    scenario_path: str
    telemetry_path: str
    bundle_path: Optional[str] = None
    baseline_path: Optional[str] = None
    run_log_path: Optional[str] = None
    optimizer_period: int = 2  # simulated minutes
    speed: float = 60.0  # simulated minutes per wall minute; <= 0 means instant
    enrichment_duration: int = enrich.DEFAULT_WINDOW_MINUTES
    listen_host: str = "127.0.0.1"
    listen_port: int = 8421

    def __post_init__(self) -> None:
        if not 2 <= self.optimizer_period <= 3:
            raise ValueError("optimizer period must be 2 or 3 minutes")


def load_config(path: Optional[str] = None) -> ServiceConfig:
    path = path or os.environ.get(ENV_CONFIG)
    if not path:
        raise ValueError(f"no config path given and {ENV_CONFIG} unset")
    with open(path, "r", encoding="utf-8") as fh:
        return ServiceConfig(**json.load(fh))


@dataclass
class ScheduleEntry:
    on_ch: tuple[int, ...]
    on_ct: tuple[int, ...]
    on_cwp: tuple[int, ...]
    on_chwp: tuple[int, ...]
    chsp: float = 7.0

    def onoff(self) -> OnOff:
        return OnOff(tuple(self.on_ch), tuple(self.on_ct),
                     tuple(self.on_cwp), tuple(self.on_chwp))


@dataclass
class OperatorSchedule:
    """Whole-day on/off configuration plus setpoint, keyed by day index;
    days without an entry use the default (everything on)."""

    entries: dict[int, ScheduleEntry] = field(default_factory=dict)

    def entry_for(self, day: int, n: int) -> ScheduleEntry:
        if day in self.entries:
            return self.entries[day]
        ones = tuple([1] * n)
        return ScheduleEntry(ones, ones, ones, ones)

    def to_obj(self) -> dict:
        return {
            str(day): {"on_ch": list(e.on_ch), "on_ct": list(e.on_ct),
                       "on_cwp": list(e.on_cwp), "on_chwp": list(e.on_chwp),
                       "chsp": e.chsp}
            for day, e in self.entries.items()
        }

    @staticmethod
    def from_obj(obj: dict) -> "OperatorSchedule":
        entries = {}
        for day, e in obj.items():
            entry = ScheduleEntry(
                on_ch=tuple(int(v) for v in e["on_ch"]),
                on_ct=tuple(int(v) for v in e["on_ct"]),
                on_cwp=tuple(int(v) for v in e["on_cwp"]),
                on_chwp=tuple(int(v) for v in e["on_chwp"]),
                chsp=float(e.get("chsp", 7.0)),
            )
            if not (any(entry.on_ch) and any(entry.on_ct)
                    and any(entry.on_cwp) and any(entry.on_chwp)):
                raise ValueError(
                    f"day {day}: schedule must keep at least one of each "
                    "equipment type available"
                )
            entries[int(day)] = entry
        return OperatorSchedule(entries)


class PlantService:
    """Owns the simulation clock; all state mutations go through its lock."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.scenario: Scenario = load_scenario(config.scenario_path)
        self.sim = Simulation(self.scenario)
        self.store = telemetry.RecordStore(config.telemetry_path)
        self.graph: Optional[surrogate.PlantModelGraph] = None
        if config.bundle_path and Path(config.bundle_path).exists():
            self.graph = surrogate.load_bundle(config.bundle_path)
        self.baseline: Optional[baselining.BaselineModel] = None
        if config.baseline_path and Path(config.baseline_path).exists():
            self.baseline = baselining.load_baseline(config.baseline_path)
        self.schedule = OperatorSchedule()
        self.ddo_enabled = False
        self.ddo_started_ts: Optional[int] = None
        self.last_solve: Optional[dict] = None
        self.run_log: list[dict] = []
        self._enrich_windows: list[tuple[int, int]] = []
        self._enrich_rng_seed = 0
        self._enrich_state: Optional[dict] = None
        self._base_controller = fixed_regime_controller(self.scenario)
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self._run_log_fh = (open(config.run_log_path, "a", encoding="utf-8")
                            if config.run_log_path else None)

    # -- clock ------------------------------------------------------------

    def tick_minutes(self, minutes: int) -> None:
        """Advance the simulated clock; every mutation applied under lock so
        each applied control has exactly one attributable source."""
        for _ in range(minutes):
            with self._lock:
                self._tick_once()

    def _tick_once(self) -> None:
        t = self.sim.state.minute
        day = t // MINUTES_PER_DAY
        entry = self.schedule.entry_for(day, self.sim.config.n_ch)
        self.sim.set_onoff(entry.onoff())
        self.sim.set_chsp(entry.chsp)
        source = "operator"
        win = self._window_at(t)
        if win is not None:
            self._apply_enrichment(t, win)
            source = "enrichment"
        elif self.ddo_enabled and self.graph is not None \
                and t % self.config.optimizer_period == 0 \
                and self.sim.latest() is not None:
            self._optimizer_tick(t)
            source = "optimizer"
        elif not self.ddo_enabled:
            cmd = self._base_controller(self.sim.latest())
            if cmd is not None and cmd.control is not None:
                self.sim.apply_control(cmd.control)
        rec = self.sim.step_minute()
        self.store.append(rec)
        self._last_source = source

    def _window_at(self, t: int) -> Optional[tuple[int, int]]:
        for s, d in self._enrich_windows:
            if s <= t < s + d:
                return (s, d)
        return None

    def _apply_enrichment(self, t: int, win: tuple[int, int]) -> None:
        import numpy as np
        st = self._enrich_state
        if st is None or st["window"] != win \
                or t - st["drawn_at"] >= enrich.DEFAULT_REDRAW_MINUTES:
            rng = np.random.default_rng((self.scenario.seed, 31, t))
            ranges = enrich.SpeedRanges.from_config(self.sim.config)
            self._enrich_state = {
                "window": win, "drawn_at": t,
                "control": enrich.perturb(ranges, rng),
            }
        self.sim.apply_control(self._enrich_state["control"])

    def _optimizer_tick(self, t: int) -> None:
        record = self.sim.latest()
        current = record.control
        entry = {"ts": record.ts, "measured_kw": record.total_kw,
                 "solver_evals": 0, "feasible": False}
        try:
            problem = optimize.build_problem(self.graph, record, start=current)
            result = optimize.solve(problem)
            applied = optimize.control_step(current, result.control)
            entry["predicted_kw"] = result.predicted_kw
            entry["solver_evals"] = result.evaluations
            entry["feasible"] = result.feasible
        except optimize.NoFeasiblePoint as exc:
            applied = current  # fail-safe hold
            entry["predicted_kw"] = None
            entry["error"] = str(exc)
        self.sim.apply_control(applied)
        entry["applied"] = {"cwp_speed": applied.cwp_speed,
                            "chwp_speed": applied.chwp_speed,
                            "ct_speed": applied.ct_speed}
        self.run_log.append(entry)
        self.last_solve = entry
        if self._run_log_fh:
            self._run_log_fh.write(json.dumps(entry) + "\n")
            self._run_log_fh.flush()

    # -- background thread ------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=5)

    def _run(self) -> None:
        delay = 60.0 / self.config.speed if self.config.speed > 0 else 0.0
        while not self._stop.is_set():
            self.tick_minutes(1)
            if delay:
                self._stop.wait(delay)

    # -- queries and mutations (called from API handlers) -----------------

    def latest_record(self):
        with self._lock:
            if self.sim.latest() is None:
                self._tick_once()
            return self.sim.latest()

    def range_records(self, ts_from: int, ts_to: int):
        with self._lock:
            return [r for r in self.store if ts_from <= r.ts <= ts_to]

    def status(self) -> dict:
        with self._lock:
            rec = self.sim.latest()
            return {
                "clock_minute": self.sim.state.minute,
                "ddo_enabled": self.ddo_enabled,
                "ddo_available": self.graph is not None,
                "last_solve": self.last_solve,
                "schedule": self.schedule.to_obj(),
                "chsp": self.sim.state.chsp,
                "enrichment_windows": [[s, d] for s, d in self._enrich_windows],
                "latest_ts": rec.ts if rec else None,
            }

    def set_schedule(self, obj: dict) -> None:
        schedule = OperatorSchedule.from_obj(obj)
        with self._lock:
            self.schedule = schedule

    def set_setpoint(self, chsp: float) -> None:
        if not 5.0 <= chsp <= 10.0:
            raise ValueError("chsp must be within [5, 10] degC")
        with self._lock:
            day = self.sim.state.minute // MINUTES_PER_DAY
            entry = self.schedule.entry_for(day, self.sim.config.n_ch)
            entry = ScheduleEntry(entry.on_ch, entry.on_ct, entry.on_cwp,
                                  entry.on_chwp, chsp)
            self.schedule.entries[day] = entry
            self.sim.set_chsp(chsp)

    def add_enrichment_window(self, duration_min: int) -> tuple[int, int]:
        if not 5 <= duration_min <= 720:
            raise ValueError("window duration must be within [5, 720] minutes")
        with self._lock:
            win = (self.sim.state.minute, int(duration_min))
            self._enrich_windows.append(win)
            return win

    def set_ddo(self, enabled: bool) -> None:
        with self._lock:
            if enabled and self.graph is None:
                raise ValueError("no model bundle loaded; train first")
            self.ddo_enabled = enabled
            if enabled and self.ddo_started_ts is None:
                self.ddo_started_ts = self.sim.state.minute

    def savings_report(self) -> dict:
        with self._lock:
            if self.baseline is None:
                raise ValueError("no baseline model configured")
            if self.ddo_started_ts is None:
                raise ValueError("optimizer has not run yet")
            recs = [r for r in self.store if r.ts >= self.ddo_started_ts]
        if not recs:
            raise ValueError("no optimized records yet")
        return baselining.savings(self.baseline, recs).to_dict()


# -- API ------------------------------------------------------------------


class SchedulePayload(BaseModel):
    entries: dict[str, dict]


class SetpointPayload(BaseModel):
    chsp: float


class EnrichmentPayload(BaseModel):
    duration_min: int = enrich.DEFAULT_WINDOW_MINUTES


class DdoPayload(BaseModel):
    enabled: bool


def create_app(service: PlantService) -> FastAPI:
    app = FastAPI(title="plantd")
    app.state.service = service

    @app.get("/telemetry/latest")
    def latest():
        rec = service.latest_record()
        return telemetry.record_to_obj(rec)

    @app.get("/telemetry/range")
    def rng(ts_from: int = 0, ts_to: int = 10 ** 9):
        return [telemetry.record_to_obj(r)
                for r in service.range_records(ts_from, ts_to)]

    @app.get("/status")
    def status():
        return service.status()

    @app.post("/schedule")
    def schedule(payload: SchedulePayload):
        try:
            service.set_schedule(payload.entries)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"ok": True}

    @app.post("/setpoint")
    def setpoint(payload: SetpointPayload):
        try:
            service.set_setpoint(payload.chsp)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"ok": True}

    @app.post("/enrichment/window")
    def enrichment(payload: EnrichmentPayload):
        try:
            start, dur = service.add_enrichment_window(payload.duration_min)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"start": start, "duration_min": dur}

    @app.post("/ddo")
    def ddo(payload: DdoPayload):
        try:
            service.set_ddo(payload.enabled)
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"enabled": service.ddo_enabled}

    @app.get("/savings")
    def savings():
        try:
            return service.savings_report()
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted (blocking)."""
    import uvicorn

    service = PlantService(config)
    service.start()
    app = create_app(service)
    try:
        uvicorn.run(app, host=config.listen_host, port=config.listen_port,
                    log_level="warning")
    finally:
        service.stop()
