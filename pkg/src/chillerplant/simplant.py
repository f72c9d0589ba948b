"""Ground-truth chiller plant simulator.

A small water-cooled plant (by default three chillers, three cooling towers,
three condenser water pumps and three chilled water pumps) stepped at one
minute resolution.  Pumps and tower fans obey the affinity laws (flow
proportional to speed, power proportional to speed cubed); the chiller model
couples condenser water supply temperature, part-load ratio and condenser
flow into a COP, closed through the plant heat balance by fixed-point
iteration.  The simulator is the "real plant" that the telemetry, surrogate
and optimizer layers measure and control.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

KW_PER_RT = 3.517  # kW thermal per refrigeration ton
MINUTES_PER_DAY = 1440
WATER_HEAT_KW = 4.186  # kW carried per (L/s * K)

# Long-period modulation applied to the load profile so consecutive days are
# not identical; deliberately incommensurate with the 1440-minute day.
_WOBBLE_PERIOD_MIN = 5328.0


class SimulationError(Exception):
    """Base class for plant simulation failures."""


class LoadInfeasible(SimulationError):
    """Running equipment cannot carry the requested cooling load."""


class EquipmentOff(SimulationError):
    """Load demanded while a required equipment group is fully off."""


@dataclass(frozen=True)
class Weather:
    db: float  # dry-bulb temperature, degC
    rh: float  # relative humidity, percent


@dataclass(frozen=True)
class ControlVector:
    """Plant-wide VSD speeds in percent, one per equipment group."""

    cwp_speed: float
    chwp_speed: float
    ct_speed: float

    def as_array(self) -> np.ndarray:
        return np.array([self.cwp_speed, self.chwp_speed, self.ct_speed], dtype=float)

    @staticmethod
    def from_array(x: Sequence[float]) -> "ControlVector":
        return ControlVector(float(x[0]), float(x[1]), float(x[2]))

    def clipped(self, lo: float, hi: float) -> "ControlVector":
        return ControlVector(
            float(min(max(self.cwp_speed, lo), hi)),
            float(min(max(self.chwp_speed, lo), hi)),
            float(min(max(self.ct_speed, lo), hi)),
        )


@dataclass(frozen=True)
class OnOff:
    """Per-equipment on/off flags (1 = running)."""

    ch: tuple[int, ...] = (1, 1, 1)
    ct: tuple[int, ...] = (1, 1, 1)
    cwp: tuple[int, ...] = (1, 1, 1)
    chwp: tuple[int, ...] = (1, 1, 1)


@dataclass
class PlantConfig:
    """Rated equipment data and ground-truth closure coefficients."""

    chwp_rated_kw: tuple[float, ...] = (37.0, 39.0, 35.5)
    cwp_rated_kw: tuple[float, ...] = (45.0, 47.0, 43.5)
    ct_rated_kw: tuple[float, ...] = (30.0, 32.0, 29.0)
    ch_capacity_rt: tuple[float, ...] = (400.0, 400.0, 400.0)
    chwp_rated_flow: tuple[float, ...] = (60.0, 63.0, 58.0)  # L/s at 100%
    cwp_rated_flow: tuple[float, ...] = (95.0, 100.0, 92.0)  # L/s at 100%

    # Cooling tower approach: approach = a0 + a1 * Q_rej / (n_on * s_ct * A_ref)
    approach_base: float = 2.0  # degC
    approach_gain: float = 1.29  # degC
    approach_ref_kw: float = 1500.0  # per-tower reference heat rejection

    # Chiller COP = c0 - c1*(cwshdr - chsp) - c2*(PLR - plr_opt)^2
    #               + c3*ln(cwfhdr / cwfhdr_rated), clipped to [2, 8]
    cop_base: float = 6.5
    cop_lift_slope: float = 0.15  # per degC of condenser lift
    cop_plr_curv: float = 2.0
    cop_flow_gain: float = 0.8
    plr_opt: float = 0.8

    sigma: float = 0.01  # relative sensor noise on powers and flows
    temp_sigma: float = 0.1  # absolute sensor noise on cwshdr, degC
    outlier_rate: float = 0.0  # per-record, per-power-sensor gross outlier rate

    speed_min: float = 20.0  # percent; VSDs stall below this
    speed_max: float = 100.0
    max_chw_delta_t: float = 7.0  # degC across the chilled water loop

    def __post_init__(self) -> None:
        for name in ("chwp_rated_kw", "cwp_rated_kw", "ct_rated_kw",
                     "ch_capacity_rt", "chwp_rated_flow", "cwp_rated_flow"):
            vals = tuple(float(v) for v in getattr(self, name))
            setattr(self, name, vals)
            if any(v <= 0 for v in vals):
                raise ValueError(f"{name} must be strictly positive")
        if self.sigma < 0 or self.temp_sigma < 0 or self.outlier_rate < 0:
            raise ValueError("noise levels must be non-negative")
        if self.speed_min < 20.0 or self.speed_max > 100.0 or self.speed_min >= self.speed_max:
            raise ValueError("speed bounds must satisfy 20 <= min < max <= 100")

    @property
    def n_ch(self) -> int:
        return len(self.ch_capacity_rt)

    @property
    def n_ct(self) -> int:
        return len(self.ct_rated_kw)

    @property
    def n_cwp(self) -> int:
        return len(self.cwp_rated_kw)

    @property
    def n_chwp(self) -> int:
        return len(self.chwp_rated_kw)

    @property
    def cwfhdr_rated(self) -> float:
        return float(sum(self.cwp_rated_flow))

    @property
    def design_capacity_rt(self) -> float:
        return float(sum(self.ch_capacity_rt))


@dataclass
class PlantState:
    onoff: OnOff
    control: ControlVector
    chsp: float = 7.0  # chilled water setpoint, degC
    minute: int = 0

    def __post_init__(self) -> None:
        if not 5.0 <= self.chsp <= 10.0:
            raise ValueError("chsp must be within [5, 10] degC")


@dataclass(frozen=True)
class SensorRecord:
    """One per-minute snapshot of controls, weather, flows, temps and powers."""

    ts: int  # minute index since simulation start
    db: float
    rh: float
    cwp_speed: float
    chwp_speed: float
    ct_speed: float
    on_ch: tuple[int, ...]
    on_ct: tuple[int, ...]
    on_cwp: tuple[int, ...]
    on_chwp: tuple[int, ...]
    chfhdr: float  # chilled water header flow, L/s
    cwfhdr: float  # condenser water header flow, L/s
    cwshdr: float  # condenser water supply temperature, degC
    chsp: float
    load_rt: float
    chkw: tuple[float, ...]
    ctkw: tuple[float, ...]
    cwpkw: tuple[float, ...]
    chwpkw: tuple[float, ...]
    total_kw: float

    @property
    def control(self) -> ControlVector:
        return ControlVector(self.cwp_speed, self.chwp_speed, self.ct_speed)

    @property
    def onoff(self) -> OnOff:
        return OnOff(self.on_ch, self.on_ct, self.on_cwp, self.on_chwp)

    @property
    def weather(self) -> Weather:
        return Weather(self.db, self.rh)

    @property
    def day(self) -> int:
        return self.ts // MINUTES_PER_DAY


@dataclass
class Scenario:
    """A simulation scenario: weather envelope, load profile and plant."""

    seed: int = 42
    days: int = 15
    db_min: float = 24.0
    db_max: float = 36.0
    rh_min: float = 45.0
    rh_max: float = 85.0
    db_noise: float = 0.3
    rh_noise: float = 1.5
    peak_rt: float = 900.0
    night_fraction: float = 0.35
    load_wobble: float = 0.08
    plant: PlantConfig = field(default_factory=PlantConfig)
    enrichment: Optional[dict] = None  # raw plan JSON, parsed by chillerplant.enrich

    def __post_init__(self) -> None:
        if self.days < 1:
            raise ValueError("scenario must span at least one day")
        if not 0 <= self.rh_min <= self.rh_max <= 100:
            raise ValueError("relative humidity bounds must lie in [0, 100]")
        if self.db_min >= self.db_max:
            raise ValueError("db_min must be below db_max")
        if not 0 < self.night_fraction < 1:
            raise ValueError("night_fraction must be in (0, 1)")
        if self.peak_rt * (1 + self.load_wobble) > self.plant.design_capacity_rt:
            raise ValueError("peak load exceeds plant design capacity")

    @property
    def duration(self) -> int:
        return self.days * MINUTES_PER_DAY


def scenario_to_dict(s: Scenario) -> dict:
    d = {
        "seed": s.seed,
        "days": s.days,
        "weather": {
            "db_min": s.db_min, "db_max": s.db_max,
            "rh_min": s.rh_min, "rh_max": s.rh_max,
            "db_noise": s.db_noise, "rh_noise": s.rh_noise,
        },
        "load": {
            "peak_rt": s.peak_rt,
            "night_fraction": s.night_fraction,
            "wobble": s.load_wobble,
        },
        "plant": asdict(s.plant),
    }
    if s.enrichment is not None:
        d["enrichment"] = s.enrichment
    return d


def scenario_from_dict(d: dict) -> Scenario:
    w = d.get("weather", {})
    l = d.get("load", {})
    plant = PlantConfig(**d.get("plant", {}))
    return Scenario(
        seed=int(d.get("seed", 42)),
        days=int(d.get("days", 15)),
        db_min=float(w.get("db_min", 24.0)),
        db_max=float(w.get("db_max", 36.0)),
        rh_min=float(w.get("rh_min", 45.0)),
        rh_max=float(w.get("rh_max", 85.0)),
        db_noise=float(w.get("db_noise", 0.3)),
        rh_noise=float(w.get("rh_noise", 1.5)),
        peak_rt=float(l.get("peak_rt", 900.0)),
        night_fraction=float(l.get("night_fraction", 0.35)),
        load_wobble=float(l.get("wobble", 0.08)),
        plant=plant,
        enrichment=d.get("enrichment"),
    )


def load_scenario(path: str | Path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(s: Scenario, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2)
        fh.write("\n")


def weather_at(scenario: Scenario, t: int) -> Weather:
    """Diurnal weather at minute t: a 1440-minute sinusoid plus seeded noise.

    Deterministic per (scenario.seed, t); exactly periodic with the noise
    amplitudes set to zero.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    # Reduce t modulo one day first so the noise-free profile is bit-exactly
    # periodic (cos of a shifted argument differs in the last ulp otherwise).
    c = math.cos(2.0 * math.pi * ((t % MINUTES_PER_DAY) - 180.0) / MINUTES_PER_DAY)  # -1 at 15:00
    db_mid = 0.5 * (scenario.db_min + scenario.db_max)
    db_amp = 0.5 * (scenario.db_max - scenario.db_min)
    rh_mid = 0.5 * (scenario.rh_min + scenario.rh_max)
    rh_amp = 0.5 * (scenario.rh_max - scenario.rh_min)
    db = db_mid - db_amp * c
    rh = rh_mid + rh_amp * c  # humid nights, dry afternoons
    if scenario.db_noise > 0 or scenario.rh_noise > 0:
        rng = np.random.default_rng((scenario.seed, 11, t))
        db += rng.normal(0.0, scenario.db_noise)
        rh += rng.normal(0.0, scenario.rh_noise)
    db = min(max(db, scenario.db_min), scenario.db_max)
    rh = min(max(rh, scenario.rh_min), scenario.rh_max)
    return Weather(db, rh)


def load_at(scenario: Scenario, t: int) -> float:
    """Cooling load (RT) at minute t: smooth occupancy-driven daily profile.

    The profile peaks mid-afternoon in phase with dry-bulb temperature; a slow
    incommensurate modulation decorrelates consecutive days.  The per-minute
    ramp stays well under 1% of the peak.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    occ = 0.5 * (1.0 - math.cos(2.0 * math.pi * (t - 180.0) / MINUTES_PER_DAY))
    base = scenario.peak_rt * (scenario.night_fraction + (1.0 - scenario.night_fraction) * occ)
    amp = 1.0 + scenario.load_wobble * math.sin(2.0 * math.pi * t / _WOBBLE_PERIOD_MIN + 1.3)
    return base * amp


def _clip(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def step(
    config: PlantConfig,
    state: PlantState,
    weather: Weather,
    load: float,
    rng: Optional[np.random.Generator] = None,
) -> SensorRecord:
    """Advance the ground-truth closure one minute and emit a sensor record.

    Raises EquipmentOff if load is demanded with a required equipment group
    fully off, and LoadInfeasible if the chilled water loop cannot carry the
    load even at full pump speed.
    """
    on = state.onoff
    n_ch_on = sum(on.ch)
    n_ct_on = sum(on.ct)
    n_cwp_on = sum(on.cwp)
    n_chwp_on = sum(on.chwp)
    if load > 0 and min(n_ch_on, n_ct_on, n_cwp_on, n_chwp_on) == 0:
        raise EquipmentOff(
            f"cooling load {load:.1f} RT demanded with an equipment group off "
            f"(on: ch={n_ch_on} ct={n_ct_on} cwp={n_cwp_on} chwp={n_chwp_on})"
        )
    if config.sigma > 0 and rng is None:
        raise ValueError("rng required when sigma > 0")

    cv = state.control.clipped(config.speed_min, config.speed_max)
    s_cwp = cv.cwp_speed / 100.0
    s_chwp = cv.chwp_speed / 100.0
    s_ct = cv.ct_speed / 100.0

    chf0 = sum(f * s_chwp for f, o in zip(config.chwp_rated_flow, on.chwp) if o)
    cwf0 = sum(f * s_cwp for f, o in zip(config.cwp_rated_flow, on.cwp) if o)

    if load > 0:
        chf_max = sum(f for f, o in zip(config.chwp_rated_flow, on.chwp) if o)
        dt_required = load * KW_PER_RT / (WATER_HEAT_KW * chf_max)
        if dt_required > config.max_chw_delta_t:
            raise LoadInfeasible(
                f"load {load:.1f} RT needs dT {dt_required:.2f} degC at full "
                f"chilled water flow (limit {config.max_chw_delta_t} degC)"
            )

    wb = weather.db - (100.0 - weather.rh) / 5.0  # wet bulb, rule of thumb

    chkw0 = [0.0] * config.n_ch
    if load > 0:
        share = load / n_ch_on
        q = load * KW_PER_RT * 1.25  # initial heat-rejection guess
        cwshdr0 = wb + config.approach_base
        for _ in range(100):
            approach = _clip(
                config.approach_base
                + config.approach_gain * q / (n_ct_on * s_ct * config.approach_ref_kw),
                1.5, 12.0,
            )
            cwshdr0 = wb + approach
            for i, o in enumerate(on.ch):
                if not o:
                    chkw0[i] = 0.0
                    continue
                plr = share / config.ch_capacity_rt[i]
                cop = _clip(
                    config.cop_base
                    - config.cop_lift_slope * (cwshdr0 - state.chsp)
                    - config.cop_plr_curv * (plr - config.plr_opt) ** 2
                    + config.cop_flow_gain * math.log(cwf0 / config.cwfhdr_rated),
                    2.0, 8.0,
                )
                chkw0[i] = share * KW_PER_RT / cop
            q_new = load * KW_PER_RT + sum(chkw0)
            if abs(q_new - q) < 1e-10:
                break
            q = q_new
    else:
        cwshdr0 = wb + _clip(config.approach_base, 1.5, 12.0)

    sigma = config.sigma

    def noisy(v: float) -> float:
        if sigma > 0 and v != 0.0:
            return v * (1.0 + rng.normal(0.0, sigma))
        return v

    chwpkw = [noisy(r * s_chwp ** 3) if o else 0.0
              for r, o in zip(config.chwp_rated_kw, on.chwp)]
    cwpkw = [noisy(r * s_cwp ** 3) if o else 0.0
             for r, o in zip(config.cwp_rated_kw, on.cwp)]
    ctkw = [noisy(r * s_ct ** 3) if o else 0.0
            for r, o in zip(config.ct_rated_kw, on.ct)]
    chkw = [noisy(v) for v in chkw0]
    chfhdr = noisy(chf0)
    cwfhdr = noisy(cwf0)
    cwshdr = cwshdr0
    if config.temp_sigma > 0:
        cwshdr += rng.normal(0.0, config.temp_sigma)

    if config.outlier_rate > 0:
        for powers in (chkw, ctkw, cwpkw, chwpkw):
            for i, v in enumerate(powers):
                if v > 0 and rng.random() < config.outlier_rate:
                    powers[i] = v * rng.uniform(4.0, 9.0)

    total = sum(chkw) + sum(ctkw) + sum(cwpkw) + sum(chwpkw)
    return SensorRecord(
        ts=state.minute,
        db=weather.db, rh=weather.rh,
        cwp_speed=cv.cwp_speed, chwp_speed=cv.chwp_speed, ct_speed=cv.ct_speed,
        on_ch=tuple(on.ch), on_ct=tuple(on.ct),
        on_cwp=tuple(on.cwp), on_chwp=tuple(on.chwp),
        chfhdr=chfhdr, cwfhdr=cwfhdr, cwshdr=cwshdr,
        chsp=state.chsp, load_rt=load,
        chkw=tuple(chkw), ctkw=tuple(ctkw),
        cwpkw=tuple(cwpkw), chwpkw=tuple(chwpkw),
        total_kw=total,
    )


@dataclass
class ControlCommand:
    """Optional updates a controller may return for the next minute."""

    control: Optional[ControlVector] = None
    onoff: Optional[OnOff] = None
    chsp: Optional[float] = None


Controller = Callable[[Optional[SensorRecord]], Optional[ControlCommand]]


def default_control(config: PlantConfig) -> ControlVector:
    return ControlVector(90.0, 85.0, 30.0).clipped(config.speed_min, config.speed_max)


def default_state(config: PlantConfig) -> PlantState:
    ones = lambda n: tuple([1] * n)
    return PlantState(
        onoff=OnOff(ones(config.n_ch), ones(config.n_ct),
                    ones(config.n_cwp), ones(config.n_chwp)),
        control=default_control(config),
        chsp=7.0,
        minute=0,
    )


class Simulation:
    """A stepping plant instance: one owner, immutable emitted records."""

    def __init__(self, scenario: Scenario, initial: Optional[PlantState] = None):
        self.scenario = scenario
        self.config = scenario.plant
        self.state = initial if initial is not None else default_state(scenario.plant)
        self._rng = np.random.default_rng(scenario.seed)
        self._last: Optional[SensorRecord] = None

    def latest(self) -> Optional[SensorRecord]:
        return self._last

    def apply_control(self, cv: ControlVector) -> None:
        self.state.control = cv.clipped(self.config.speed_min, self.config.speed_max)

    def set_onoff(self, onoff: OnOff) -> None:
        self.state.onoff = onoff

    def set_chsp(self, chsp: float) -> None:
        self.state.chsp = _clip(float(chsp), 5.0, 10.0)

    def apply_command(self, cmd: ControlCommand) -> None:
        if cmd.onoff is not None:
            self.set_onoff(cmd.onoff)
        if cmd.chsp is not None:
            self.set_chsp(cmd.chsp)
        if cmd.control is not None:
            self.apply_control(cmd.control)

    def step_minute(self) -> SensorRecord:
        t = self.state.minute
        w = weather_at(self.scenario, t)
        ld = load_at(self.scenario, t)
        try:
            rec = step(self.config, self.state, w, ld, self._rng)
        except SimulationError as exc:
            raise type(exc)(f"t={t}: {exc}") from exc
        self.state.minute = t + 1
        self._last = rec
        return rec

    def advance(self, minutes: int) -> list[SensorRecord]:
        return [self.step_minute() for _ in range(minutes)]


def simulate(
    scenario: Scenario,
    controller: Optional[Controller],
    duration: int,
    store=None,
) -> list[SensorRecord]:
    """Run the plant for `duration` minutes under a controller callback.

    The callback sees the latest record (None on the first minute) and may
    return a ControlCommand.  Deterministic for a fixed scenario seed and
    controller.  Records are appended to `store` when given.
    """
    if duration < 1:
        raise ValueError("duration must be at least one minute")
    sim = Simulation(scenario)
    out: list[SensorRecord] = []
    for _ in range(duration):
        if controller is not None:
            cmd = controller(sim.latest())
            if cmd is not None:
                sim.apply_command(cmd)
        rec = sim.step_minute()
        if store is not None:
            store.append(rec)
        out.append(rec)
    return out


@dataclass
class FixedRegimeController:
    """Legacy rule-based control: fixed pump speeds, tower fans tracking load
    inside a narrow band.  This is the un-optimized regime used for
    baselining and as the enrichment-free training corpus."""

    peak_rt: float
    cwp_speed: float = 90.0
    chwp_speed: float = 85.0
    ct_min: float = 20.0
    ct_max: float = 40.0

    def __call__(self, record: Optional[SensorRecord]) -> ControlCommand:
        load = record.load_rt if record is not None else 0.5 * self.peak_rt
        frac = _clip(load / self.peak_rt, 0.0, 1.0)
        ct = self.ct_min + (self.ct_max - self.ct_min) * frac
        return ControlCommand(
            control=ControlVector(self.cwp_speed, self.chwp_speed, ct)
        )


def fixed_regime_controller(scenario: Scenario) -> FixedRegimeController:
    return FixedRegimeController(peak_rt=scenario.peak_rt)
