"""Constrained real-time power minimization over the VSD control vector.

Minimizes the composed model graph's predicted total power over
(cwp_speed, chwp_speed, ct_speed) with box bounds on the speeds and bounds
on predicted flows and condenser supply temperature, using a derivative-free
trust-region linear-approximation search (COBYLA).  The real-time loop
applies the solution in bounded steps every few minutes; equipment on/off
always comes from the operator schedule, never from the optimizer.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .simplant import ControlVector, OnOff, SensorRecord, Weather
from .surrogate import PlantModelGraph, predict_graph, predict_total_batch

BOX_TOL = 1e-6
QUANTITY_TOL_FRACTION = 1e-3  # of the bound span
DEFAULT_MAX_EVALS = 200
DEFAULT_MAX_DELTA = 5.0  # percent per update
TRUST_REGION_INITIAL = 10.0  # speed percent
TRUST_REGION_FINAL = 0.1

QUANTITY_NAMES = ("chfhdr", "cwfhdr", "cwshdr")


class NoFeasiblePoint(Exception):
    """Constraint-violation minimization stalled above tolerance."""


@dataclass
class OptimizationProblem:
    graph: PlantModelGraph
    weather: Weather
    load_rt: float
    chsp: float
    onoff: OnOff
    box: tuple[tuple[float, float], ...] = ((20.0, 100.0),) * 3  # per control
    quantity_bounds: dict = field(default_factory=dict)  # name -> (lo, hi)
    start: ControlVector = ControlVector(60.0, 60.0, 60.0)

    def __post_init__(self) -> None:
        if len(self.box) != 3:
            raise ValueError("box must bound all three controls")
        for lo, hi in self.box:
            if lo > hi:
                raise ValueError("box bounds must satisfy lower <= upper")
        for name, (lo, hi) in self.quantity_bounds.items():
            if name not in QUANTITY_NAMES:
                raise ValueError(f"unknown constrained quantity {name}")
            if lo > hi:
                raise ValueError("quantity bounds must satisfy lower <= upper")
        x0 = self.start.as_array()
        for v, (lo, hi) in zip(x0, self.box):
            if not lo - BOX_TOL <= v <= hi + BOX_TOL:
                raise ValueError("starting point must lie within the box")


@dataclass
class OptimizationResult:
    control: ControlVector
    predicted_kw: float
    chfhdr: float
    cwfhdr: float
    cwshdr: float
    evaluations: int
    feasible: bool


def _quantities(problem: OptimizationProblem, x: np.ndarray):
    total, chf, cwf, cwsh = predict_total_batch(
        problem.graph, x[None, :], problem.weather, problem.load_rt,
        problem.chsp, problem.onoff)
    return float(total[0]), float(chf[0]), float(cwf[0]), float(cwsh[0])


def _violation(problem: OptimizationProblem, chf, cwf, cwsh, x) -> float:
    v = 0.0
    for val, (lo, hi) in zip(x, problem.box):
        v += max(lo - val, 0.0) + max(val - hi, 0.0)
    preds = {"chfhdr": chf, "cwfhdr": cwf, "cwshdr": cwsh}
    for name, (lo, hi) in problem.quantity_bounds.items():
        span = max(hi - lo, 1e-9)
        v += (max(lo - preds[name], 0.0) + max(preds[name] - hi, 0.0)) / span
    return v


def _is_feasible(problem: OptimizationProblem, chf, cwf, cwsh, x) -> bool:
    for val, (lo, hi) in zip(x, problem.box):
        if val < lo - BOX_TOL or val > hi + BOX_TOL:
            return False
    preds = {"chfhdr": chf, "cwfhdr": cwf, "cwshdr": cwsh}
    for name, (lo, hi) in problem.quantity_bounds.items():
        tol = QUANTITY_TOL_FRACTION * max(hi - lo, 1e-9)
        if preds[name] < lo - tol or preds[name] > hi + tol:
            return False
    return True


def _constraint_funs(problem: OptimizationProblem):
    cons = []
    for i, (lo, hi) in enumerate(problem.box):
        cons.append({"type": "ineq", "fun": (lambda x, i=i, lo=lo: x[i] - lo)})
        cons.append({"type": "ineq", "fun": (lambda x, i=i, hi=hi: hi - x[i])})
    if problem.quantity_bounds:
        idx = {"chfhdr": 1, "cwfhdr": 2, "cwshdr": 3}

        def pred(x, which):
            return _quantities(problem, np.asarray(x, dtype=float))[idx[which]]

        for name, (lo, hi) in problem.quantity_bounds.items():
            span = max(hi - lo, 1e-9)
            cons.append({"type": "ineq",
                         "fun": (lambda x, n=name, lo=lo, s=span:
                                 (pred(x, n) - lo) / s)})
            cons.append({"type": "ineq",
                         "fun": (lambda x, n=name, hi=hi, s=span:
                                 (hi - pred(x, n)) / s)})
    return cons


def solve(problem: OptimizationProblem,
          max_evals: int = DEFAULT_MAX_EVALS) -> OptimizationResult:
    """Derivative-free constrained search from the starting point.

    Tracks the best feasible point among all objective evaluations, so the
    returned result is always feasible and never worse than a feasible start.
    If the start violates the predicted-quantity bounds, a violation
    minimization phase runs first; NoFeasiblePoint if it stalls.
    """
    best: dict = {"x": None, "J": math.inf, "q": None}
    evals = {"n": 0}

    def objective(x):
        x = np.asarray(x, dtype=float)
        total, chf, cwf, cwsh = _quantities(problem, x)
        evals["n"] += 1
        if _is_feasible(problem, chf, cwf, cwsh, x) and total < best["J"]:
            best["x"] = x.copy()
            best["J"] = total
            best["q"] = (chf, cwf, cwsh)
        return total

    x0 = problem.start.as_array()
    _, chf0, cwf0, cwsh0 = _quantities(problem, x0)
    if not _is_feasible(problem, chf0, cwf0, cwsh0, x0):
        x0 = _restore_feasibility(problem, x0)
    objective(x0)

    minimize(
        objective, x0, method="COBYLA",
        constraints=_constraint_funs(problem),
        options={"rhobeg": TRUST_REGION_INITIAL, "maxiter": max_evals,
                 "tol": TRUST_REGION_FINAL},
    )
    if best["x"] is None:
        raise NoFeasiblePoint("search produced no feasible point")
    chf, cwf, cwsh = best["q"]
    return OptimizationResult(
        control=ControlVector.from_array(best["x"]),
        predicted_kw=best["J"],
        chfhdr=chf, cwfhdr=cwf, cwshdr=cwsh,
        evaluations=evals["n"], feasible=True,
    )


def _restore_feasibility(problem: OptimizationProblem,
                         x0: np.ndarray) -> np.ndarray:
    """Minimize total scaled constraint violation from an infeasible start."""

    def violation(x):
        x = np.asarray(x, dtype=float)
        _, chf, cwf, cwsh = _quantities(problem, x)
        return _violation(problem, chf, cwf, cwsh, x)

    res = minimize(
        violation, x0, method="COBYLA",
        options={"rhobeg": TRUST_REGION_INITIAL, "maxiter": DEFAULT_MAX_EVALS,
                 "tol": TRUST_REGION_FINAL / 10.0},
    )
    x = np.clip(res.x, [b[0] for b in problem.box], [b[1] for b in problem.box])
    _, chf, cwf, cwsh = _quantities(problem, x)
    if not _is_feasible(problem, chf, cwf, cwsh, x):
        raise NoFeasiblePoint(
            f"violation minimization stalled at {violation(x):.4g}")
    return x


def grid_search(problem: OptimizationProblem,
                step: float = 1.0) -> OptimizationResult:
    """Exhaustive oracle over a regular grid inside the box, honoring the
    same predicted-quantity constraints."""
    axes = [np.arange(lo, hi + 1e-9, step) for lo, hi in problem.box]
    mesh = np.meshgrid(*axes, indexing="ij")
    controls = np.column_stack([m.ravel() for m in mesh])
    total, chf, cwf, cwsh = predict_total_batch(
        problem.graph, controls, problem.weather, problem.load_rt,
        problem.chsp, problem.onoff)
    preds = {"chfhdr": chf, "cwfhdr": cwf, "cwshdr": cwsh}
    feasible = np.ones(controls.shape[0], dtype=bool)
    for name, (lo, hi) in problem.quantity_bounds.items():
        tol = QUANTITY_TOL_FRACTION * max(hi - lo, 1e-9)
        feasible &= (preds[name] >= lo - tol) & (preds[name] <= hi + tol)
    if not feasible.any():
        raise NoFeasiblePoint("no grid point satisfies the constraints")
    idx = np.flatnonzero(feasible)[np.argmin(total[feasible])]
    return OptimizationResult(
        control=ControlVector.from_array(controls[idx]),
        predicted_kw=float(total[idx]),
        chfhdr=float(chf[idx]), cwfhdr=float(cwf[idx]), cwshdr=float(cwsh[idx]),
        evaluations=int(controls.shape[0]), feasible=True,
    )


def control_step(current: ControlVector, target: ControlVector,
                 max_delta: float = DEFAULT_MAX_DELTA) -> ControlVector:
    """Move each speed toward the target, clamped to +-max_delta per call."""
    if max_delta <= 0:
        raise ValueError("max_delta must be positive")
    cur = current.as_array()
    tgt = target.as_array()
    stepped = cur + np.clip(tgt - cur, -max_delta, max_delta)
    return ControlVector.from_array(stepped)


def build_problem(
    graph: PlantModelGraph,
    record: SensorRecord,
    box: Optional[Sequence[tuple[float, float]]] = None,
    quantity_bounds: Optional[dict] = None,
    start: Optional[ControlVector] = None,
) -> OptimizationProblem:
    """Assemble a problem from the latest telemetry snapshot; quantity
    bounds default to those stored with the trained graph."""
    if quantity_bounds is None:
        quantity_bounds = graph.quantity_bounds or {}
    if box is None:
        box = ((20.0, 100.0),) * 3
    start_cv = start if start is not None else record.control
    lo = [b[0] for b in box]
    hi = [b[1] for b in box]
    start_cv = ControlVector.from_array(np.clip(start_cv.as_array(), lo, hi))
    return OptimizationProblem(
        graph=graph, weather=record.weather, load_rt=record.load_rt,
        chsp=record.chsp, onoff=record.onoff,
        box=tuple(tuple(b) for b in box),
        quantity_bounds=dict(quantity_bounds), start=start_cv,
    )


Solver = Callable[[OptimizationProblem], OptimizationResult]
StopCondition = Callable[[int, Optional[SensorRecord]], bool]


def realtime_loop(
    plant,
    graph: PlantModelGraph,
    period: float,
    stop: StopCondition,
    box: Optional[Sequence[tuple[float, float]]] = None,
    quantity_bounds: Optional[dict] = None,
    max_delta: float = DEFAULT_MAX_DELTA,
    solver: Solver = solve,
    log_path: Optional[str | Path] = None,
) -> list[dict]:
    """Run the micro-control loop against a plant interface.

    The plant must expose latest() -> SensorRecord, apply_control(cv) and
    advance(minutes).  Each period the loop reads the newest record, solves
    for the control target, applies a bounded step toward it, and logs the
    tick.  On solver failure the previous controls are held (fail-safe) and
    the failure is logged.  On/off flags are read from the plant schedule and
    never modified here.
    """
    if not 2.0 <= period <= 3.0:
        raise ValueError("update period must be within [2, 3] minutes")
    log: list[dict] = []
    fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        ticks = 0
        while not stop(ticks, plant.latest()):
            record = plant.latest()
            if record is None:
                plant.advance(int(period))
                record = plant.latest()
            current = record.control
            entry = {"ts": record.ts, "measured_kw": record.total_kw,
                     "solver_evals": 0, "feasible": False}
            try:
                problem = build_problem(graph, record, box=box,
                                        quantity_bounds=quantity_bounds,
                                        start=current)
                result = solver(problem)
                applied = control_step(current, result.control, max_delta)
                entry["predicted_kw"] = result.predicted_kw
                entry["solver_evals"] = result.evaluations
                entry["feasible"] = result.feasible
            except NoFeasiblePoint as exc:
                applied = current  # fail-safe hold
                entry["predicted_kw"] = None
                entry["error"] = str(exc)
            plant.apply_control(applied)
            entry["applied"] = {"cwp_speed": applied.cwp_speed,
                                "chwp_speed": applied.chwp_speed,
                                "ct_speed": applied.ct_speed}
            log.append(entry)
            if fh:
                fh.write(json.dumps(entry) + "\n")
                fh.flush()
            plant.advance(int(period))
            ticks += 1
    finally:
        if fh:
            fh.close()
    return log
