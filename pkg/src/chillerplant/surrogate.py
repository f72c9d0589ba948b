"""Module-wise surrogate models of the plant.

Cubic polynomial regression for the single-input power modules (CWP, CHWP,
CT fans; the affinity cube law makes a degree-3 fit sufficient), small MLPs
for the multi-input modules (chilled/condenser water flow, condenser water
temperature, chiller power), and their composition into a total-power
predictor: the flow and temperature model outputs feed the per-chiller power
models.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import telemetry
from .simplant import ControlVector, OnOff, SensorRecord, Weather
from .telemetry import Degenerate, mape

MLP_HIDDEN_UNITS = 3
POLY_DEGREE = 3

DEFAULT_EPOCHS = 2000
DEFAULT_LEARNING_RATE = 0.05
DEFAULT_MOMENTUM = 0.9
DEFAULT_PATIENCE = 200


class NonFinite(Exception):
    """Training loss diverged."""


class UntrainedModule(Exception):
    """Prediction requested from a graph with a missing module model."""


# ---------------------------------------------------------------------------
# SISO: cubic polynomial power curves


@dataclass(frozen=True)
class PolyModel:
    """Cubic power curve y = a0 + a1 x + a2 x^2 + a3 x^3."""

    coefficients: tuple[float, float, float, float]  # ascending order
    input_name: str = ""
    output_name: str = ""
    x_min: float = float("nan")
    x_max: float = float("nan")

    def __post_init__(self) -> None:
        if len(self.coefficients) != POLY_DEGREE + 1:
            raise ValueError("exactly four coefficients required")
        if not all(math.isfinite(c) for c in self.coefficients):
            raise ValueError("coefficients must be finite")


def fit_poly(xs, ys, input_name: str = "", output_name: str = "") -> PolyModel:
    """Least-squares cubic; records the training range of x."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 8:
        raise ValueError("need at least 8 points to fit a power curve")
    if np.ptp(xs) == 0 or np.unique(xs).size < POLY_DEGREE + 1:
        raise Degenerate("design matrix is rank-deficient (xs nearly constant)")
    design = np.vander(xs, POLY_DEGREE + 1, increasing=True)
    coeffs, _, rank, _ = np.linalg.lstsq(design, ys, rcond=None)
    if rank < POLY_DEGREE + 1:
        raise Degenerate("design matrix is rank-deficient")
    return PolyModel(
        coefficients=tuple(float(c) for c in coeffs),
        input_name=input_name,
        output_name=output_name,
        x_min=float(xs.min()),
        x_max=float(xs.max()),
    )


def predict_poly(model: PolyModel, x):
    """Evaluate the curve; second return flags extrapolation outside the
    training range (scalar in, scalar flag; array in, array flag)."""
    xa = np.asarray(x, dtype=float)
    y = np.polynomial.polynomial.polyval(xa, np.asarray(model.coefficients))
    flag = (xa < model.x_min) | (xa > model.x_max)
    if np.isscalar(x) or xa.ndim == 0:
        return float(y), bool(flag)
    return y, flag


# ---------------------------------------------------------------------------
# MISO: one-hidden-layer MLP with logistic activation


@dataclass(frozen=True)
class MlpModel:
    """One hidden layer of 3 logistic units, linear output, standardized IO."""

    feature_names: tuple[str, ...]
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float
    w1: np.ndarray  # (n_features, 3)
    b1: np.ndarray  # (3,)
    w2: np.ndarray  # (3,)
    b2: float
    target_name: str = ""

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = (X - self.x_mean) / self.x_scale
        h = _logistic(Z @ self.w1 + self.b1)
        ys = h @ self.w2 + self.b2
        return ys * self.y_scale + self.y_mean

    def predict_one(self, x) -> float:
        return float(self.predict(np.asarray(x, dtype=float)[None, :])[0])


def _logistic(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def mlp_forward(w1, b1, w2, b2, X):
    h = _logistic(X @ w1 + b1)
    return h @ w2 + b2, h


def mlp_loss_gradients(w1, b1, w2, b2, X, y):
    """Mean squared error and its analytic gradients via backprop."""
    n = X.shape[0]
    yhat, h = mlp_forward(w1, b1, w2, b2, X)
    err = yhat - y
    loss = float(np.mean(err ** 2))
    d = 2.0 * err / n
    gw2 = h.T @ d
    gb2 = float(np.sum(d))
    dh = np.outer(d, w2)
    dz = dh * h * (1.0 - h)
    gw1 = X.T @ dz
    gb1 = dz.sum(axis=0)
    return loss, (gw1, gb1, gw2, gb2)


def _standardize(a: np.ndarray):
    mean = a.mean(axis=0)
    scale = a.std(axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)
    return (a - mean) / scale, mean, scale


def fit_mlp(
    X,
    y,
    epochs: int = DEFAULT_EPOCHS,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    momentum: float = DEFAULT_MOMENTUM,
    seed: int = 0,
    feature_names: Optional[Sequence[str]] = None,
    target_name: str = "",
    patience: int = DEFAULT_PATIENCE,
) -> MlpModel:
    """Full-batch gradient descent with momentum on standardized data.

    A 10% validation split (deterministic per seed) selects the best-epoch
    weights; training stops early after `patience` epochs without validation
    improvement.  Raises NonFinite if the loss diverges.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be (n, d) with matching y")
    n, d = X.shape
    if n < 200:
        raise ValueError("need at least 200 rows to train an MLP")
    if feature_names is None:
        feature_names = tuple(f"x{i}" for i in range(d))
    feature_names = tuple(feature_names)
    if len(feature_names) != d:
        raise ValueError("feature_names length must match X columns")

    Xs, x_mean, x_scale = _standardize(X)
    y_mean = float(y.mean())
    y_scale = float(y.std())
    y_scale = y_scale if y_scale > 1e-12 else 1.0
    ys = (y - y_mean) / y_scale

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_val = max(1, n // 10)
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    Xtr, ytr = Xs[tr_idx], ys[tr_idx]
    Xval, yval = Xs[val_idx], ys[val_idx]

    k = MLP_HIDDEN_UNITS
    w1 = rng.normal(0.0, 1.0 / math.sqrt(d), size=(d, k))
    b1 = np.zeros(k)
    w2 = rng.normal(0.0, 1.0 / math.sqrt(k), size=k)
    b2 = 0.0
    v = [np.zeros_like(w1), np.zeros_like(b1), np.zeros_like(w2), 0.0]

    best = (w1.copy(), b1.copy(), w2.copy(), b2)
    best_val = math.inf
    stall = 0
    for epoch in range(epochs):
        loss, grads = mlp_loss_gradients(w1, b1, w2, b2, Xtr, ytr)
        if not math.isfinite(loss) or loss > 1e12:
            raise NonFinite(f"training loss diverged at epoch {epoch}")
        v[0] = momentum * v[0] - learning_rate * grads[0]
        v[1] = momentum * v[1] - learning_rate * grads[1]
        v[2] = momentum * v[2] - learning_rate * grads[2]
        v[3] = momentum * v[3] - learning_rate * grads[3]
        w1 = w1 + v[0]
        b1 = b1 + v[1]
        w2 = w2 + v[2]
        b2 = b2 + v[3]
        val_pred, _ = mlp_forward(w1, b1, w2, b2, Xval)
        val_loss = float(np.mean((val_pred - yval) ** 2))
        if val_loss < best_val - 1e-12:
            best_val = val_loss
            best = (w1.copy(), b1.copy(), w2.copy(), b2)
            stall = 0
        else:
            stall += 1
            if stall >= patience:
                break
    w1, b1, w2, b2 = best
    return MlpModel(
        feature_names=feature_names,
        x_mean=x_mean, x_scale=x_scale,
        y_mean=y_mean, y_scale=y_scale,
        w1=w1, b1=b1, w2=w2, b2=float(b2),
        target_name=target_name,
    )


# ---------------------------------------------------------------------------
# Feature extraction from sensor records

CHFM, CWFM, CWTM = "CHFM", "CWFM", "CWTM"


def chfm_features(chwp_speed, on_chwp) -> list[float]:
    return [float(chwp_speed)] + [float(o) for o in on_chwp]


def cwfm_features(cwp_speed, on_cwp) -> list[float]:
    return [float(cwp_speed)] + [float(o) for o in on_cwp]


def cwtm_features(ct_speed, on_ct, db, rh) -> list[float]:
    # Condenser water supply temperature does not depend on pump speeds.
    return [float(ct_speed)] + [float(o) for o in on_ct] + [float(db), float(rh)]


def ch_features(chfhdr, cwfhdr, cwshdr, load_rt, chsp) -> list[float]:
    return [float(chfhdr), float(cwfhdr), float(cwshdr), float(load_rt), float(chsp)]


def siso_dataset(records: Sequence[SensorRecord], kind: str, idx: int):
    """(speed, power) pairs for one pump or fan, on-rows only."""
    attr = {"chwp": ("chwp_speed", "chwpkw", "on_chwp"),
            "cwp": ("cwp_speed", "cwpkw", "on_cwp"),
            "ct": ("ct_speed", "ctkw", "on_ct")}[kind]
    xs, ys = [], []
    for r in records:
        if getattr(r, attr[2])[idx]:
            xs.append(getattr(r, attr[0]))
            ys.append(getattr(r, attr[1])[idx])
    return np.asarray(xs), np.asarray(ys)


def miso_dataset(records: Sequence[SensorRecord], which: str, ch_idx: int = 0):
    """Design matrix and target for one MISO module."""
    X, y = [], []
    for r in records:
        if which == CHFM:
            X.append(chfm_features(r.chwp_speed, r.on_chwp))
            y.append(r.chfhdr)
        elif which == CWFM:
            X.append(cwfm_features(r.cwp_speed, r.on_cwp))
            y.append(r.cwfhdr)
        elif which == CWTM:
            X.append(cwtm_features(r.ct_speed, r.on_ct, r.db, r.rh))
            y.append(r.cwshdr)
        elif which == "CH":
            if r.on_ch[ch_idx] and r.chkw[ch_idx] > 0:
                X.append(ch_features(r.chfhdr, r.cwfhdr, r.cwshdr, r.load_rt, r.chsp))
                y.append(r.chkw[ch_idx])
        else:
            raise ValueError(f"unknown module {which}")
    return np.asarray(X, dtype=float), np.asarray(y, dtype=float)


_MISO_FEATURE_NAMES = {
    CHFM: lambda n: ("chwp_speed",) + tuple(f"on_chwp{i+1}" for i in range(n)),
    CWFM: lambda n: ("cwp_speed",) + tuple(f"on_cwp{i+1}" for i in range(n)),
    CWTM: lambda n: ("ct_speed",) + tuple(f"on_ct{i+1}" for i in range(n)) + ("db", "rh"),
}
CH_FEATURE_NAMES = ("chfhdr", "cwfhdr", "cwshdr", "load_rt", "chsp")


# ---------------------------------------------------------------------------
# Composed plant model graph


@dataclass
class PowerBreakdown:
    """Per-module predictions plus total predicted power."""

    chfhdr: float
    cwfhdr: float
    cwshdr: float
    chkw: tuple[float, ...]
    ctkw: tuple[float, ...]
    cwpkw: tuple[float, ...]
    chwpkw: tuple[float, ...]
    total_kw: float
    extrapolated: bool = False


@dataclass
class PlantModelGraph:
    """The composed model zoo: flow/temperature models feed the per-chiller
    power models; per-equipment power curves are summed alongside."""

    chwp: tuple[PolyModel, ...] = ()
    cwp: tuple[PolyModel, ...] = ()
    ct: tuple[PolyModel, ...] = ()
    chfm: Optional[MlpModel] = None
    cwfm: Optional[MlpModel] = None
    cwtm: Optional[MlpModel] = None
    ch: tuple[MlpModel, ...] = ()
    quantity_bounds: Optional[dict] = None  # {"chfhdr"|"cwfhdr"|"cwshdr": (lo, hi)}

    def require_trained(self, onoff: OnOff) -> None:
        missing = []
        if any(onoff.chwp) and (self.chfm is None or len(self.chwp) < len(onoff.chwp)):
            missing.append("CHFM/CHWP")
        if any(onoff.cwp) and (self.cwfm is None or len(self.cwp) < len(onoff.cwp)):
            missing.append("CWFM/CWP")
        if any(onoff.ct) and self.cwtm is None:
            missing.append("CWTM")
        if any(onoff.ch) and len(self.ch) < len(onoff.ch):
            missing.append("CH")
        if missing:
            raise UntrainedModule(f"missing trained modules: {', '.join(missing)}")


def predict_graph(
    graph: PlantModelGraph,
    control: ControlVector,
    weather: Weather,
    load_rt: float,
    chsp: float,
    onoff: OnOff,
) -> PowerBreakdown:
    """Compose the graph for one operating point."""
    if not (any(onoff.ch) or any(onoff.ct) or any(onoff.cwp) or any(onoff.chwp)):
        n = len(onoff.ch)
        z = tuple([0.0] * n)
        return PowerBreakdown(0.0, 0.0, 0.0, z,
                              tuple([0.0] * len(onoff.ct)),
                              tuple([0.0] * len(onoff.cwp)),
                              tuple([0.0] * len(onoff.chwp)), 0.0)
    graph.require_trained(onoff)
    extrapolated = False

    chf = graph.chfm.predict_one(chfm_features(control.chwp_speed, onoff.chwp)) \
        if any(onoff.chwp) else 0.0
    cwf = graph.cwfm.predict_one(cwfm_features(control.cwp_speed, onoff.cwp)) \
        if any(onoff.cwp) else 0.0
    cwsh = graph.cwtm.predict_one(
        cwtm_features(control.ct_speed, onoff.ct, weather.db, weather.rh)
    ) if any(onoff.ct) else 0.0

    chkw = []
    for i, o in enumerate(onoff.ch):
        if o and load_rt > 0:
            chkw.append(graph.ch[i].predict_one(
                ch_features(chf, cwf, cwsh, load_rt, chsp)))
        else:
            chkw.append(0.0)

    def siso(models, speed, flags):
        out = []
        for i, o in enumerate(flags):
            if o:
                v, flag = predict_poly(models[i], speed)
                out.append(max(v, 0.0))
                nonlocal_extrap[0] = nonlocal_extrap[0] or flag
            else:
                out.append(0.0)
        return out

    nonlocal_extrap = [extrapolated]
    chwpkw = siso(graph.chwp, control.chwp_speed, onoff.chwp)
    cwpkw = siso(graph.cwp, control.cwp_speed, onoff.cwp)
    ctkw = siso(graph.ct, control.ct_speed, onoff.ct)
    total = sum(chkw) + sum(ctkw) + sum(cwpkw) + sum(chwpkw)
    return PowerBreakdown(
        chfhdr=chf, cwfhdr=cwf, cwshdr=cwsh,
        chkw=tuple(chkw), ctkw=tuple(ctkw),
        cwpkw=tuple(cwpkw), chwpkw=tuple(chwpkw),
        total_kw=float(total), extrapolated=bool(nonlocal_extrap[0]),
    )


def predict_total_batch(
    graph: PlantModelGraph,
    controls: np.ndarray,  # (n, 3): cwp_speed, chwp_speed, ct_speed
    weather: Weather,
    load_rt: float,
    chsp: float,
    onoff: OnOff,
):
    """Vectorized total power over many candidate control vectors.

    Returns (total_kw, chfhdr, cwfhdr, cwshdr) arrays; used by grid search
    oracles and batch evaluation.
    """
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    n = controls.shape[0]
    graph.require_trained(onoff)
    cwp_s, chwp_s, ct_s = controls[:, 0], controls[:, 1], controls[:, 2]

    def flags_block(flags):
        return np.repeat(np.asarray(flags, dtype=float)[None, :], n, axis=0)

    chf = graph.chfm.predict(
        np.column_stack([chwp_s, flags_block(onoff.chwp)])) if any(onoff.chwp) \
        else np.zeros(n)
    cwf = graph.cwfm.predict(
        np.column_stack([cwp_s, flags_block(onoff.cwp)])) if any(onoff.cwp) \
        else np.zeros(n)
    cwsh = graph.cwtm.predict(np.column_stack([
        ct_s, flags_block(onoff.ct),
        np.full(n, weather.db), np.full(n, weather.rh)])) if any(onoff.ct) \
        else np.zeros(n)

    total = np.zeros(n)
    if load_rt > 0:
        chx = np.column_stack([chf, cwf, cwsh,
                               np.full(n, load_rt), np.full(n, chsp)])
        for i, o in enumerate(onoff.ch):
            if o:
                total += graph.ch[i].predict(chx)
    for models, speeds, flags in (
        (graph.chwp, chwp_s, onoff.chwp),
        (graph.cwp, cwp_s, onoff.cwp),
        (graph.ct, ct_s, onoff.ct),
    ):
        for i, o in enumerate(flags):
            if o:
                v, _ = predict_poly(models[i], speeds)
                total += np.maximum(v, 0.0)
    return total, chf, cwf, cwsh


# ---------------------------------------------------------------------------
# Training over a telemetry corpus


@dataclass
class TrainReport:
    """Per-module cross-validation MAPEs, mirroring the per-equipment and
    averaged rows of the SISO/MISO evaluation tables plus a TOTAL row."""

    rows: dict[str, dict]  # name -> {"fold_mapes": [...], "mape": avg}

    def to_dict(self) -> dict:
        return {"rows": self.rows}

    def mape(self, name: str) -> float:
        return self.rows[name]["mape"]


def _avg(vals):
    return float(np.mean(vals))


def derive_quantity_bounds(
    records: Sequence[SensorRecord],
    mask: Optional[np.ndarray] = None,
    lo_pct: float = 5.0,
    hi_pct: float = 95.0,
) -> dict:
    """Percentile bounds for the optimizer's predicted-quantity constraints.

    When a per-minute enrichment mask is given, only enriched records count:
    fixed-regime operation collapses the percentiles onto the legacy
    operating point and would pin the optimizer there."""
    if mask is not None:
        recs = [r for r in records if r.ts < mask.size and mask[r.ts]]
    else:
        recs = list(records)
    if not recs:
        raise ValueError("no records available to derive bounds")
    out = {}
    for name in ("chfhdr", "cwfhdr", "cwshdr"):
        vals = np.array([getattr(r, name) for r in recs])
        out[name] = (float(np.percentile(vals, lo_pct)),
                     float(np.percentile(vals, hi_pct)))
    return out


def _fit_siso_bank(records, kind, n_equipment, use_ransac, seed):
    models = []
    for i in range(n_equipment):
        xs, ys = siso_dataset(records, kind, i)
        if use_ransac and xs.size > POLY_DEGREE + 1:
            tol = telemetry.robust_inlier_tol(xs, ys, POLY_DEGREE)
            res = telemetry.ransac_filter(xs, ys, POLY_DEGREE, tol,
                                          iterations=200, seed=seed + i)
            xs, ys = xs[res.inlier_mask], ys[res.inlier_mask]
        models.append(fit_poly(xs, ys, input_name=f"{kind}_speed",
                               output_name=f"{kind}kw[{i}]"))
    return tuple(models)


def _fit_graph(records, n_ch, n_ct, n_cwp, n_chwp, seed, use_ransac=True,
               mlp_kwargs=None) -> PlantModelGraph:
    mlp_kwargs = mlp_kwargs or {}
    try:
        chwp = _fit_siso_bank(records, "chwp", n_chwp, use_ransac, seed)
        cwp = _fit_siso_bank(records, "cwp", n_cwp, use_ransac, seed + 100)
        ct = _fit_siso_bank(records, "ct", n_ct, use_ransac, seed + 200)
    except (Degenerate, ValueError) as exc:
        raise type(exc)(f"SISO fit failed: {exc}") from exc

    def fit_miso(which, names, target, seed_offset, **kw):
        X, y = miso_dataset(records, which)
        try:
            return fit_mlp(X, y, feature_names=names, target_name=target,
                           seed=seed + seed_offset, **{**mlp_kwargs, **kw})
        except (NonFinite, ValueError) as exc:
            raise type(exc)(f"{which} fit failed: {exc}") from exc

    chfm = fit_miso(CHFM, _MISO_FEATURE_NAMES[CHFM](n_chwp), "chfhdr", 400)
    cwfm = fit_miso(CWFM, _MISO_FEATURE_NAMES[CWFM](n_cwp), "cwfhdr", 500)
    cwtm = fit_miso(CWTM, _MISO_FEATURE_NAMES[CWTM](n_ct), "cwshdr", 600)
    ch_models = []
    for i in range(n_ch):
        X, y = miso_dataset(records, "CH", ch_idx=i)
        try:
            ch_models.append(fit_mlp(X, y, feature_names=CH_FEATURE_NAMES,
                                     target_name=f"chkw[{i}]",
                                     seed=seed + 300 + i, **mlp_kwargs))
        except (NonFinite, ValueError) as exc:
            raise type(exc)(f"CH{i + 1} fit failed: {exc}") from exc
    return PlantModelGraph(chwp=chwp, cwp=cwp, ct=ct, chfm=chfm, cwfm=cwfm,
                           cwtm=cwtm, ch=tuple(ch_models))


def _eval_graph_total(graph, records):
    actual, predicted = [], []
    for r in records:
        bd = predict_graph(graph, r.control, r.weather, r.load_rt, r.chsp, r.onoff)
        actual.append(r.total_kw)
        predicted.append(bd.total_kw)
    return mape(actual, predicted)


def train_graph(
    store,
    folds: telemetry.FoldSplit,
    seed: int = 0,
    use_ransac: bool = True,
    enriched_mask: Optional[np.ndarray] = None,
    mlp_kwargs: Optional[dict] = None,
) -> tuple[PlantModelGraph, TrainReport]:
    """Cross-validate every module over the fold split, then train the final
    graph on the full cleaned corpus.

    The report has one row per equipment model (CHWP1..n, CWP1..n, CT1..n,
    CH1..n), per relationship model (CHFM/CWFM/CWTM), group averages, and a
    TOTAL row for the composed prediction.
    """
    records = telemetry.drop_dropouts(store)
    if not records:
        raise telemetry.InsufficientData("no usable records after cleaning")
    r0 = records[0]
    n_ch, n_ct = len(r0.on_ch), len(r0.on_ct)
    n_cwp, n_chwp = len(r0.on_cwp), len(r0.on_chwp)

    names_siso = ([f"CHWP{i+1}" for i in range(n_chwp)]
                  + [f"CWP{i+1}" for i in range(n_cwp)]
                  + [f"CT{i+1}" for i in range(n_ct)])
    fold_mapes: dict[str, list[float]] = {n: [] for n in names_siso}
    for n in (CHFM, CWFM, CWTM, *[f"CH{i+1}" for i in range(n_ch)], "TOTAL"):
        fold_mapes[n] = []

    for i in range(folds.k):
        train = telemetry.split_records(records, folds.train_days(i))
        test = telemetry.split_records(records, folds.test_days(i))
        g = _fit_graph(train, n_ch, n_ct, n_cwp, n_chwp, seed + 1000 * i,
                       use_ransac, mlp_kwargs)
        for kind, bank, count in (("chwp", g.chwp, n_chwp),
                                  ("cwp", g.cwp, n_cwp),
                                  ("ct", g.ct, n_ct)):
            for j in range(count):
                xs, ys = siso_dataset(test, kind, j)
                pred, _ = predict_poly(bank[j], xs)
                fold_mapes[f"{kind.upper()}{j+1}"].append(mape(ys, pred))
        for which, model in ((CHFM, g.chfm), (CWFM, g.cwfm), (CWTM, g.cwtm)):
            X, y = miso_dataset(test, which)
            fold_mapes[which].append(mape(y, model.predict(X)))
        for j in range(n_ch):
            X, y = miso_dataset(test, "CH", ch_idx=j)
            fold_mapes[f"CH{j+1}"].append(mape(y, g.ch[j].predict(X)))
        fold_mapes["TOTAL"].append(_eval_graph_total(g, test))

    rows: dict[str, dict] = {}

    def add_group(prefix, count):
        members = []
        for j in range(count):
            name = f"{prefix}{j+1}"
            rows[name] = {"fold_mapes": fold_mapes[name],
                          "mape": _avg(fold_mapes[name])}
            members.append(fold_mapes[name])
        avg_folds = [_avg(list(per_fold)) for per_fold in zip(*members)]
        rows[f"AVG_{prefix}"] = {"fold_mapes": avg_folds,
                                 "mape": _avg(avg_folds)}

    add_group("CHWP", n_chwp)
    add_group("CWP", n_cwp)
    add_group("CT", n_ct)
    for which in (CHFM, CWFM, CWTM):
        rows[which] = {"fold_mapes": fold_mapes[which],
                       "mape": _avg(fold_mapes[which])}
    add_group("CH", n_ch)
    rows["TOTAL"] = {"fold_mapes": fold_mapes["TOTAL"],
                     "mape": _avg(fold_mapes["TOTAL"])}

    final = _fit_graph(records, n_ch, n_ct, n_cwp, n_chwp, seed, use_ransac,
                       mlp_kwargs)
    final.quantity_bounds = derive_quantity_bounds(records, enriched_mask)
    return final, TrainReport(rows=rows)


# ---------------------------------------------------------------------------
# Model bundle persistence

BUNDLE_SCHEMA_VERSION = 1


def _poly_to_obj(m: PolyModel) -> dict:
    return {"coefficients": list(m.coefficients), "input_name": m.input_name,
            "output_name": m.output_name, "x_min": m.x_min, "x_max": m.x_max}


def _poly_from_obj(d: dict) -> PolyModel:
    return PolyModel(coefficients=tuple(d["coefficients"]),
                     input_name=d["input_name"], output_name=d["output_name"],
                     x_min=d["x_min"], x_max=d["x_max"])


def _mlp_to_obj(m: MlpModel) -> dict:
    return {
        "feature_names": list(m.feature_names),
        "x_mean": m.x_mean.tolist(), "x_scale": m.x_scale.tolist(),
        "y_mean": m.y_mean, "y_scale": m.y_scale,
        "w1": m.w1.tolist(), "b1": m.b1.tolist(),
        "w2": m.w2.tolist(), "b2": m.b2,
        "target_name": m.target_name,
    }


def _mlp_from_obj(d: dict) -> MlpModel:
    return MlpModel(
        feature_names=tuple(d["feature_names"]),
        x_mean=np.asarray(d["x_mean"], dtype=float),
        x_scale=np.asarray(d["x_scale"], dtype=float),
        y_mean=float(d["y_mean"]), y_scale=float(d["y_scale"]),
        w1=np.asarray(d["w1"], dtype=float),
        b1=np.asarray(d["b1"], dtype=float),
        w2=np.asarray(d["w2"], dtype=float),
        b2=float(d["b2"]),
        target_name=d["target_name"],
    )


def graph_to_dict(graph: PlantModelGraph) -> dict:
    return {
        "schema_version": BUNDLE_SCHEMA_VERSION,
        "chwp": [_poly_to_obj(m) for m in graph.chwp],
        "cwp": [_poly_to_obj(m) for m in graph.cwp],
        "ct": [_poly_to_obj(m) for m in graph.ct],
        "chfm": _mlp_to_obj(graph.chfm) if graph.chfm else None,
        "cwfm": _mlp_to_obj(graph.cwfm) if graph.cwfm else None,
        "cwtm": _mlp_to_obj(graph.cwtm) if graph.cwtm else None,
        "ch": [_mlp_to_obj(m) for m in graph.ch],
        "quantity_bounds": {k: list(v) for k, v in graph.quantity_bounds.items()}
        if graph.quantity_bounds else None,
    }


def graph_from_dict(d: dict) -> PlantModelGraph:
    if d.get("schema_version") != BUNDLE_SCHEMA_VERSION:
        raise ValueError(f"unsupported bundle schema: {d.get('schema_version')}")
    qb = d.get("quantity_bounds")
    return PlantModelGraph(
        chwp=tuple(_poly_from_obj(m) for m in d["chwp"]),
        cwp=tuple(_poly_from_obj(m) for m in d["cwp"]),
        ct=tuple(_poly_from_obj(m) for m in d["ct"]),
        chfm=_mlp_from_obj(d["chfm"]) if d.get("chfm") else None,
        cwfm=_mlp_from_obj(d["cwfm"]) if d.get("cwfm") else None,
        cwtm=_mlp_from_obj(d["cwtm"]) if d.get("cwtm") else None,
        ch=tuple(_mlp_from_obj(m) for m in d["ch"]),
        quantity_bounds={k: tuple(v) for k, v in qb.items()} if qb else None,
    )


def save_bundle(graph: PlantModelGraph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(graph_to_dict(graph), fh)
        fh.write("\n")


def load_bundle(path: str | Path) -> PlantModelGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return graph_from_dict(json.load(fh))
