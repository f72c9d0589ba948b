"""Telemetry persistence and evaluation plumbing.

Append-only JSON-lines record store, k-fold splitting by consecutive days,
RANSAC outlier filtering for SISO power curves, and MAPE.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .simplant import MINUTES_PER_DAY, SensorRecord

TELEMETRY_KEYS = (
    "ts", "db", "rh", "cwp_speed", "chwp_speed", "ct_speed",
    "on_ch", "on_ct", "on_cwp", "on_chwp",
    "chfhdr", "cwfhdr", "cwshdr", "chsp", "load_rt",
    "chkw", "ctkw", "cwpkw", "chwpkw", "total_kw",
)


class OutOfOrder(Exception):
    """Append with a timestamp at or before the last stored record."""


class InsufficientData(Exception):
    """Corpus too small for the requested split or fit."""


class Degenerate(Exception):
    """No usable model: rank-deficient data or no RANSAC consensus."""


class ZeroActual(Exception):
    """MAPE undefined: an actual value is zero."""


def record_to_obj(r: SensorRecord) -> dict:
    return {
        "ts": r.ts, "db": r.db, "rh": r.rh,
        "cwp_speed": r.cwp_speed, "chwp_speed": r.chwp_speed, "ct_speed": r.ct_speed,
        "on_ch": list(r.on_ch), "on_ct": list(r.on_ct),
        "on_cwp": list(r.on_cwp), "on_chwp": list(r.on_chwp),
        "chfhdr": r.chfhdr, "cwfhdr": r.cwfhdr, "cwshdr": r.cwshdr,
        "chsp": r.chsp, "load_rt": r.load_rt,
        "chkw": list(r.chkw), "ctkw": list(r.ctkw),
        "cwpkw": list(r.cwpkw), "chwpkw": list(r.chwpkw),
        "total_kw": r.total_kw,
    }


def record_from_obj(d: dict) -> SensorRecord:
    return SensorRecord(
        ts=int(d["ts"]), db=float(d["db"]), rh=float(d["rh"]),
        cwp_speed=float(d["cwp_speed"]), chwp_speed=float(d["chwp_speed"]),
        ct_speed=float(d["ct_speed"]),
        on_ch=tuple(int(v) for v in d["on_ch"]),
        on_ct=tuple(int(v) for v in d["on_ct"]),
        on_cwp=tuple(int(v) for v in d["on_cwp"]),
        on_chwp=tuple(int(v) for v in d["on_chwp"]),
        chfhdr=float(d["chfhdr"]), cwfhdr=float(d["cwfhdr"]),
        cwshdr=float(d["cwshdr"]), chsp=float(d["chsp"]),
        load_rt=float(d["load_rt"]),
        chkw=tuple(float(v) for v in d["chkw"]),
        ctkw=tuple(float(v) for v in d["ctkw"]),
        cwpkw=tuple(float(v) for v in d["cwpkw"]),
        chwpkw=tuple(float(v) for v in d["chwpkw"]),
        total_kw=float(d["total_kw"]),
    )


class RecordStore:
    """Append-only, file-backed sequence of sensor records.

    One JSON object per line; timestamps strictly increasing.  A full line is
    written and flushed per append so readers never see a partial record.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._records: list[SensorRecord] = []
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self._records.append(record_from_obj(json.loads(line)))
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def close(self) -> None:
        self._fh.close()

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[SensorRecord]:
        return iter(self._records)

    def __getitem__(self, idx):
        return self._records[idx]

    @property
    def records(self) -> tuple[SensorRecord, ...]:
        return tuple(self._records)

    @property
    def last_ts(self) -> Optional[int]:
        return self._records[-1].ts if self._records else None

    def append(self, record: SensorRecord) -> None:
        last = self.last_ts
        if last is not None and record.ts <= last:
            raise OutOfOrder(f"ts {record.ts} not after last stored ts {last}")
        self._fh.write(json.dumps(record_to_obj(record)) + "\n")
        self._fh.flush()
        self._records.append(record)

    def days(self) -> list[int]:
        return sorted({r.day for r in self._records})


@dataclass(frozen=True)
class FoldSplit:
    """k disjoint folds, each a run of consecutive day indices."""

    folds: tuple[tuple[int, ...], ...]

    @property
    def k(self) -> int:
        return len(self.folds)

    def test_days(self, i: int) -> set[int]:
        return set(self.folds[i])

    def train_days(self, i: int) -> set[int]:
        return {d for j, f in enumerate(self.folds) if j != i for d in f}


def kfold_by_days(store, k: int, days_per_fold: int) -> FoldSplit:
    """Split the corpus into k folds of consecutive whole days each."""
    if k < 1 or days_per_fold < 1:
        raise ValueError("k and days_per_fold must be positive")
    days = sorted({r.day for r in store})
    if len(days) < k * days_per_fold:
        raise InsufficientData(
            f"need {k * days_per_fold} days, corpus spans {len(days)}"
        )
    folds = tuple(
        tuple(days[i * days_per_fold:(i + 1) * days_per_fold]) for i in range(k)
    )
    return FoldSplit(folds)


def split_records(
    records: Sequence[SensorRecord], days: set[int]
) -> list[SensorRecord]:
    return [r for r in records if r.day in days]


@dataclass(frozen=True)
class RansacResult:
    inlier_mask: np.ndarray  # bool, per input point
    coefficients: np.ndarray  # ascending-order polynomial refit on inliers


def ransac_filter(
    xs: Sequence[float],
    ys: Sequence[float],
    model_degree: int = 3,
    inlier_tol: float = 1.0,
    iterations: int = 200,
    seed: int = 0,
) -> RansacResult:
    """Classic RANSAC over a polynomial model.

    Repeatedly fit an exact polynomial through a minimal sample
    (degree + 1 points), count points with |residual| <= inlier_tol, keep the
    consensus-maximal model, refit by least squares on its inliers, and
    return the mask of points within tolerance of the refit model.

    Raises Degenerate when no candidate reaches 50% consensus.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = xs.size
    if n <= model_degree + 1:
        raise ValueError("need more points than model_degree + 1")
    rng = np.random.default_rng(seed)
    best_mask: Optional[np.ndarray] = None
    best_count = 0
    m = model_degree + 1
    # Sample minimal sets over distinct x values (one random point per value):
    # telemetry is dominated by a fixed operating speed, and a plain point
    # sample would almost never contain degree+1 distinct abscissae.
    uniq, inverse = np.unique(xs, return_inverse=True)
    if uniq.size < m:
        raise Degenerate("fewer distinct x values than polynomial order + 1")
    by_value = [np.flatnonzero(inverse == i) for i in range(uniq.size)]
    for _ in range(iterations):
        chosen = rng.choice(uniq.size, size=m, replace=False)
        idx = np.array([by_value[c][rng.integers(by_value[c].size)]
                        for c in chosen])
        sx, sy = xs[idx], ys[idx]
        try:
            coeffs = np.polynomial.polynomial.polyfit(sx, sy, model_degree)
        except np.linalg.LinAlgError:
            continue
        resid = np.abs(np.polynomial.polynomial.polyval(xs, coeffs) - ys)
        mask = resid <= inlier_tol
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
    if best_mask is None or best_count < 0.5 * n:
        raise Degenerate(
            f"no candidate model reached 50% consensus ({best_count}/{n})"
        )
    refit = np.polynomial.polynomial.polyfit(xs[best_mask], ys[best_mask], model_degree)
    resid = np.abs(np.polynomial.polynomial.polyval(xs, refit) - ys)
    final_mask = resid <= inlier_tol
    return RansacResult(inlier_mask=final_mask, coefficients=refit)


def robust_inlier_tol(xs, ys, model_degree: int = 3, factor: float = 3.0) -> float:
    """Tolerance for ransac_filter: `factor` times the noise scale estimated
    from the median absolute residual of a global polynomial fit."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    coeffs = np.polynomial.polynomial.polyfit(xs, ys, model_degree)
    resid = np.polynomial.polynomial.polyval(xs, coeffs) - ys
    mad = np.median(np.abs(resid - np.median(resid)))
    sigma = 1.4826 * mad
    return factor * max(float(sigma), 1e-9)


def mape(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """Mean absolute percentage error, in percent."""
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape:
        raise ValueError("actual and predicted must have equal length")
    if a.size == 0:
        raise ValueError("mape of empty sequences is undefined")
    if np.any(a == 0):
        raise ZeroActual("actual values must be nonzero")
    return float(100.0 / a.size * np.sum(np.abs((a - p) / a)))


def drop_dropouts(records: Iterable[SensorRecord]) -> list[SensorRecord]:
    """Remove records with a zero power reading on equipment flagged on."""
    kept = []
    for r in records:
        ok = True
        for powers, flags in ((r.chkw, r.on_ch), (r.ctkw, r.on_ct),
                              (r.cwpkw, r.on_cwp), (r.chwpkw, r.on_chwp)):
            if any(o and p <= 0 for p, o in zip(powers, flags)):
                ok = False
                break
        if ok:
            kept.append(r)
    return kept
