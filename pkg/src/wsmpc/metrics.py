"""Evaluation metrics and sweep summaries."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import EmptyMask, GridMismatch, ZeroReference

SUMMARY_COLUMNS = ["method", "sweep_value", "metric", "median", "q25", "q75", "success_rate",
                   "n_realizations"]


def _grid_check(truth, pred):
    if truth.states.shape != pred.states.shape or not np.allclose(
            truth.times, pred.times, rtol=0, atol=1e-9 * max(truth.dt, 1e-300)):
        raise GridMismatch("truth and prediction are not sampled on the same grid")


def prediction_horizon(truth, pred, eps: float = 3.0) -> float:
    """Time from the start until the Euclidean error first reaches ``eps``.

    Non-finite predictions count as exceeding the tolerance. Returns the full duration when
    the tolerance is never reached.
    """
    _grid_check(truth, pred)
    err = np.sqrt(np.sum((truth.states - pred.states) ** 2, axis=1))
    hit = np.flatnonzero(~(err < eps))
    t0 = truth.times[0]
    if hit.size == 0:
        return float(truth.times[-1] - t0)
    return float(truth.times[hit[0]] - t0)


def avg_rel_error(x_traj, r_traj) -> float:
    """``mean |x - r|`` divided by ``mean |r|`` over the window (all entries pooled)."""
    x = np.asarray(x_traj, dtype=float)
    r = np.asarray(r_traj, dtype=float)
    if x.shape != r.shape:
        raise GridMismatch(f"trajectory {x.shape} and reference {r.shape} differ in shape")
    scale = np.mean(np.abs(r))
    if scale == 0:
        raise ZeroReference("reference is identically zero")
    return float(np.mean(np.abs(x - r)) / scale)


def tracking_success(rel_error: float, threshold: float = 0.03) -> bool:
    return bool(np.isfinite(rel_error) and rel_error < threshold)


def mse_outside_obstacle(traj, ref, o, d_min: float) -> float:
    """Mean squared 3-D position error over samples whose reference is farther than ``d_min``
    from the obstacle centre ``o``."""
    traj = np.asarray(traj, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if traj.shape != ref.shape:
        raise GridMismatch("trajectory and reference differ in shape")
    mask = np.linalg.norm(ref - np.asarray(o, dtype=float), axis=1) > d_min
    if not mask.any():
        raise EmptyMask("every reference point lies inside the obstacle region")
    return float(np.mean(np.sum((traj[mask] - ref[mask]) ** 2, axis=1)))


def min_clearance(traj, o, obstacle_radius: float, arm_L: float) -> float:
    """Smallest gap between obstacle surface and vehicle extent; negative means contact."""
    traj = np.atleast_2d(np.asarray(traj, dtype=float))
    if traj.shape[0] == 0:
        raise ValueError("empty trajectory")
    d = np.linalg.norm(traj - np.asarray(o, dtype=float), axis=1)
    return float(np.min(d) - obstacle_radius - arm_L)


def clearance_in_window(clearance: float, lo: float = 0.10, hi: float = 0.20) -> bool:
    return bool(lo <= clearance <= hi)


@dataclass(frozen=True)
class SweepSummary:
    method: str
    sweep_value: float
    metric: str
    median: float
    q25: float
    q75: float
    success_rate: float
    n_realizations: int

    def row(self) -> list:
        return [self.method, repr(float(self.sweep_value)), self.metric, repr(self.median),
                repr(self.q25), repr(self.q75), repr(self.success_rate), self.n_realizations]


def quartiles(values) -> tuple:
    """``(q25, median, q75)`` with the Hazen plotting-position rule."""
    v = np.asarray(values, dtype=float)
    q = np.percentile(v, [25.0, 50.0, 75.0], method="hazen")
    return float(q[0]), float(q[1]), float(q[2])


def summarize(values, method: str = "", sweep_value: float = np.nan, metric: str = "",
              success: Optional[Iterable[bool]] = None) -> SweepSummary:
    """Median and Hazen quartiles over realizations, with the fraction of successes.

    Non-finite values (failed runs) are kept and sort as +inf, i.e. as worst cases.
    """
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise ValueError("summarize needs at least one value")
    v = np.where(np.isnan(v), np.inf, v)
    q25, med, q75 = quartiles(np.sort(v)) if np.all(np.isfinite(v)) else _quartiles_inf(v)
    rate = float(np.mean(list(success))) if success is not None else float("nan")
    return SweepSummary(method, float(sweep_value), metric, med, q25, q75, rate, int(v.size))


def _quartiles_inf(v):
    """Hazen quartiles when some entries are infinite (interpolating with inf gives inf)."""
    s = np.sort(v)
    n = s.size
    out = []
    for p in (0.25, 0.5, 0.75):
        h = n * p + 0.5
        lo = int(np.clip(np.floor(h), 1, n))
        hi = int(np.clip(lo + 1, 1, n))
        frac = h - np.floor(h) if 1 <= h < n else 0.0
        a, b = s[lo - 1], s[hi - 1]
        out.append(float(a if frac == 0 or a == b else (np.inf if np.isinf(b) else a + frac * (b - a))))
    return out[0], out[1], out[2]


def write_summary_csv(rows: Iterable[SweepSummary], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow(r.row())
