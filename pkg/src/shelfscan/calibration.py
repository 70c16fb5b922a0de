"""Detector scoring against reviewer truth, and threshold calibration.

Stops and visits are compared per (shelf, timestamp) cell, confusion
counts are pooled over every trajectory in the dataset (micro-averaging),
and the three thresholds are chosen by exhaustive grid search on the
pooled F1.

The expensive part of evaluating a grid point is the geometry, and the
geometry does not depend on the thresholds. Each trajectory is therefore
reduced once to its per-sample candidate/distance/speed streams, after
which every grid point costs a linear pass; the time axis of the grid is
additionally swept in bulk since loosening only the minimum duration
keeps the same runs and merely admits more of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .detector import DURATION_TOL, StopMatrix, StopParams, detect_stops, gaze_stream
from .errors import (
    AxisMismatch,
    DegenerateSplit,
    EmptyDataset,
    EmptyGrid,
    FractionOutOfRange,
    FrameMismatch,
    ValidationError,
)
from .labeling import VisitMatrix
from .layout import StoreLayout


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if self.tp < 0 or self.fp < 0 or self.fn < 0:
            raise ValidationError(f"confusion counts must be non-negative, got {self}")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts


@dataclass(frozen=True)
class ParamGrid:
    """Inclusive (min, max, step) ranges for the three thresholds."""

    t_b: tuple[float, float, float] = (0.5, 4.0, 0.1)
    delta_b: tuple[float, float, float] = (0.3, 3.0, 0.05)
    v_b: tuple[float, float, float] = (0.1, 1.5, 0.01)

    def __post_init__(self):
        for name, (lo, hi, step) in (("t_b", self.t_b), ("delta_b", self.delta_b), ("v_b", self.v_b)):
            if lo > hi or step <= 0 or lo <= 0:
                raise ValidationError(f"bad {name} range (min {lo}, max {hi}, step {step})")

    @staticmethod
    def _axis(rng) -> np.ndarray:
        lo, hi, step = rng
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return lo + np.arange(n) * step

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self._axis(self.t_b), self._axis(self.delta_b), self._axis(self.v_b)


@dataclass(frozen=True)
class CalibrationResult:
    best_params: StopParams
    best_f1: float
    metrics: MetricsReport
    grid_axes: tuple = field(repr=False, default=())
    f1_table: np.ndarray | None = field(repr=False, default=None)         # (nT, nD, nV)
    count_tables: tuple | None = field(repr=False, default=None)          # (tp, fp, fn) arrays

    def score_rows(self):
        """Yield (t_b, delta_b, v_b, tp, fp, fn, precision, recall, f1) per grid point."""
        if self.f1_table is None:
            return
        t_axis, d_axis, v_axis = self.grid_axes
        tp, fp, fn = self.count_tables
        for ti, tv in enumerate(t_axis):
            for di, dv in enumerate(d_axis):
                for vi, vv in enumerate(v_axis):
                    counts = ConfusionCounts(int(tp[ti, di, vi]), int(fp[ti, di, vi]), int(fn[ti, di, vi]))
                    rep = precision_recall_f1(counts)
                    yield (float(tv), float(dv), float(vv), counts.tp, counts.fp, counts.fn,
                           rep.precision, rep.recall, rep.f1)


@dataclass(frozen=True)
class EvalReport:
    protocol: str             # "same-store" | "cross-store"
    p: float
    repeats: int
    scores: tuple[float, ...]
    mean: float
    stderr: float
    seed: int
    params_per_repeat: tuple[StopParams, ...] = ()

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "p": self.p,
            "repeats": self.repeats,
            "scores": list(self.scores),
            "mean": self.mean,
            "stderr": self.stderr,
            "seed": self.seed,
            "params_per_repeat": [
                {"t_b": pp.t_b, "delta_b": pp.delta_b, "v_b": pp.v_b} for pp in self.params_per_repeat
            ],
        }


def confusion_counts(stops: StopMatrix, visits: VisitMatrix) -> ConfusionCounts:
    """Pool TP/FP/FN over every (shelf, timestamp) cell of one trajectory."""
    if stops.trajectory_id != visits.trajectory_id:
        raise AxisMismatch(
            f"matrices describe different trajectories: {stops.trajectory_id!r} vs {visits.trajectory_id!r}"
        )
    if stops.values.shape != visits.values.shape:
        raise AxisMismatch(
            f"matrix shapes differ: {stops.values.shape} vs {visits.values.shape}"
        )
    if not np.allclose(stops.times, visits.times, atol=1e-9):
        raise AxisMismatch("matrices have different sample times")
    s = stops.values
    v = visits.values
    tp = int(np.count_nonzero(s & v))
    return ConfusionCounts(tp=tp, fp=int(np.count_nonzero(s)) - tp, fn=int(np.count_nonzero(v)) - tp)


def confusion_counts_total(pairs) -> ConfusionCounts:
    """Sum confusion counts over (StopMatrix, VisitMatrix) pairs."""
    total = ConfusionCounts()
    for s, v in pairs:
        total = total + confusion_counts(s, v)
    return total


def precision_recall_f1(counts: ConfusionCounts) -> MetricsReport:
    """Precision, recall and F1 with the usual zero-denominator conventions.

    Empty prediction sets give precision 0, empty truth sets give recall
    0, and F1 is 0 whenever precision + recall is.
    """
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    p = tp / (tp + fp) if tp + fp > 0 else 0.0
    r = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return MetricsReport(precision=p, recall=r, f1=f1, counts=counts)


def score_dataset(dataset, layout: StoreLayout, params: StopParams) -> MetricsReport:
    """Run the detector over (track, visits) pairs and score it."""
    pairs = []
    for track, visits in dataset:
        _, stops = detect_stops(track, layout, params)
        pairs.append((stops, visits))
    return precision_recall_f1(confusion_counts_total(pairs))


@dataclass(frozen=True)
class _Prepared:
    """Threshold-independent reduction of one (track, visits) pair."""

    times: np.ndarray
    candidates: np.ndarray      # (k,) 0-based shelf index, -1 none
    lams: np.ndarray            # (k,) nearest-hit distance
    speeds: np.ndarray          # (k,)
    visit_at_candidate: np.ndarray  # (k,) bool, visit truth at the candidate shelf
    visit_ones: int             # total truth ones across all shelves


def _prepare(dataset, layout: StoreLayout, cutoff: float) -> list[_Prepared]:
    prepared = []
    for track, visits in dataset:
        if track.store_id != layout.store_id:
            raise FrameMismatch(
                f"track belongs to store {track.store_id!r}, layout to {layout.store_id!r}"
            )
        if track.trajectory_id != visits.trajectory_id:
            raise AxisMismatch(
                f"visit matrix is for {visits.trajectory_id!r}, track is {track.trajectory_id!r}"
            )
        if visits.n_shelves != layout.n_shelves or len(visits) != len(track):
            raise AxisMismatch(
                f"visit matrix shape {visits.values.shape} does not match "
                f"{layout.n_shelves} shelves x {len(track)} samples"
            )
        candidates, lams = gaze_stream(track.positions, track.normals, layout, cutoff=cutoff)
        k = np.arange(len(track))
        vac = np.zeros(len(track), dtype=bool)
        seen = candidates >= 0
        vac[seen] = visits.values[candidates[seen], k[seen]]
        prepared.append(_Prepared(
            times=track.times,
            candidates=candidates,
            lams=lams,
            speeds=track.speeds,
            visit_at_candidate=vac,
            visit_ones=int(np.count_nonzero(visits.values)),
        ))
    return prepared


def _run_summary(prep: _Prepared, delta_b: float, v_b: float):
    """Length, duration and truth overlap of every constant-candidate run."""
    cond = (prep.candidates >= 0) & (prep.lams <= delta_b) & (prep.speeds <= v_b)
    key = np.where(cond, prep.candidates, -1)
    if len(key) == 0:
        empty = np.empty(0)
        return empty, empty.astype(int), empty.astype(int)
    breaks = np.flatnonzero(key[1:] != key[:-1]) + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [len(key)]])
    keep = key[starts] >= 0
    s = starts[keep]
    e = ends[keep] - 1
    durations = prep.times[e] - prep.times[s]
    lengths = e - s + 1
    cum = np.concatenate([[0], np.cumsum(prep.visit_at_candidate)])
    overlap = cum[e + 1] - cum[s]
    return durations, lengths, overlap


def _sweep_counts(prepared, t_axis, d_axis, v_axis):
    """Pooled tp / predicted-ones per grid point; shape (nT, nD, nV)."""
    n_t, n_d, n_v = len(t_axis), len(d_axis), len(v_axis)
    tp = np.zeros((n_t, n_d, n_v), dtype=np.int64)
    s_ones = np.zeros((n_t, n_d, n_v), dtype=np.int64)
    v_ones = 0
    for prep in prepared:
        v_ones += prep.visit_ones
        for di, dv in enumerate(d_axis):
            for vi, vv in enumerate(v_axis):
                durations, lengths, overlap = _run_summary(prep, dv, vv)
                if len(durations) == 0:
                    continue
                # a run qualifies at t_axis[i] exactly when t_axis[i] <= duration + tol,
                # the same float predicate the detector applies
                upto = np.searchsorted(t_axis, durations + DURATION_TOL, side="right")
                cm = np.bincount(upto, weights=lengths, minlength=n_t + 1)
                cv = np.bincount(upto, weights=overlap, minlength=n_t + 1)
                s_ones[:, di, vi] += np.cumsum(cm[:0:-1])[::-1].astype(np.int64)
                tp[:, di, vi] += np.cumsum(cv[:0:-1])[::-1].astype(np.int64)
    return tp, s_ones, v_ones


def _f1_table(tp, s_ones, v_ones):
    fp = s_ones - tp
    fn = v_ones - tp
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
        r = np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), 0.0)
        f1 = np.where(p + r > 0, 2.0 * p * r / np.maximum(p + r, 1e-300), 0.0)
    return f1, fp, fn


def counts_at(prepared, params: StopParams) -> ConfusionCounts:
    """Pooled confusion counts of prepared trajectories at one grid point."""
    tp = fp = fn = 0
    for prep in prepared:
        durations, lengths, overlap = _run_summary(prep, params.delta_b, params.v_b)
        qual = durations + DURATION_TOL >= params.t_b
        run_tp = int(overlap[qual].sum())
        tp += run_tp
        fp += int(lengths[qual].sum()) - run_tp
        fn += prep.visit_ones - run_tp
    return ConfusionCounts(tp=tp, fp=fp, fn=fn)


def calibrate(dataset, layout: StoreLayout, grid: ParamGrid, refine: bool = False) -> CalibrationResult:
    """Exhaustive grid search for the F1-maximizing thresholds.

    Ties are broken toward the lexicographically smallest
    (t_b, delta_b, v_b). With refine=True a coarse pass (every 4th value
    per axis) locates a neighborhood that is then searched at full
    resolution; cheaper, but no longer guaranteed exhaustive.
    """
    dataset = list(dataset)
    if not dataset:
        raise EmptyDataset("calibration requires at least one trajectory")
    t_axis, d_axis, v_axis = grid.axes()
    if min(len(t_axis), len(d_axis), len(v_axis)) == 0:
        raise EmptyGrid("parameter grid has no points")
    prepared = _prepare(dataset, layout, cutoff=float(d_axis[-1]))
    if refine:
        return _calibrate_refined(prepared, t_axis, d_axis, v_axis)
    return _calibrate_prepared(prepared, t_axis, d_axis, v_axis)


def _calibrate_prepared(prepared, t_axis, d_axis, v_axis) -> CalibrationResult:
    tp, s_ones, v_ones = _sweep_counts(prepared, t_axis, d_axis, v_axis)
    f1, fp, fn = _f1_table(tp, s_ones, v_ones)
    flat = int(np.argmax(f1))  # C order: first max is lexicographically smallest point
    ti, di, vi = np.unravel_index(flat, f1.shape)
    best = StopParams(t_b=float(t_axis[ti]), delta_b=float(d_axis[di]), v_b=float(v_axis[vi]))
    counts = ConfusionCounts(int(tp[ti, di, vi]), int(fp[ti, di, vi]), int(fn[ti, di, vi]))
    return CalibrationResult(
        best_params=best,
        best_f1=float(f1[ti, di, vi]),
        metrics=precision_recall_f1(counts),
        grid_axes=(t_axis, d_axis, v_axis),
        f1_table=f1,
        count_tables=(tp, fp, fn),
    )


def _coarse(axis: np.ndarray, stride: int = 4) -> np.ndarray:
    idx = sorted(set(range(0, len(axis), stride)) | {len(axis) - 1})
    return axis[list(idx)]


def _calibrate_refined(prepared, t_axis, d_axis, v_axis) -> CalibrationResult:
    coarse = _calibrate_prepared(prepared, _coarse(t_axis), _coarse(d_axis), _coarse(v_axis))
    best = coarse.best_params

    def window(axis, center, stride=4):
        i = int(np.argmin(np.abs(axis - center)))
        return axis[max(i - stride, 0):min(i + stride + 1, len(axis))]

    return _calibrate_prepared(
        prepared,
        window(t_axis, best.t_b),
        window(d_axis, best.delta_b),
        window(v_axis, best.v_b),
    )


def _stderr(scores: np.ndarray) -> float:
    if len(scores) < 2:
        return 0.0
    return float(np.std(scores, ddof=1) / math.sqrt(len(scores)))


def same_store_eval(dataset, layout: StoreLayout, grid: ParamGrid, p: float,
                    repeats: int, seed: int) -> EvalReport:
    """Calibrate on a random fraction p, score on the held-out remainder.

    Each repeat draws a fresh random calibration subset of ceil(p*N)
    trajectories; reported scores are in repeat order and reproducible
    from the seed.
    """
    if not 0.0 < p < 1.0:
        raise FractionOutOfRange(f"p must lie strictly between 0 and 1, got {p}")
    if repeats < 1:
        raise ValidationError(f"repeats must be >= 1, got {repeats}")
    dataset = list(dataset)
    n = len(dataset)
    if n == 0:
        raise EmptyDataset("evaluation requires at least one trajectory")
    t_axis, d_axis, v_axis = grid.axes()
    prepared = _prepare(dataset, layout, cutoff=float(d_axis[-1]))
    n_cal = math.ceil(p * n)
    if n_cal == 0 or n_cal == n:
        raise DegenerateSplit(f"p={p} with {n} trajectories leaves an empty side")
    rng = np.random.default_rng(seed)
    scores, chosen = [], []
    for _ in range(repeats):
        perm = rng.permutation(n)
        cal = [prepared[i] for i in perm[:n_cal]]
        held = [prepared[i] for i in perm[n_cal:]]
        result = _calibrate_prepared(cal, t_axis, d_axis, v_axis)
        report = precision_recall_f1(counts_at(held, result.best_params))
        scores.append(report.f1)
        chosen.append(result.best_params)
    scores_arr = np.array(scores)
    return EvalReport(
        protocol="same-store",
        p=p,
        repeats=repeats,
        scores=tuple(float(s) for s in scores),
        mean=float(scores_arr.mean()),
        stderr=_stderr(scores_arr),
        seed=seed,
        params_per_repeat=tuple(chosen),
    )


def cross_store_eval(calib_dataset, calib_layout: StoreLayout,
                     eval_dataset, eval_layout: StoreLayout,
                     grid: ParamGrid, p: float = 1.0, seed: int = 0,
                     repeats: int = 1) -> EvalReport:
    """Calibrate on a fraction of one store, score on all of another."""
    if not 0.0 < p <= 1.0:
        raise FractionOutOfRange(f"p must lie in (0, 1], got {p}")
    if repeats < 1:
        raise ValidationError(f"repeats must be >= 1, got {repeats}")
    calib_dataset = list(calib_dataset)
    eval_dataset = list(eval_dataset)
    if not calib_dataset or not eval_dataset:
        raise EmptyDataset("both calibration and evaluation datasets must be non-empty")
    t_axis, d_axis, v_axis = grid.axes()
    cal_prepared = _prepare(calib_dataset, calib_layout, cutoff=float(d_axis[-1]))
    eval_prepared = _prepare(eval_dataset, eval_layout, cutoff=float(d_axis[-1]))
    n = len(cal_prepared)
    n_cal = math.ceil(p * n)
    if n_cal == 0:
        raise DegenerateSplit(f"p={p} with {n} trajectories leaves nothing to calibrate on")
    rng = np.random.default_rng(seed)
    scores, chosen = [], []
    for _ in range(repeats):
        if n_cal == n:
            cal = cal_prepared
        else:
            perm = rng.permutation(n)
            cal = [cal_prepared[i] for i in perm[:n_cal]]
        result = _calibrate_prepared(cal, t_axis, d_axis, v_axis)
        report = precision_recall_f1(counts_at(eval_prepared, result.best_params))
        scores.append(report.f1)
        chosen.append(result.best_params)
    scores_arr = np.array(scores)
    return EvalReport(
        protocol="cross-store",
        p=p,
        repeats=repeats,
        scores=tuple(float(s) for s in scores),
        mean=float(scores_arr.mean()),
        stderr=_stderr(scores_arr),
        seed=seed,
        params_per_repeat=tuple(chosen),
    )
