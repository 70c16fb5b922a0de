"""Shelf stop detection from kinematic tracks.

Per sample, the shopper's body-orientation ray is cast against every shelf
face and obstacle; the nearest hit, if it is an interactive face, names
the candidate shelf and the hit distance. A stop on shelf j is a maximal
run of consecutive samples during which the candidate stays j, the hit
distance stays within delta_b, and the speed stays within v_b, lasting at
least t_b seconds. The detector emits stop events plus the per-timestamp
Boolean matrix downstream metrics count on.

Numeric conventions (shared by the brute-force cross-check in oracle.py):
- a hit counts only if its ray parameter exceeds EPS_LAMBDA, so an origin
  sitting exactly on a segment sees no self-hit;
- a hit may miss the segment ends by up to EPS_MEMBER meters;
- among hits within TIE_TOL of the minimum distance, the lowest segment
  index wins, so shelf faces beat equidistant obstacles;
- an edge-on (collinear) segment counts only when it lies fully ahead of
  the shopper, at the distance of its near endpoint; an edge-on segment
  containing the origin is ignored, since no positive minimum distance
  exists on it.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from multiprocessing import get_context

import numpy as np

from .errors import FrameMismatch, ValidationError
from .kinematics import KinematicTrack
from .layout import Segment2D, StoreLayout, all_segments

EPS_LAMBDA = 1e-9
EPS_MEMBER = 1e-9
TIE_TOL = 1e-9
DURATION_TOL = 1e-9

# target element count for one (samples x segments) block; bounds temp memory
_BLOCK_ELEMS = 2_000_000


@dataclass(frozen=True)
class StopParams:
    """The three detector thresholds.

    t_b: minimum browsing time, seconds
    delta_b: maximum distance to the shelf, meters
    v_b: maximum browsing speed, m/s
    """

    t_b: float
    delta_b: float
    v_b: float

    def __post_init__(self):
        if not (self.t_b > 0 and self.delta_b > 0 and self.v_b > 0):
            raise ValidationError(f"stop parameters must all be positive, got {self}")


@dataclass(frozen=True)
class GazeSample:
    """Candidate shelf for one sample, or nothing if the view is blocked."""

    candidate: int | None = None
    lam: float | None = None

    def __post_init__(self):
        if (self.candidate is None) != (self.lam is None):
            raise ValidationError("candidate and lam must be present together")
        if self.lam is not None and not self.lam > 0:
            raise ValidationError(f"lam must be positive, got {self.lam}")


@dataclass(frozen=True)
class StopEvent:
    trajectory_id: str
    shelf_id: int
    t_s: float
    t_f: float
    duration: float
    min_lambda: float
    mean_speed: float

    def __post_init__(self):
        if not self.t_s < self.t_f:
            raise ValidationError(f"stop event must span time, got [{self.t_s}, {self.t_f}]")


@dataclass(frozen=True)
class StopMatrix:
    """Per (shelf, sample) stop Booleans for one trajectory."""

    trajectory_id: str
    times: np.ndarray    # (k,)
    values: np.ndarray   # (n_shelves, k) bool

    @property
    def n_shelves(self) -> int:
        return self.values.shape[0]

    def __len__(self):
        return self.values.shape[1]


def ray_segment_intersection(origin, direction, seg: Segment2D) -> float | None:
    """Distance along a unit-direction ray to a segment, or None.

    Returns the smallest ray parameter greater than EPS_LAMBDA at which
    the ray meets the segment (endpoints inclusive, within EPS_MEMBER).
    See the module docstring for the edge-on conventions.
    """
    ox, oy = float(origin[0]), float(origin[1])
    dx, dy = float(direction[0]), float(direction[1])
    if abs(math.hypot(dx, dy) - 1.0) > 1e-9:
        raise ValidationError(f"direction {direction} is not a unit vector")
    ax, ay = seg.a
    sx, sy = seg.vector
    qpx = ax - ox
    qpy = ay - oy
    denom = dx * sy - dy * sx
    if denom == 0.0:
        if qpx * sy - qpy * sx != 0.0:
            return None  # parallel, never meets
        # edge-on: project both endpoints onto the ray
        la = qpx * dx + qpy * dy
        lb = la + (sx * dx + sy * dy)
        lo = min(la, lb)
        return lo if lo > EPS_LAMBDA else None
    lam = (qpx * sy - qpy * sx) / denom
    u = (qpx * dy - qpy * dx) / denom
    eps_u = EPS_MEMBER / seg.length
    if lam > EPS_LAMBDA and -eps_u <= u <= 1.0 + eps_u:
        return lam
    return None


def candidate_shelf(origin, heading, layout: StoreLayout) -> GazeSample:
    """Cast the orientation ray and keep the nearest hit if it is a shelf.

    Hitting an obstacle first (or nothing at all) yields no candidate.
    """
    lams = [ray_segment_intersection(origin, heading, seg) for _, seg, _ in all_segments(layout)]
    hits = [lam for lam in lams if lam is not None]
    if not hits:
        return GazeSample()
    best = min(hits)
    for idx, lam in enumerate(lams):
        if lam is not None and lam <= best + TIE_TOL:
            if idx < layout.n_shelves:
                return GazeSample(candidate=idx + 1, lam=lam)
            return GazeSample()
    raise AssertionError("unreachable")  # pragma: no cover


def _solve_block(ox, oy, dx, dy, pts, seg_idx):
    """Nearest-hit distance and winning segment for a block of rays.

    pts is the (m, 2, 2) endpoint array of the candidate segments and
    seg_idx their global 0-based indices, ascending. Returns (lam_min,
    winner) where winner is -1 for rays that hit nothing.
    """
    ax = pts[:, 0, 0]
    ay = pts[:, 0, 1]
    sx = pts[:, 1, 0] - ax
    sy = pts[:, 1, 1] - ay
    eps_u = EPS_MEMBER / np.hypot(sx, sy)

    qpx = ax[None, :] - ox[:, None]
    qpy = ay[None, :] - oy[:, None]
    denom = dx[:, None] * sy[None, :] - dy[:, None] * sx[None, :]
    tnum = qpx * sy[None, :] - qpy * sx[None, :]
    unum = qpx * dy[:, None] - qpy * dx[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = tnum / denom
        u = unum / denom
    valid = (denom != 0.0) & (lam > EPS_LAMBDA) & (u >= -eps_u[None, :]) & (u <= 1.0 + eps_u[None, :])

    collinear = (denom == 0.0) & (tnum == 0.0)
    if collinear.any():
        for i, j in zip(*np.nonzero(collinear)):
            la = qpx[i, j] * dx[i] + qpy[i, j] * dy[i]
            lb = la + (sx[j] * dx[i] + sy[j] * dy[i])
            lo = min(la, lb)
            if lo > EPS_LAMBDA:
                lam[i, j] = lo
                valid[i, j] = True

    lam = np.where(valid, lam, np.inf)
    lam_min = lam.min(axis=1)
    first = (lam <= lam_min[:, None] + TIE_TOL).argmax(axis=1)
    winner = np.where(np.isfinite(lam_min), seg_idx[first], -1)
    return lam_min, winner


class _SegmentGrid:
    """Coarse spatial hash used to cull segments beyond a distance cutoff.

    Each cell lists every segment whose inflated bounding box touches it,
    so a ray origin inside the cell sees a superset of all segments within
    `cutoff` of it; origins outside the grid are farther than the cutoff
    from every segment.
    """

    def __init__(self, layout: StoreLayout, cutoff: float):
        pts = layout.segment_points
        pad = cutoff + 0.01
        self.x0 = float(pts[:, :, 0].min() - pad)
        self.y0 = float(pts[:, :, 1].min() - pad)
        x1 = float(pts[:, :, 0].max() + pad)
        y1 = float(pts[:, :, 1].max() + pad)
        span = max(x1 - self.x0, y1 - self.y0, 1e-6)
        self.cell = max(cutoff, 0.5, span / 64.0)
        self.nx = int((x1 - self.x0) / self.cell) + 1
        self.ny = int((y1 - self.y0) / self.cell) + 1
        buckets: dict[int, list[int]] = {}
        for m in range(len(pts)):
            sx0 = min(pts[m, 0, 0], pts[m, 1, 0]) - pad
            sx1 = max(pts[m, 0, 0], pts[m, 1, 0]) + pad
            sy0 = min(pts[m, 0, 1], pts[m, 1, 1]) - pad
            sy1 = max(pts[m, 0, 1], pts[m, 1, 1]) + pad
            ix0 = max(int((sx0 - self.x0) / self.cell), 0)
            ix1 = min(int((sx1 - self.x0) / self.cell), self.nx - 1)
            iy0 = max(int((sy0 - self.y0) / self.cell), 0)
            iy1 = min(int((sy1 - self.y0) / self.cell), self.ny - 1)
            for iy in range(iy0, iy1 + 1):
                for ix in range(ix0, ix1 + 1):
                    buckets.setdefault(iy * self.nx + ix, []).append(m)
        self.buckets = {key: np.array(idx, dtype=np.intp) for key, idx in buckets.items()}

    def keys_for(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        ix = np.floor((x - self.x0) / self.cell).astype(np.int64)
        iy = np.floor((y - self.y0) / self.cell).astype(np.int64)
        inside = (ix >= 0) & (ix < self.nx) & (iy >= 0) & (iy < self.ny)
        return np.where(inside, iy * self.nx + ix, -1)


def gaze_stream(positions, normals, layout: StoreLayout, cutoff: float | None = None):
    """Candidate shelf and hit distance for every sample of a track.

    Returns (candidates, lams): candidates holds 0-based shelf indices
    with -1 where there is no candidate; lams holds the nearest-hit
    distance (inf where nothing was hit).

    With a finite `cutoff`, rays whose nearest hit would be farther than
    the cutoff report no candidate; callers that only ever compare the
    distance against thresholds <= cutoff get identical downstream
    results at a fraction of the cost.
    """
    positions = np.asarray(positions, dtype=float)
    normals = np.asarray(normals, dtype=float)
    n = len(positions)
    pts = layout.segment_points
    m = len(pts)
    seg_idx = np.arange(m, dtype=np.intp)
    lam_out = np.full(n, np.inf)
    win_out = np.full(n, -1, dtype=np.intp)

    if n == 0:
        return win_out.astype(np.int32), lam_out
    if cutoff is None or not np.isfinite(cutoff):
        rows = max(_BLOCK_ELEMS // max(m, 1), 1)
        for lo in range(0, n, rows):
            hi = min(lo + rows, n)
            lam_out[lo:hi], win_out[lo:hi] = _solve_block(
                positions[lo:hi, 0], positions[lo:hi, 1],
                normals[lo:hi, 0], normals[lo:hi, 1], pts, seg_idx,
            )
    else:
        grid = _segment_grid(layout, cutoff)
        keys = grid.keys_for(positions[:, 0], positions[:, 1])
        order = np.argsort(keys, kind="stable")
        sorted_keys = keys[order]
        group_starts = np.flatnonzero(np.diff(sorted_keys)) + 1
        group_starts = np.concatenate([[0], group_starts, [n]])
        for gi in range(len(group_starts) - 1):
            sel = order[group_starts[gi]:group_starts[gi + 1]]
            key = int(sorted_keys[group_starts[gi]])
            sub = grid.buckets.get(key)
            if key < 0 or sub is None:
                continue  # nothing within the cutoff
            rows = max(_BLOCK_ELEMS // max(len(sub), 1), 1)
            for lo in range(0, len(sel), rows):
                part = sel[lo:lo + rows]
                lam, win = _solve_block(
                    positions[part, 0], positions[part, 1],
                    normals[part, 0], normals[part, 1], pts[sub], sub,
                )
                lam_out[part] = lam
                win_out[part] = win
        beyond = lam_out > cutoff
        lam_out[beyond] = np.inf
        win_out[beyond] = -1

    candidates = np.where((win_out >= 0) & (win_out < layout.n_shelves), win_out, -1).astype(np.int32)
    return candidates, lam_out


@lru_cache(maxsize=32)
def _segment_grid(layout: StoreLayout, cutoff: float) -> _SegmentGrid:
    return _SegmentGrid(layout, cutoff)


def condition_runs(cond: np.ndarray, candidates: np.ndarray):
    """Maximal runs of consecutive True samples with a constant candidate.

    Yields (start, end, shelf0) with inclusive ends; shelf0 is 0-based.
    """
    key = np.where(cond, candidates, -1)
    if len(key) == 0:
        return
    breaks = np.flatnonzero(key[1:] != key[:-1]) + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [len(key)]])
    for s, e in zip(starts, ends):
        if key[s] >= 0:
            yield int(s), int(e) - 1, int(key[s])


def detect_stops(track: KinematicTrack, layout: StoreLayout, params: StopParams):
    """Find all shelf stops in one track.

    Returns (events, matrix): the chronological StopEvents and the
    (n_shelves, n_samples) Boolean StopMatrix marking every sample of
    every qualifying run.
    """
    if track.store_id != layout.store_id:
        raise FrameMismatch(
            f"track belongs to store {track.store_id!r}, layout to {layout.store_id!r}"
        )
    candidates, lams = gaze_stream(track.positions, track.normals, layout, cutoff=params.delta_b)
    events, spans = _extract(track, candidates, lams, params)
    values = np.zeros((layout.n_shelves, len(track)), dtype=bool)
    for (s, e, shelf0) in spans:
        values[shelf0, s:e + 1] = True
    return events, StopMatrix(trajectory_id=track.trajectory_id, times=track.times, values=values)


def _extract(track, candidates, lams, params):
    cond = (candidates >= 0) & (lams <= params.delta_b) & (track.speeds <= params.v_b)
    times = track.times
    events, spans = [], []
    for s, e, shelf0 in condition_runs(cond, candidates):
        if times[e] - times[s] + DURATION_TOL >= params.t_b:
            spans.append((s, e, shelf0))
            events.append(StopEvent(
                trajectory_id=track.trajectory_id,
                shelf_id=shelf0 + 1,
                t_s=float(times[s]),
                t_f=float(times[e]),
                duration=float(times[e] - times[s]),
                min_lambda=float(lams[s:e + 1].min()),
                mean_speed=float(track.speeds[s:e + 1].mean()),
            ))
    return events, spans


def _detect_chunk(args):
    tracks, layout, params = args
    out = []
    # one shared gaze pass over the whole chunk amortizes the numpy overhead
    positions = np.concatenate([t.positions for t in tracks])
    normals = np.concatenate([t.normals for t in tracks])
    candidates, lams = gaze_stream(positions, normals, layout, cutoff=params.delta_b)
    offset = 0
    for track in tracks:
        if track.store_id != layout.store_id:
            raise FrameMismatch(
                f"track belongs to store {track.store_id!r}, layout to {layout.store_id!r}"
            )
        k = len(track)
        events, _ = _extract(track, candidates[offset:offset + k], lams[offset:offset + k], params)
        out.append(events)
        offset += k
    return out


def write_stop_events(events, path) -> None:
    """Write stop events as JSONL, one record per event."""
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps({
                "trajectory_id": ev.trajectory_id,
                "shelf_id": ev.shelf_id,
                "t_s": ev.t_s,
                "t_f": ev.t_f,
                "duration": ev.duration,
                "min_lambda": ev.min_lambda,
                "mean_speed": ev.mean_speed,
            }) + "\n")


def read_stop_events(path) -> list[StopEvent]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(StopEvent(
                trajectory_id=str(rec["trajectory_id"]),
                shelf_id=int(rec["shelf_id"]),
                t_s=float(rec["t_s"]),
                t_f=float(rec["t_f"]),
                duration=float(rec["duration"]),
                min_lambda=float(rec["min_lambda"]),
                mean_speed=float(rec["mean_speed"]),
            ))
    return out


def default_jobs() -> int:
    env = os.environ.get("SHELFSCAN_JOBS")
    if env:
        return max(int(env), 1)
    return os.cpu_count() or 1


def detect_many(tracks, layout: StoreLayout, params: StopParams, jobs: int | None = None):
    """Detect stops on many tracks, optionally in parallel.

    Returns one event list per input track, in input order; the result
    does not depend on the worker count.
    """
    tracks = list(tracks)
    if jobs is None:
        jobs = default_jobs()
    chunk_size = 256
    chunks = [tracks[i:i + chunk_size] for i in range(0, len(tracks), chunk_size)]
    if jobs <= 1 or len(chunks) <= 1:
        results = [_detect_chunk((c, layout, params)) for c in chunks]
    else:
        with get_context("fork").Pool(processes=jobs) as pool:
            results = pool.map(_detect_chunk, [(c, layout, params) for c in chunks])
    out = []
    for r in results:
        out.extend(r)
    return out
