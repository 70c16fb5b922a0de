"""Trajectory ingest, position smoothing, heading normals and speeds.

A trajectory is the 10 Hz record of one shopper trip: floor position
(x, y) and body orientation angle theta per sample. Positions are
smoothed with a centered moving average before any downstream use, both
for speed estimation and for the gaze distance computed by the detector,
so the two never disagree about where the shopper is. Theta is left
untouched.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidWindow, ParseError, TooShort, ValidationError

DT = 0.1  # tracking time step, seconds
DT_TOL = 1e-6
GAP_FACTOR = 1.5  # gaps longer than GAP_FACTOR * DT split a record
DEFAULT_WINDOW = 5


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class RawSample:
    t: float
    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not (-math.pi < self.theta <= math.pi):
            raise ValidationError(f"theta {self.theta} outside (-pi, pi]")


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered raw samples for one trip, uniformly spaced at DT."""

    trajectory_id: str
    store_id: str
    samples: tuple[RawSample, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if len(self.samples) < 3:
            raise TooShort(
                f"trajectory {self.trajectory_id} has {len(self.samples)} samples, need >= 3"
            )
        for prev, cur in zip(self.samples, self.samples[1:]):
            if abs((cur.t - prev.t) - DT) > DT_TOL:
                raise ValidationError(
                    f"non-uniform time step {cur.t - prev.t:.6f}s at t={cur.t}",
                    element=self.trajectory_id,
                )

    def __len__(self):
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def positions(self) -> np.ndarray:
        return np.array([(s.x, s.y) for s in self.samples])

    @property
    def thetas(self) -> np.ndarray:
        return np.array([s.theta for s in self.samples])


@dataclass(frozen=True)
class KinematicTrack:
    """Per-sample smoothed positions, heading normals and speeds.

    All arrays share the source trajectory's sample axis.
    """

    trajectory_id: str
    store_id: str
    times: np.ndarray        # (k,) seconds
    positions: np.ndarray    # (k, 2) smoothed, meters
    normals: np.ndarray      # (k, 2) unit heading vectors
    speeds: np.ndarray       # (k,) m/s

    def __len__(self):
        return len(self.times)


def fit_window(window: int, n_samples: int) -> int:
    """Largest valid (odd, <= n_samples) window not exceeding `window`."""
    w = min(window, n_samples)
    if w % 2 == 0:
        w -= 1
    return max(w, 1)


def low_pass_positions(traj: Trajectory, window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Centered moving average of the positions over `window` samples.

    Near the ends the window is clipped to the available samples, so a
    window of 3 averages two samples at each boundary. Window 1 is the
    identity. Output length equals input length.
    """
    positions = traj.positions
    return _smooth(positions, window)


def _smooth(positions: np.ndarray, window: int) -> np.ndarray:
    n = len(positions)
    if window < 1 or window % 2 == 0:
        raise InvalidWindow(f"window must be a positive odd sample count, got {window}")
    if window > n:
        raise InvalidWindow(f"window {window} exceeds sample count {n}")
    if window == 1:
        return positions.copy()
    half = window // 2
    cum = np.zeros((n + 1, 2))
    np.cumsum(positions, axis=0, out=cum[1:])
    lo = np.maximum(np.arange(n) - half, 0)
    hi = np.minimum(np.arange(n) + half + 1, n)
    return (cum[hi] - cum[lo]) / (hi - lo)[:, None]


def _speeds(positions: np.ndarray, times: np.ndarray) -> np.ndarray:
    # central differences inside, one-sided at the two ends
    v = np.empty(len(positions))
    v[1:-1] = np.hypot(
        positions[2:, 0] - positions[:-2, 0], positions[2:, 1] - positions[:-2, 1]
    ) / (times[2:] - times[:-2])
    v[0] = math.hypot(*(positions[1] - positions[0])) / (times[1] - times[0])
    v[-1] = math.hypot(*(positions[-1] - positions[-2])) / (times[-1] - times[-2])
    return v


def build_track(traj: Trajectory, window: int = DEFAULT_WINDOW) -> KinematicTrack:
    """Derive the kinematic streams used by the stop detector."""
    return track_from_arrays(
        traj.trajectory_id, traj.store_id, traj.times, traj.positions, traj.thetas, window
    )


def track_from_arrays(trajectory_id: str, store_id: str, times, positions, thetas,
                      window: int = DEFAULT_WINDOW) -> KinematicTrack:
    """build_track for callers that already hold raw arrays in bulk."""
    times = np.asarray(times, dtype=float)
    positions = np.asarray(positions, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    if len(times) < 3:
        raise TooShort(f"trajectory {trajectory_id} too short for differencing")
    positions = _smooth(positions, window)
    normals = np.column_stack([np.cos(thetas), np.sin(thetas)])
    return KinematicTrack(
        trajectory_id=trajectory_id,
        store_id=store_id,
        times=times,
        positions=positions,
        normals=normals,
        speeds=_speeds(positions, times),
    )


def split_on_gaps(trajectory_id: str, store_id: str, rows) -> list[Trajectory]:
    """Split a raw sample sequence at tracking dropouts.

    Any time gap exceeding GAP_FACTOR * DT starts a new trajectory; pieces
    get a "~<i>" id suffix (only when splitting actually occurred) and
    pieces shorter than 3 samples are dropped.
    """
    rows = sorted(rows, key=lambda r: r[0])
    pieces, current = [], []
    for row in rows:
        if current and (row[0] - current[-1][0]) > GAP_FACTOR * DT:
            pieces.append(current)
            current = []
        current.append(row)
    if current:
        pieces.append(current)

    out = []
    multiple = len(pieces) > 1
    for i, piece in enumerate(pieces):
        if len(piece) < 3:
            continue
        tid = f"{trajectory_id}~{i}" if multiple else trajectory_id
        samples = tuple(
            RawSample(t=float(t), x=float(x), y=float(y), theta=wrap_angle(float(th)))
            for t, x, y, th in piece
        )
        out.append(Trajectory(trajectory_id=tid, store_id=store_id, samples=samples))
    return out


def read_trajectories(path) -> list[Trajectory]:
    """Read trajectories from a JSONL file, one trip per line.

    Record shape: {"trajectory_id", "store_id", "samples": [[t, x, y, theta], ...]}.
    Records are gap-split; sub-minimum fragments are silently discarded.
    """
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out.extend(
                    split_on_gaps(str(rec["trajectory_id"]), str(rec["store_id"]), rec["samples"])
                )
            except (json.JSONDecodeError, KeyError, TypeError, IndexError) as exc:
                raise ParseError(f"{path}:{lineno}: bad trajectory record: {exc!r}") from exc
    return out


def write_trajectories(trajectories, path) -> None:
    with open(path, "w") as fh:
        for traj in trajectories:
            rec = {
                "trajectory_id": traj.trajectory_id,
                "store_id": traj.store_id,
                "samples": [[s.t, s.x, s.y, s.theta] for s in traj.samples],
            }
            fh.write(json.dumps(rec) + "\n")
