"""Brute-force stop computation for cross-checking the detector.

This module re-derives the per-timestamp stop Booleans from first
principles: the candidate shelf is recomputed sample by sample with a
plain linear scan over all segments (scalar math, no culling, no shared
code with the detector's batched path), and every time interval long
enough to qualify is tested explicitly against all three conditions, the
qualifying intervals being ORed into the output matrix. Asymptotically
much slower than detect_stops, but a direct transcription of the stop
definition.

It follows the same numeric conventions documented in detector.py
(EPS_LAMBDA, EPS_MEMBER, TIE_TOL, edge-on handling), otherwise exact
Boolean agreement would be impossible.
"""

from __future__ import annotations

import numpy as np

from .detector import DURATION_TOL, EPS_LAMBDA, EPS_MEMBER, TIE_TOL, StopMatrix, StopParams
from .errors import FrameMismatch
from .kinematics import KinematicTrack
from .layout import StoreLayout, all_segments


def _scan_ray(ox, oy, dx, dy, segments):
    """Distances to every segment for one ray; None where there is no hit."""
    out = []
    for _, seg, _ in segments:
        ax, ay = seg.a
        sx, sy = seg.vector
        qpx = ax - ox
        qpy = ay - oy
        denom = dx * sy - dy * sx
        if denom == 0.0:
            if qpx * sy - qpy * sx != 0.0:
                out.append(None)
                continue
            la = qpx * dx + qpy * dy
            lb = la + (sx * dx + sy * dy)
            lo = min(la, lb)
            out.append(lo if lo > EPS_LAMBDA else None)
            continue
        lam = (qpx * sy - qpy * sx) / denom
        u = (qpx * dy - qpy * dx) / denom
        eps_u = EPS_MEMBER / seg.length
        out.append(lam if (lam > EPS_LAMBDA and -eps_u <= u <= 1.0 + eps_u) else None)
    return out


def _candidates_linear(track: KinematicTrack, layout: StoreLayout):
    """Per-sample candidate shelf (0-based, -1 none) and hit distance."""
    segments = all_segments(layout)
    n_s = layout.n_shelves
    cands = np.full(len(track), -1, dtype=int)
    lams = np.full(len(track), np.inf)
    for k in range(len(track)):
        ox, oy = track.positions[k]
        dx, dy = track.normals[k]
        hits = _scan_ray(ox, oy, dx, dy, segments)
        finite = [h for h in hits if h is not None]
        if not finite:
            continue
        best = min(finite)
        for idx, lam in enumerate(hits):
            if lam is not None and lam <= best + TIE_TOL:
                if idx < n_s:
                    cands[k] = idx
                    lams[k] = lam
                break
    return cands, lams


def brute_force_stops(track: KinematicTrack, layout: StoreLayout, params: StopParams) -> StopMatrix:
    """Stop matrix by exhaustive interval checking.

    For each shelf, every interval [ks, kf] lasting at least t_b is
    tested: if the candidate equals the shelf and the distance and speed
    conditions hold at every sample inside, the whole interval is ORed
    into the matrix.
    """
    if track.store_id != layout.store_id:
        raise FrameMismatch(
            f"track belongs to store {track.store_id!r}, layout to {layout.store_id!r}"
        )
    cands, lams = _candidates_linear(track, layout)
    k_total = len(track)
    t = track.times
    values = np.zeros((layout.n_shelves, k_total), dtype=bool)
    for shelf0 in sorted(set(cands[cands >= 0].tolist())):
        cond = (cands == shelf0) & (lams <= params.delta_b) & (track.speeds <= params.v_b)
        ones = np.concatenate([[0], np.cumsum(cond)])
        for ks in np.flatnonzero(cond):
            kfs = np.arange(ks, k_total)
            all_hold = (ones[kfs + 1] - ones[ks]) == (kfs - ks + 1)
            long_enough = (t[kfs] - t[ks]) + DURATION_TOL >= params.t_b
            qualifying = all_hold & long_enough
            if qualifying.any():
                values[shelf0, ks:kfs[qualifying].max() + 1] = True
    return StopMatrix(trajectory_id=track.trajectory_id, times=t, values=values)
