"""Per-point geometric features for the segmentation network.

Each row of a stroke sequence yields 23 scalar features, all pure functions of
the sample itself (no corpus statistics). ``s`` below is the standard
deviation of the sample's delta components, floored at 1e-6; ``baseline`` is
the median y of the trajectory and ``body`` the y standard deviation, so
vertical features are size-invariant. The canvas is y-down, hence ascenders
have negative offsets from the baseline.
"""

from __future__ import annotations

import numpy as np

from .strokes import StrokeSequence

__all__ = ["FEATURE_NAMES", "FEATURE_DIM", "extract_features"]

FEATURE_NAMES = (
    "dx_norm",          # 0: dx / s
    "dy_norm",          # 1: dy / s
    "speed",            # 2: |delta| / s
    "dir_cos",          # 3: movement direction
    "dir_sin",          # 4
    "turn_one_minus_cos",  # 5: 1 - cos(direction change); 0 on straight strokes
    "turn_sin",         # 6: sin(direction change); 0 on straight strokes
    "pen_lift",         # 7: this point closes a stroke (eos)
    "stroke_start",     # 8: first row of a stroke segment
    "x_in_bbox",        # 9: (x - x_min) / width
    "y_in_bbox",        # 10
    "y_from_baseline",  # 11: (y - baseline) / body, signed
    "ascender_band",    # 12: 1 when well above the baseline
    "descender_band",   # 13: 1 when well below the baseline
    "vic_chord_cos",    # 14: direction of the 5-point vicinity chord
    "vic_chord_sin",    # 15
    "vic_aspect",       # 16: (dy_ext - dx_ext) / (dy_ext + dx_ext) of vicinity bbox
    "vic_curliness",    # 17: vicinity path length / bbox extent - 2
    "vic_linearity",    # 18: mean point distance to the chord / chord length
    "vic_turning",      # 19: total absolute direction change in vicinity / pi
    "rel_position",     # 20: t / (N - 1)
    "path_fraction",    # 21: cumulative path length fraction
    "jump_distance",    # 22: |delta| / s on pen-up travel rows, else 0
)
FEATURE_DIM = len(FEATURE_NAMES)
assert FEATURE_DIM == 23

_EPS = 1e-9


def _unit(v):
    n = np.hypot(v[0], v[1])
    if n < _EPS:
        return 0.0, 0.0, n
    return v[0] / n, v[1] / n, n


def extract_features(sample: StrokeSequence) -> np.ndarray:
    """(N, 23) feature matrix; requires at least two rows."""
    n = len(sample)
    if n < 2:
        raise ValueError("feature extraction needs at least 2 points")
    rows = sample.rows
    d = rows[:, :2]
    eos = rows[:, 2]
    pos = np.cumsum(d, axis=0)

    s = max(float(d.std()), 1e-6)
    norm_d = d / s
    speed = np.hypot(d[:, 0], d[:, 1])

    x, y = pos[:, 0], pos[:, 1]
    x_min, x_max = x.min(), x.max()
    y_min, y_max = y.min(), y.max()
    width = max(x_max - x_min, _EPS)
    height = max(y_max - y_min, _EPS)
    baseline = float(np.median(y))
    body = max(float(y.std()), 1e-6)
    y_base = (y - baseline) / body

    feats = np.zeros((n, FEATURE_DIM))
    feats[:, 0] = norm_d[:, 0]
    feats[:, 1] = norm_d[:, 1]
    feats[:, 2] = speed / s
    feats[:, 7] = eos
    feats[:, 9] = (x - x_min) / width
    feats[:, 10] = (y - y_min) / height
    feats[:, 11] = y_base
    feats[:, 12] = (y_base < -1.0).astype(float)
    feats[:, 13] = (y_base > 0.75).astype(float)
    feats[:, 20] = np.arange(n) / (n - 1)
    total_len = max(speed.sum(), _EPS)
    feats[:, 21] = np.cumsum(speed) / total_len

    stroke_start = np.zeros(n)
    stroke_start[0] = 1.0
    stroke_start[1:] = eos[:-1]
    feats[:, 8] = stroke_start
    feats[1:, 22] = np.where(eos[:-1] == 1.0, speed[1:] / s, 0.0)

    turn = np.zeros(n)  # signed direction change at each row
    for t in range(n):
        cx, cy, cn = _unit(d[t])
        feats[t, 3] = cx
        feats[t, 4] = cy
        if t > 0:
            px, py, pn = _unit(d[t - 1])
            if cn >= _EPS and pn >= _EPS:
                cos_a = np.clip(px * cx + py * cy, -1.0, 1.0)
                sin_a = np.clip(px * cy - py * cx, -1.0, 1.0)
                feats[t, 5] = 1.0 - cos_a
                feats[t, 6] = sin_a
                turn[t] = np.arctan2(sin_a, cos_a)

    for t in range(n):
        lo = max(0, t - 2)
        hi = min(n - 1, t + 2)
        window = pos[lo : hi + 1]
        chord = window[-1] - window[0]
        ccx, ccy, clen = _unit(chord)
        feats[t, 14] = ccx
        feats[t, 15] = ccy
        ext = window.max(axis=0) - window.min(axis=0)
        feats[t, 16] = (ext[1] - ext[0]) / (ext[0] + ext[1] + _EPS)
        seg_len = speed[lo + 1 : hi + 1].sum()
        feats[t, 17] = np.clip(seg_len / max(ext[0], ext[1], _EPS) - 2.0, -2.0, 5.0)
        if clen >= _EPS and len(window) > 2:
            rel = window[1:-1] - window[0]
            dist = np.abs(rel[:, 0] * ccy - rel[:, 1] * ccx)
            feats[t, 18] = dist.mean() / clen
        feats[t, 19] = np.abs(turn[lo + 1 : hi + 1]).sum() / np.pi

    return feats
