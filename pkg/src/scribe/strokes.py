"""Stroke sequences: delta encoding, decoding, and delayed-stroke reordering.

A sample is stored as per-step deltas. Row t of a sequence carries the pen
movement arriving at point t: (dx, dy, eos) where eos=1 marks the last point
of a pen-down stroke. The movement between two strokes (pen in the air) is an
ordinary row with eos=0 whose endpoint begins the next stroke, so prefix
summation of the rows reproduces the absolute trajectory exactly.

Absolute points are triples (x, y, pen_down) where pen_down=0 means the pen
was lifted on the way to this point, i.e. the point starts a new stroke. The
first point of a sample always starts a stroke.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "StrokePoint",
    "StrokeSequence",
    "delta_encode",
    "delta_decode",
    "strokes_to_points",
    "points_to_strokes",
    "reorder_delayed_strokes",
]


@dataclass
class StrokePoint:
    dx: float
    dy: float
    eos: int
    eoc: int | None = None


@dataclass
class StrokeSequence:
    """Delta-encoded pen trajectory with optional end-of-character labels."""

    rows: np.ndarray  # (N, 3) float64: dx, dy, eos
    writer_id: str = ""
    text: str = ""
    eoc: np.ndarray | None = None  # (N,) values in {0, 1}

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[1] != 3:
            raise ValueError(f"rows must be (N, 3), got {self.rows.shape}")
        if self.eoc is not None:
            self.eoc = np.asarray(self.eoc, dtype=np.int64)

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def points(self) -> list[StrokePoint]:
        eoc = self.eoc if self.eoc is not None else [None] * len(self)
        return [
            StrokePoint(dx=float(r[0]), dy=float(r[1]), eos=int(r[2]), eoc=None if e is None else int(e))
            for r, e in zip(self.rows, eoc)
        ]

    def validate(self) -> None:
        if len(self) < 1:
            raise ValueError("a stroke sequence needs at least one row")
        if not np.isfinite(self.rows).all():
            raise ValueError("non-finite values in stroke rows")
        eos = self.rows[:, 2]
        if not np.isin(eos, (0.0, 1.0)).all():
            raise ValueError("eos flags must be 0 or 1")
        if self.eoc is not None:
            if self.eoc.shape != (len(self),):
                raise ValueError("eoc array must have one entry per row")
            if not np.isin(self.eoc, (0, 1)).all():
                raise ValueError("eoc flags must be 0 or 1")
            count = int(self.eoc.sum())
            if self.text and count != len(self.text):
                raise ValueError(f"eoc count {count} does not match text length {len(self.text)}")

    def eoc_indices(self) -> np.ndarray:
        if self.eoc is None:
            raise ValueError("sample has no end-of-character labels")
        return np.nonzero(self.eoc)[0]

    def char_spans(self) -> list[tuple[int, int]]:
        """Inclusive (start, end) row span of each character, from eoc labels."""
        idx = self.eoc_indices()
        spans = []
        start = 0
        for end in idx:
            spans.append((start, int(end)))
            start = int(end) + 1
        return spans

    def crop(self, start: int, end: int, text: str) -> "StrokeSequence":
        """Sub-sequence of rows [start, end] relabelled with ``text``."""
        rows = self.rows[start : end + 1].copy()
        eoc = None if self.eoc is None else self.eoc[start : end + 1].copy()
        return StrokeSequence(rows=rows, writer_id=self.writer_id, text=text, eoc=eoc)

    def absolute(self, start: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
        """(N+1, 2) absolute coordinates, beginning at ``start``."""
        pts = np.empty((len(self) + 1, 2))
        pts[0] = start
        np.cumsum(self.rows[:, :2], axis=0, out=pts[1:])
        pts[1:] += start
        return pts


def strokes_to_points(strokes) -> list[tuple[float, float, int]]:
    """Flatten polylines into (x, y, pen_down) triples."""
    out = []
    for stroke in strokes:
        for i, (x, y) in enumerate(stroke):
            pen = 0 if i == 0 else 1
            out.append((float(x), float(y), pen))
    if out:
        out[0] = (out[0][0], out[0][1], 0)
    return out


def points_to_strokes(points) -> list[list[tuple[float, float]]]:
    strokes: list[list[tuple[float, float]]] = []
    for x, y, pen in points:
        if pen == 0 or not strokes:
            strokes.append([])
        strokes[-1].append((float(x), float(y)))
    return strokes


def delta_encode(points) -> StrokeSequence:
    """Encode absolute (x, y, pen_down) triples into per-step deltas.

    Produces one row per point after the first. eos=1 on row t means point t
    closes a pen-down stroke (the following point, if any, starts a new one).
    """
    if len(points) < 2:
        raise ValueError("delta encoding needs at least 2 absolute points")
    arr = np.asarray([(p[0], p[1], p[2]) for p in points], dtype=np.float64)
    xy = arr[:, :2]
    pen = arr[:, 2].astype(np.int64)
    if pen[1] == 0:
        raise ValueError("a leading single-point stroke is not representable; the first stroke needs >= 2 points")
    deltas = np.diff(xy, axis=0)
    n = len(points) - 1
    eos = np.zeros(n)
    for t in range(1, len(points)):
        last_of_stroke = t == len(points) - 1 or pen[t + 1] == 0
        eos[t - 1] = 1.0 if last_of_stroke else 0.0
    rows = np.column_stack([deltas, eos])
    return StrokeSequence(rows=rows)


def delta_decode(seq: StrokeSequence, start: tuple[float, float] = (0.0, 0.0)) -> list[tuple[float, float, int]]:
    """Inverse of delta_encode; exact because decoding is pure summation."""
    pts = seq.absolute(start)
    out = [(float(pts[0, 0]), float(pts[0, 1]), 0)]
    eos = seq.rows[:, 2]
    for t in range(1, len(pts)):
        pen = 1 if t == 1 else (0 if eos[t - 2] == 1.0 else 1)
        out.append((float(pts[t, 0]), float(pts[t, 1]), pen))
    return out


@dataclass
class _Extent:
    index: int
    left: float
    right: float
    stroke: list


def reorder_delayed_strokes(sample: StrokeSequence) -> StrokeSequence:
    """Move strokes written out of left-to-right order back into place.

    A stroke is moved before another only when their x-extents are disjoint
    (its rightmost point lies left of the other's leftmost point); overlapping
    strokes keep their temporal order, which preserves genuine delayed strokes
    such as t-bars. When nothing moves the sample is returned unchanged.
    Character labels cannot survive a permutation, so eoc is dropped whenever
    strokes actually move.
    """
    strokes = points_to_strokes(delta_decode(sample))
    if len(strokes) <= 1:
        return sample

    extents = []
    for i, stroke in enumerate(strokes):
        xs = [p[0] for p in stroke]
        extents.append(_Extent(index=i, left=min(xs), right=max(xs), stroke=stroke))

    placed: list[_Extent] = []
    for ext in extents:
        insert_at = len(placed)
        for j, other in enumerate(placed):
            if ext.right < other.left:
                insert_at = j
                break
        placed.insert(insert_at, ext)

    order = [e.index for e in placed]
    if order == list(range(len(strokes))):
        return sample

    new_strokes = [list(e.stroke) for e in placed]
    if len(new_strokes[0]) == 1:
        # a moved single-point stroke (dot) cannot lead a delta encoding;
        # duplicating the point keeps the geometry and the pen lift after it
        new_strokes[0] = new_strokes[0] * 2
    reordered = delta_encode(strokes_to_points(new_strokes))
    return StrokeSequence(rows=reordered.rows, writer_id=sample.writer_id, text=sample.text, eoc=None)
