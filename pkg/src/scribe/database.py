"""Substring-keyed store of writer-character style vectors, and the greedy
cover + re-link procedure that assembles conditioning vectors for new text.

Arrays are extracted per starting character position of each reference
sample. A start inside a cursive run (no pen lift at the preceding character
boundary) is skipped, because the encoder cannot see those characters drawn
in isolation. Each stored array holds the cumulative prefix vectors from its
start, e.g. the array for key "hi" holds [w(h), w(hi)].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .model import StyleModel
from .strokes import StrokeSequence
from .tensor import SingularMatrixError

__all__ = ["StoredArray", "StyleDatabase", "build_database", "sample_wcts", "SamplingResult", "CoverSegment"]

log = logging.getLogger(__name__)


@dataclass
class StoredArray:
    key: str
    vecs: list  # cumulative prefix vectors, np arrays of length L
    labels: list  # prefix keys relative to the array start
    writer_id: str
    sample_index: int
    start_char: int


@dataclass
class StyleDatabase:
    arrays: dict  # key -> StoredArray (first extraction wins)
    mean_vec: np.ndarray  # average of C^-1 w over every stored span
    n_candidates: int = 0
    skipped_singular: list = field(default_factory=list)

    def __contains__(self, key: str) -> bool:
        return key in self.arrays

    def keys(self):
        return self.arrays.keys()


def _valid_starts(sample: StrokeSequence) -> list[int]:
    """Character positions where an independent sub-encoding may begin.

    Position p > 0 qualifies only when the previous character ends with a pen
    lift; inside a cursive run only the run start is usable.
    """
    spans = sample.char_spans()
    starts = [0]
    for p in range(1, len(spans)):
        prev_end = spans[p - 1][1]
        if sample.rows[prev_end, 2] == 1.0:
            starts.append(p)
    return starts


def build_database(samples: list[StrokeSequence], model: StyleModel) -> StyleDatabase:
    if not samples:
        raise ValueError("cannot build a database from no samples")
    arrays: dict[str, StoredArray] = {}
    acc = None
    n_candidates = 0
    skipped = []
    with T.no_grad():
        for si, sample in enumerate(samples):
            if sample.eoc is None:
                raise ValueError(f"sample {si} has no end-of-character labels; run segmentation first")
            spans = sample.char_spans()
            for p in _valid_starts(sample):
                sub = sample.crop(spans[p][0], len(sample) - 1, sample.text[p:])
                keys, stacked = model.encode_stacked(sub)
                mats = model.char_matrices(sub.text)
                vecs = [stacked.data[q].copy() for q in range(len(keys))]
                for q, key in enumerate(keys):
                    if key not in arrays:
                        arrays[key] = StoredArray(
                            key=key,
                            vecs=vecs[: q + 1],
                            labels=keys[: q + 1],
                            writer_id=sample.writer_id,
                            sample_index=si,
                            start_char=p,
                        )
                    try:
                        inv = T.mat_inverse(mats[q].mat)
                    except SingularMatrixError:
                        skipped.append((sample.writer_id, key))
                        log.warning("skipping singular character matrix for %r (sample %d)", key, si)
                        continue
                    candidate = inv.data @ vecs[q]
                    acc = candidate if acc is None else acc + candidate
                    n_candidates += 1
    if acc is None or n_candidates == 0:
        raise ValueError("no usable spans: every character matrix was singular")
    return StyleDatabase(
        arrays=arrays,
        mean_vec=acc / n_candidates,
        n_candidates=n_candidates,
        skipped_singular=skipped,
    )


@dataclass
class CoverSegment:
    key: str
    start: int
    source: str  # "database" or "mean"


@dataclass
class SamplingResult:
    wcts: list  # one conditioning vector per target character, in order
    segments: list  # CoverSegment cover, ordered by start, no overlap, no gap
    relink_calls: list  # label lists handed to the restorer, one per output


def sample_wcts(db: StyleDatabase, target: str, model: StyleModel) -> SamplingResult:
    """Conditioning vectors for ``target`` from stored arrays plus fallbacks.

    Longest stored substrings are claimed first (ties go to the leftmost
    occurrence); uncovered characters fall back to the database's mean writer
    vector through their character matrix. The restorer then re-links the
    chosen pieces in target order, treating each stored array as already
    internally dependent: for every vector it sees the last vector of each
    completed earlier segment plus the current one.
    """
    if not target:
        raise ValueError("target must be non-empty")
    n = len(target)
    covered = [False] * n
    segments: list[CoverSegment] = []
    for length in range(n, 0, -1):
        for start in range(0, n - length + 1):
            key = target[start : start + length]
            if key in db.arrays and not any(covered[start : start + length]):
                segments.append(CoverSegment(key=key, start=start, source="database"))
                for i in range(start, start + length):
                    covered[i] = True
    with T.no_grad():
        fallback_mats = {}
        for i, ch in enumerate(target):
            if not covered[i]:
                if ch not in fallback_mats:
                    [cm] = model.char_matrices(ch)
                    fallback_mats[ch] = cm.mat.data
                segments.append(CoverSegment(key=ch, start=i, source="mean"))
        segments.sort(key=lambda s: s.start)

        result: list[np.ndarray] = []
        calls: list[list[str]] = []
        linked: list[np.ndarray] = []
        linked_labels: list[str] = []
        for seg in segments:
            if seg.source == "database":
                arr = db.arrays[seg.key]
                items = list(zip(arr.vecs, arr.labels))
            else:
                vec = fallback_mats[seg.key] @ db.mean_vec
                items = [(vec, seg.key)]
            for j, (vec, label) in enumerate(items):
                calls.append(linked_labels + [label])
                result.append(model.relink_np(linked + [vec]))
                if j == len(items) - 1:
                    linked.append(vec)
                    linked_labels.append(label)
    return SamplingResult(wcts=result, segments=segments, relink_calls=calls)
