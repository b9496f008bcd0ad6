"""Dataset records: one JSON object per line.

Fields per record: ``writer_id`` (string), ``text`` (string), ``points``
(array of [dx, dy, eos] triples), optional ``eoc`` (0/1 array, same length as
points). Floats are serialized with full round-trip precision.
"""

from __future__ import annotations

import json
import logging

import numpy as np

from .strokes import StrokeSequence, delta_encode, reorder_delayed_strokes, strokes_to_points

__all__ = ["load_dataset", "save_dataset", "record_to_sample", "sample_to_record", "ingest_absolute"]

log = logging.getLogger(__name__)


def sample_to_record(sample: StrokeSequence) -> str:
    obj = {
        "writer_id": sample.writer_id,
        "text": sample.text,
        "points": [[float(dx), float(dy), int(eos)] for dx, dy, eos in sample.rows],
    }
    if sample.eoc is not None:
        obj["eoc"] = [int(v) for v in sample.eoc]
    return json.dumps(obj, ensure_ascii=False)


def record_to_sample(line: str) -> StrokeSequence:
    obj = json.loads(line)
    rows = np.asarray(obj["points"], dtype=np.float64)
    eoc = np.asarray(obj["eoc"], dtype=np.int64) if "eoc" in obj else None
    sample = StrokeSequence(rows=rows, writer_id=obj.get("writer_id", ""), text=obj.get("text", ""), eoc=eoc)
    sample.validate()
    return sample


def save_dataset(path, samples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(sample_to_record(s))
            fh.write("\n")


def load_dataset(path, on_error: str = "skip") -> list[StrokeSequence]:
    """Read and validate records; ``on_error`` is ``skip`` or ``raise``.

    Skipped records are reported with their line number. An empty file yields
    an empty list with a warning.
    """
    if on_error not in ("skip", "raise"):
        raise ValueError("on_error must be 'skip' or 'raise'")
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                samples.append(record_to_sample(line))
            except (ValueError, KeyError, json.JSONDecodeError) as exc:
                if on_error == "raise":
                    raise ValueError(f"{path}:{lineno}: {exc}") from exc
                log.warning("%s:%d: skipping bad record (%s)", path, lineno, exc)
    if not samples:
        log.warning("%s: no valid records", path)
    return samples


def ingest_absolute(records, reorder: bool = True) -> list[StrokeSequence]:
    """Convert raw absolute-coordinate drawings into delta samples.

    Each input record is a dict with ``writer_id``, ``text`` and ``strokes``
    (list of polylines, each a list of [x, y]). Delayed strokes are reordered
    left to right before encoding unless ``reorder`` is false.
    """
    out = []
    for rec in records:
        seq = delta_encode(strokes_to_points(rec["strokes"]))
        seq = StrokeSequence(rows=seq.rows, writer_id=rec.get("writer_id", ""), text=rec.get("text", ""))
        if reorder:
            seq = reorder_delayed_strokes(seq)
        seq.validate()
        out.append(seq)
    return out
