"""Checkpoint files: a text manifest followed by raw little-endian float64 arrays.

Layout::

    scribe-checkpoint 1
    meta <key> <value>
    param <name> <dim0> <dim1> ...
    ...
    end
    <raw bytes: each param flattened row-major as little-endian float64,
     concatenated in manifest order>

Parameter names must not contain whitespace. Values are always written as
float64 regardless of the in-memory dtype.
"""

from __future__ import annotations

import numpy as np

__all__ = ["save_checkpoint", "load_checkpoint"]

_MAGIC = "scribe-checkpoint 1"


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    lines = [_MAGIC]
    for k, v in (meta or {}).items():
        k = str(k)
        if any(ch.isspace() for ch in k):
            raise ValueError(f"meta key {k!r} contains whitespace")
        lines.append(f"meta {k} {v}")
    items = list(arrays.items())
    for name, arr in items:
        if any(ch.isspace() for ch in name):
            raise ValueError(f"parameter name {name!r} contains whitespace")
        shape = " ".join(str(d) for d in np.asarray(arr).shape)
        lines.append(f"param {name} {shape}".rstrip())
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for _, arr in items:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Returns (meta, arrays); array order follows the manifest."""
    meta: dict[str, str] = {}
    specs: list[tuple[str, tuple[int, ...]]] = []
    with open(path, "rb") as fh:
        first = fh.readline().decode("utf-8").rstrip("\n")
        if first != _MAGIC:
            raise ValueError(f"not a checkpoint file: bad header {first!r}")
        while True:
            line = fh.readline()
            if not line:
                raise ValueError("truncated manifest: no 'end' marker")
            text = line.decode("utf-8").rstrip("\n")
            if text == "end":
                break
            kind, rest = text.split(" ", 1)
            if kind == "meta":
                key, value = rest.split(" ", 1)
                meta[key] = value
            elif kind == "param":
                parts = rest.split(" ")
                specs.append((parts[0], tuple(int(d) for d in parts[1:])))
            else:
                raise ValueError(f"unknown manifest line {text!r}")
        arrays = {}
        for name, shape in specs:
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"truncated data for parameter {name!r}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
        trailing = fh.read(1)
        if trailing:
            raise ValueError("trailing bytes after final parameter")
    return meta, arrays
