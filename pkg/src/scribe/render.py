"""Deterministic SVG rendering of stroke sequences."""

from __future__ import annotations

from dataclasses import dataclass

from .strokes import StrokeSequence

__all__ = ["RenderSpec", "render_svg"]

# fixed palette cycled by character index when coloring is enabled
PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
)


@dataclass
class RenderSpec:
    width: int = 750
    height: int = 120
    baseline: float = 80.0
    stroke_width: float = 1.5
    color_per_char: bool = False
    start_x: float = 10.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("canvas dimensions must be positive")
        if not 0 <= self.baseline <= self.height:
            raise ValueError("baseline must lie within the canvas")


def render_svg(sample: StrokeSequence, spec: RenderSpec = RenderSpec()) -> str:
    """One path per pen-down segment; single-point segments become dots.

    Coordinates are written with full repr precision so the SVG text decodes
    back to the exact absolute trajectory. Output bytes depend only on the
    sample and the spec. With coloring enabled (and eoc labels present),
    segments are additionally split at character boundaries and colored by
    character index.
    """
    pts = sample.absolute(start=(spec.start_x, spec.baseline))
    eos = sample.rows[:, 2]
    color_on = spec.color_per_char and sample.eoc is not None

    # Point i (i >= 1) is reached by row i-1. A row with eos=1 closes the
    # current pen-down segment; with coloring on, an eoc row also splits the
    # segment but keeps the junction point so cursive ink stays connected.
    segments = []  # (point indices, character index)
    current = [0]
    char_idx = 0
    for i in range(1, len(pts)):
        current.append(i)
        row = i - 1
        end_stroke = eos[row] == 1.0
        end_char = color_on and sample.eoc[row] == 1
        if end_stroke or end_char:
            segments.append((current, char_idx))
            current = [] if end_stroke else [i]
            if end_char:
                char_idx += 1
    if len(current) >= 2:
        segments.append((current, char_idx))

    body = []
    for indices, ci in segments:
        color = PALETTE[ci % len(PALETTE)] if color_on else "#000000"
        coords = pts[indices]
        if len(indices) == 1 or (coords == coords[0]).all():
            x, y = coords[0]
            body.append(f'<circle cx="{float(x)!r}" cy="{float(y)!r}" r="{spec.stroke_width!r}" fill="{color}"/>')
            continue
        d = " L ".join(f"{float(x)!r} {float(y)!r}" for x, y in coords)
        body.append(
            f'<path d="M {d}" fill="none" stroke="{color}" '
            f'stroke-width="{spec.stroke_width!r}" stroke-linecap="round" stroke-linejoin="round"/>'
        )

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width}" height="{spec.height}" '
        f'viewBox="0 0 {spec.width} {spec.height}">',
        *body,
        "</svg>",
    ]
    return "\n".join(lines) + "\n"
