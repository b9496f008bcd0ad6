import re

import numpy as np
import pytest

from scribe.render import RenderSpec, render_svg
from scribe.strokes import StrokeSequence, delta_encode, strokes_to_points


def two_stroke_sample():
    pts = strokes_to_points([[(0, 0), (5, 2), (8, 0)], [(12, 4), (15, 6)]])
    seq = delta_encode(pts)
    return StrokeSequence(rows=seq.rows, writer_id="w", text="ab")


def parse_path_coords(svg):
    coords = []
    for d in re.findall(r'd="M ([^"]+)"', svg):
        pts = d.split(" L ")
        coords.append([tuple(float(v) for v in p.split()) for p in pts])
    return coords


class TestRenderSvg:
    def test_two_strokes_two_paths(self):
        svg = render_svg(two_stroke_sample())
        assert svg.count("<path") == 2
        assert svg.count("<circle") == 0

    def test_single_point_stroke_becomes_dot(self):
        pts = strokes_to_points([[(0, 0), (3, 0)], [(10, 5)]])
        seq = delta_encode(pts)
        svg = render_svg(StrokeSequence(rows=seq.rows))
        assert svg.count("<path") == 1
        assert svg.count("<circle") == 1

    def test_byte_deterministic(self):
        sample = two_stroke_sample()
        spec = RenderSpec(color_per_char=True)
        sample.eoc = np.array([0, 1, 0, 1])
        a = render_svg(sample, spec).encode()
        b = render_svg(sample, spec).encode()
        assert a == b

    def test_coordinates_roundtrip_exactly(self):
        sample = two_stroke_sample()
        sample.rows[:, :2] += 0.123456789012345  # exercise full float precision
        spec = RenderSpec()
        svg = render_svg(sample, spec)
        paths = parse_path_coords(svg)
        absolute = sample.absolute(start=(spec.start_x, spec.baseline))
        flat = [pt for path in paths for pt in path]
        expected = [(absolute[i][0], absolute[i][1]) for i in (0, 1, 2, 3, 4)]
        for got, want in zip(flat, expected):
            assert abs(got[0] - want[0]) <= 1e-9 and abs(got[1] - want[1]) <= 1e-9

    def test_coloring_splits_at_character_boundaries(self):
        # one cursive stroke spanning two characters: coloring splits it
        pts = [(0, 0, 0), (2, 1, 1), (4, 0, 1), (6, 1, 1), (8, 0, 1)]
        seq = delta_encode(pts)
        sample = StrokeSequence(rows=seq.rows, text="ab", eoc=np.array([0, 1, 0, 1]))
        plain = render_svg(sample, RenderSpec(color_per_char=False))
        colored = render_svg(sample, RenderSpec(color_per_char=True))
        assert plain.count("<path") == 1
        assert colored.count("<path") == 2
        assert "#1f77b4" in colored and "#d62728" in colored

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            RenderSpec(width=0)
        with pytest.raises(ValueError):
            RenderSpec(baseline=500.0)

    def test_dimensions_in_header(self):
        svg = render_svg(two_stroke_sample(), RenderSpec(width=300, height=80, baseline=60))
        assert 'width="300"' in svg and 'height="80"' in svg
