"""Procedural handwriting corpus for desk-scale training and evaluation.

Each character has a fixed polyline template drawn in glyph units (baseline at
y=0, x-height at y=1, ascenders/descenders beyond). A writer style applies
control-point jitter, a slant shear, and a global scale, and inserts spacing
between characters. Ground-truth end-of-character labels fall on the last row
of every character.

Deltas are assembled before scaling, so a style with twice the scale produces
exactly doubled rows, and with slant and jitter disabled a character's rows
reproduce its template deltas bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alphabet import Alphabet
from .strokes import StrokeSequence

__all__ = [
    "SyntheticWriterStyle",
    "char_template",
    "template_characters",
    "synthetic_alphabet",
    "synth_corpus",
    "make_styles",
    "DEFAULT_WORDS",
]

GLYPH_UNIT = 22.0  # canvas pixels per glyph unit at scale 1 (x-height)

# Glyph-unit polylines, y up. Converted to canvas orientation (y down, pixels)
# at import time.
_RAW_TEMPLATES: dict[str, tuple[list[list[tuple[float, float]]], float]] = {
    "a": ([[(0.78, 0.82), (0.42, 1.0), (0.10, 0.66), (0.12, 0.22), (0.45, 0.0), (0.78, 0.28), (0.80, 1.0), (0.80, 0.12), (0.95, 0.02)]], 1.10),
    "b": ([[(0.08, 1.55), (0.08, 0.0), (0.10, 0.62), (0.48, 1.0), (0.82, 0.62), (0.78, 0.20), (0.42, 0.0), (0.10, 0.25)]], 1.00),
    "c": ([[(0.80, 0.84), (0.44, 1.0), (0.10, 0.66), (0.10, 0.30), (0.46, 0.0), (0.82, 0.14)]], 1.00),
    "d": ([[(0.82, 1.55), (0.82, 0.0), (0.80, 0.60), (0.45, 1.0), (0.10, 0.62), (0.12, 0.22), (0.48, 0.0), (0.82, 0.24)]], 1.10),
    "e": ([[(0.10, 0.52), (0.78, 0.58), (0.72, 0.92), (0.38, 1.0), (0.08, 0.62), (0.14, 0.16), (0.50, 0.0), (0.84, 0.12)]], 1.00),
    "f": ([[(0.72, 1.48), (0.48, 1.58), (0.28, 1.30), (0.28, 0.0)], [(0.06, 0.95), (0.58, 0.95)]], 0.85),
    "g": ([[(0.78, 0.90), (0.40, 1.0), (0.10, 0.62), (0.18, 0.20), (0.55, 0.12), (0.78, 0.45), (0.80, 1.0), (0.78, -0.30), (0.48, -0.55), (0.14, -0.40)]], 1.10),
    "h": ([[(0.08, 1.55), (0.08, 0.0), (0.10, 0.60), (0.44, 1.0), (0.78, 0.62), (0.78, 0.0)]], 1.00),
    "i": ([[(0.40, 1.0), (0.40, 0.0)], [(0.40, 1.32), (0.44, 1.28)]], 0.60),
    "j": ([[(0.52, 1.0), (0.52, -0.28), (0.30, -0.55), (0.08, -0.40)], [(0.52, 1.32), (0.56, 1.28)]], 0.70),
    "k": ([[(0.08, 1.55), (0.08, 0.0), (0.08, 0.45), (0.68, 1.0), (0.30, 0.52), (0.74, 0.0)]], 0.95),
    "l": ([[(0.38, 1.55), (0.38, 0.10), (0.55, 0.0)]], 0.65),
    "m": ([[(0.06, 1.0), (0.06, 0.0), (0.06, 0.68), (0.26, 1.0), (0.46, 0.66), (0.46, 0.0), (0.46, 0.66), (0.68, 1.0), (0.90, 0.64), (0.90, 0.0)]], 1.25),
    "n": ([[(0.08, 1.0), (0.08, 0.0), (0.08, 0.62), (0.42, 1.0), (0.76, 0.62), (0.76, 0.0)]], 1.00),
    "o": ([[(0.42, 1.0), (0.10, 0.64), (0.10, 0.30), (0.44, 0.0), (0.76, 0.32), (0.76, 0.66), (0.42, 1.0)]], 1.05),
    "p": ([[(0.08, 1.0), (0.08, -0.55), (0.08, 0.70), (0.46, 1.0), (0.80, 0.60), (0.76, 0.18), (0.40, 0.0), (0.08, 0.28)]], 1.05),
    "q": ([[(0.78, 0.90), (0.40, 1.0), (0.10, 0.60), (0.16, 0.18), (0.52, 0.0), (0.78, 0.35), (0.80, 1.0), (0.80, -0.55), (0.95, -0.35)]], 1.10),
    "r": ([[(0.10, 1.0), (0.10, 0.0), (0.10, 0.58), (0.40, 1.0), (0.72, 0.84)]], 0.80),
    "s": ([[(0.76, 0.88), (0.42, 1.0), (0.12, 0.78), (0.36, 0.52), (0.64, 0.44), (0.74, 0.18), (0.44, 0.0), (0.10, 0.14)]], 0.95),
    "t": ([[(0.34, 1.45), (0.34, 0.14), (0.52, 0.0)], [(0.06, 1.0), (0.62, 1.0)]], 0.75),
    "u": ([[(0.08, 1.0), (0.08, 0.30), (0.34, 0.0), (0.66, 0.22), (0.72, 1.0), (0.72, 0.0)]], 1.00),
    "v": ([[(0.06, 1.0), (0.40, 0.0), (0.74, 1.0)]], 0.95),
    "w": ([[(0.04, 1.0), (0.24, 0.0), (0.46, 0.78), (0.68, 0.0), (0.90, 1.0)]], 1.20),
    "x": ([[(0.06, 1.0), (0.74, 0.0)], [(0.74, 1.0), (0.06, 0.0)]], 0.95),
    "y": ([[(0.08, 1.0), (0.40, 0.30)], [(0.76, 1.0), (0.30, -0.45), (0.08, -0.55)]], 1.00),
    "z": ([[(0.06, 1.0), (0.70, 1.0), (0.08, 0.0), (0.74, 0.0)]], 0.95),
    # a space leaves no ink worth seeing: a single pen-down point at mid-gap
    " ": ([[(0.45, 0.05)]], 1.00),
}

_TEMPLATES: dict[str, tuple[list[np.ndarray], float]] = {}
for _ch, (_strokes, _adv) in _RAW_TEMPLATES.items():
    _conv = [np.array([(x * GLYPH_UNIT, -y * GLYPH_UNIT) for x, y in s], dtype=np.float64) for s in _strokes]
    _TEMPLATES[_ch] = (_conv, _adv * GLYPH_UNIT)


def template_characters() -> str:
    return "".join(c for c in _TEMPLATES if c != " ") + " "


def synthetic_alphabet() -> Alphabet:
    return Alphabet(template_characters())


def char_template(char: str) -> list[np.ndarray]:
    """Canvas-unit strokes (y down, pixels, baseline at y=0) for one character."""
    if char not in _TEMPLATES:
        raise ValueError(f"no stroke template for character {char!r}")
    return [s.copy() for s in _TEMPLATES[char][0]]


def char_advance(char: str) -> float:
    if char not in _TEMPLATES:
        raise ValueError(f"no stroke template for character {char!r}")
    return _TEMPLATES[char][1]


@dataclass(frozen=True)
class SyntheticWriterStyle:
    """Writing style: slant shear, size, spacing, and two noise identities.

    ``letterform_amp`` deforms each character's control points once per
    writer (deterministically from the jitter seed and the character), giving
    the writer structurally personal letterforms that repeat across words;
    ``jitter_amp`` adds fresh per-occurrence wobble on top. Both act before
    scaling, so deltas stay exactly linear in ``scale``.
    """

    writer_id: str
    slant: float = 0.0  # radians; positive slants glyph tops to the right
    scale: float = 1.0
    spacing: float = 4.0  # extra pixels between characters, before scaling
    jitter_seed: int = 0
    jitter_amp: float = 0.0  # per-occurrence control-point noise, pixels
    letterform_amp: float = 0.0  # per-writer fixed letterform deformation, pixels
    letterform_seed: int | None = None  # defaults to jitter_seed

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.spacing < 0:
            raise ValueError("spacing must be non-negative")

    def letterform(self, char: str) -> list[np.ndarray]:
        """This writer's personal template for ``char`` (before slant/scale).

        Keyed by ``letterform_seed`` so fresh sessions of the same writer
        (new jitter seeds) keep their letterforms.
        """
        strokes = char_template(char)
        if self.letterform_amp > 0.0:
            seed = self.jitter_seed if self.letterform_seed is None else self.letterform_seed
            rng = np.random.default_rng(np.random.SeedSequence([17, int(seed), ord(char)]))
            strokes = [s + rng.normal(0.0, self.letterform_amp, size=s.shape) for s in strokes]
        return strokes


def _render_word(style: SyntheticWriterStyle, word: str, rng: np.random.Generator) -> StrokeSequence:
    rows: list[np.ndarray] = []
    eos: list[float] = []
    eoc_rows: list[int] = []

    shear = -np.tan(style.slant)  # y is down; negative y is above the baseline
    advance = 0.0
    prev_end: np.ndarray | None = None
    for ch in word:
        strokes = style.letterform(ch)
        if style.jitter_amp > 0.0:
            strokes = [s + rng.normal(0.0, style.jitter_amp, size=s.shape) for s in strokes]
        if style.slant != 0.0:
            for s in strokes:
                s[:, 0] += shear * s[:, 1]
        for s in strokes:
            start = s[0] + np.array([advance, 0.0])
            if prev_end is not None:
                rows.append(start - prev_end)
                eos.append(1.0 if len(s) == 1 else 0.0)
            internal = np.diff(s, axis=0)
            for k, d in enumerate(internal):
                rows.append(d)
                eos.append(1.0 if k == len(internal) - 1 else 0.0)
            prev_end = s[-1] + np.array([advance, 0.0])
        eoc_rows.append(len(rows) - 1)
        advance += char_advance(ch) + style.spacing

    deltas = np.vstack(rows) * style.scale
    eoc = np.zeros(len(rows), dtype=np.int64)
    eoc[eoc_rows] = 1
    seq = StrokeSequence(
        rows=np.column_stack([deltas, np.asarray(eos)]),
        writer_id=style.writer_id,
        text=word,
        eoc=eoc,
    )
    seq.validate()
    return seq


def synth_corpus(styles, words, rng_seed: int = 0) -> list[StrokeSequence]:
    """Render every (style, word) pair; deterministic given the seed.

    Jitter depends on (rng_seed, style.jitter_seed, word position) but never on
    slant or scale, so styles differing only in scale produce proportional
    corpora.
    """
    styles = list(styles)
    words = list(words)
    if not styles or not words:
        raise ValueError("need at least one style and one word")
    out = []
    for style in styles:
        for wi, word in enumerate(words):
            rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed), int(style.jitter_seed), wi]))
            out.append(_render_word(style, word, rng))
    return out


def make_styles(
    n: int, rng_seed: int = 0, jitter_amp: float = 0.6, letterform_amp: float = 1.4
) -> list[SyntheticWriterStyle]:
    """n clearly separated writer styles, deterministic given the seed.

    Writers differ both in affine attributes (slant, scale, spacing) and in
    fixed personal letterforms; the latter is what identification has to key
    on when query words differ from enrollment words.
    """
    rng = np.random.default_rng(np.random.SeedSequence([981, int(rng_seed)]))
    slants = np.linspace(-0.32, 0.32, n) if n > 1 else np.array([0.1])
    scales = np.geomspace(0.7, 1.5, n) if n > 1 else np.array([1.0])
    spacings = np.linspace(2.0, 9.0, n) if n > 1 else np.array([4.0])
    rng.shuffle(scales)
    rng.shuffle(spacings)
    return [
        SyntheticWriterStyle(
            writer_id=f"writer{i:02d}",
            slant=float(slants[i]),
            scale=float(scales[i]),
            spacing=float(spacings[i]),
            jitter_seed=1000 + i,
            jitter_amp=jitter_amp,
            letterform_amp=letterform_amp,
            letterform_seed=1000 + i,
        )
        for i in range(n)
    ]


DEFAULT_WORDS = [
    "the", "and", "for", "are", "but", "not", "you", "all", "any", "can",
    "had", "her", "was", "one", "our", "out", "day", "get", "has", "him",
    "his", "how", "man", "new", "now", "old", "see", "two", "way", "who",
    "boy", "did", "its", "let", "put", "say", "she", "too", "use", "that",
    "with", "have", "this", "will", "your", "from", "they", "know", "want",
    "been", "good", "much", "some", "time", "very", "when", "come", "here",
    "just", "like", "long", "make", "many", "over", "such", "take", "than",
    "them", "well", "went", "were", "what", "then", "once", "upon", "while",
    "after", "quite", "jumpy", "vexed", "zebra", "quick", "brown", "foxes",
    "light", "sound", "water", "house", "plant", "world", "think", "right",
    "three", "small", "again", "place", "every", "found", "still", "learn",
    "never", "under", "might", "order", "other", "being", "these", "thing",
]
