"""Unsupervised stroke-to-character alignment.

Trains the alignment network on a corpus stripped of its character labels,
then compares decoded boundaries against the withheld ground truth and writes
character-colored renderings.
"""

from pathlib import Path

import numpy as np

from scribe import (
    Alphabet,
    RenderSpec,
    StrokeSequence,
    make_styles,
    render_svg,
    segment_dataset,
    synth_corpus,
    train_segmenter,
)
from scribe.synthetic import DEFAULT_WORDS

OUT = Path(__file__).parent / "out" / "02_segmentation"
OUT.mkdir(parents=True, exist_ok=True)

corpus = synth_corpus(make_styles(3, rng_seed=1, jitter_amp=0.5), DEFAULT_WORDS[:20], rng_seed=1)
alphabet = Alphabet("".join(sorted({c for s in corpus for c in s.text})))

# hide the ground-truth labels from training
unlabelled = [StrokeSequence(rows=s.rows.copy(), writer_id=s.writer_id, text=s.text) for s in corpus]
print(f"training segmenter on {len(unlabelled)} unlabelled samples, {alphabet.size - 1} characters + blank")
seg, log = train_segmenter(unlabelled, alphabet, hidden=24, layers=1, steps=250, seed=0)
print(f"loss: {log[0]['loss']:.2f} -> {log[-1]['loss']:.2f}")

labelled = segment_dataset(unlabelled, seg)
hits = total = 0
for pred, truth in zip(labelled, corpus):
    for p, t in zip(np.nonzero(pred.eoc)[0], truth.eoc_indices()):
        total += 1
        hits += abs(int(p) - int(t)) <= 2
print(f"boundaries within 2 points of ground truth: {hits}/{total} ({hits / total:.1%})")

spec = RenderSpec(color_per_char=True)
for sample in labelled[:6]:
    (OUT / f"{sample.writer_id}_{sample.text}.svg").write_text(render_svg(sample, spec))
print(f"wrote colored segmentations to {OUT}")
