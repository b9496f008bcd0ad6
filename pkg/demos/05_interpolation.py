"""Interpolate between two writers' styles.

Extracts a writer vector from each of two reference samples, sweeps the
mixing weight, and regenerates the same word at each blend through the
character matrices. Run 03_train_style_model.py first.
"""

import sys
from pathlib import Path

import numpy as np

from scribe import StyleModel, decode_strokes, interpolate_writer, make_styles, render_svg, synth_corpus, writer_vec_of_sample
from scribe import tensor as T

OUT = Path(__file__).parent / "out" / "05_interp"
CKPT = Path(__file__).parent / "out" / "03_train" / "model.ckpt"
if not CKPT.exists():
    sys.exit("run 03_train_style_model.py first")
OUT.mkdir(parents=True, exist_ok=True)

model = StyleModel.load(CKPT)
styles = make_styles(4, rng_seed=3, jitter_amp=0.6)
word = "when"
[sample_a] = synth_corpus([styles[0]], [word], rng_seed=21)
[sample_b] = synth_corpus([styles[3]], [word], rng_seed=22)
wa = writer_vec_of_sample(model, sample_a)
wb = writer_vec_of_sample(model, sample_b)
print(f"writer vectors: |A|={np.linalg.norm(wa):.3f} |B|={np.linalg.norm(wb):.3f} |A-B|={np.linalg.norm(wa - wb):.3f}")

with T.no_grad():
    mats = [m.mat.data for m in model.char_matrices(word)]

for gamma in (0.0, 0.25, 0.5, 0.75, 1.0):
    mixed = interpolate_writer(wa, wb, gamma)
    wcts = [m @ mixed for m in mats]
    result = decode_strokes(model, wcts, np.random.default_rng(5), max_steps=300, temperature=0.0, text=word)
    (OUT / f"gamma_{gamma:.2f}.svg").write_text(render_svg(result.sequence))
    print(f"gamma={gamma:.2f}: {result.steps} points")
print(f"wrote the blend sweep to {OUT}")
