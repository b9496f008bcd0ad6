"""Two latent-space applications.

First, new-character recovery in a controlled linear world: with enough
(writer vector, style vector) pairs the least-squares estimate recovers the
generating matrix exactly, and held-out error shrinks as pairs are added.
Second, writer identification on the synthetic corpus with a trained model.
Run 03_train_style_model.py first for the second part.
"""

from pathlib import Path

import numpy as np

from scribe import StyleModel, build_codebook, estimate_new_character, identify_writer, make_styles, synth_corpus
from scribe.synthetic import DEFAULT_WORDS

# -- least-squares recovery in a linear world ---------------------------------
latent = 16
rng = np.random.default_rng(0)
c_true = rng.standard_normal((latent, latent)) + 2.0 * np.eye(latent)
pairs = [(w, c_true @ w) for w in rng.standard_normal((3 * latent, latent))]
held = pairs[2 * latent :]

print("pairs  held-out residual")
for k in (1, latent // 2, latent, 2 * latent):
    est = estimate_new_character(pairs[:k], mode="direct_lsq")
    residual = np.mean([np.linalg.norm(est.matrix @ w - wn) for w, wn in held])
    print(f"{k:5d}  {residual:12.3e}")
full = estimate_new_character(pairs[: 2 * latent], mode="direct_lsq")
print(f"recovery error with {2 * latent} pairs: {np.linalg.norm(full.matrix - c_true, 'fro'):.2e}\n")

# -- writer identification ------------------------------------------------------
ckpt = Path(__file__).parent / "out" / "03_train" / "model.ckpt"
if not ckpt.exists():
    print("run 03_train_style_model.py for the identification part")
    raise SystemExit(0)

model = StyleModel.load(ckpt)
styles = make_styles(4, rng_seed=3, jitter_amp=0.6)
enroll = synth_corpus(styles, DEFAULT_WORDS[:5], rng_seed=31)
queries = synth_corpus(styles, DEFAULT_WORDS[28:34], rng_seed=32)

by_writer = {}
for s in enroll:
    by_writer.setdefault(s.writer_id, []).append(s)
codebook = build_codebook(model, by_writer)

groups, labels = {}, []
for s in queries:
    groups.setdefault(s.writer_id, []).append(s)
labels = sorted(groups)
result = identify_writer(codebook, [groups[w] for w in labels], model, labels=labels)
print(f"identification over {len(labels)} writers, {len(queries)} query words: accuracy {result.accuracy:.2f}")
for label, pred, vote in zip(labels, result.predictions, result.votes):
    print(f"  {label}: predicted {pred} (votes {np.round(vote, 2)})")
