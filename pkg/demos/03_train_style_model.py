"""Train a small factorized style model.

This is a scaled-down run (a few minutes); the checkpoint it writes feeds the
generation, interpolation, and identification demos.
"""

from pathlib import Path

import numpy as np

from scribe import TrainConfig, make_styles, synth_corpus, synthetic_alphabet, train
from scribe.synthetic import DEFAULT_WORDS

OUT = Path(__file__).parent / "out" / "03_train"
OUT.mkdir(parents=True, exist_ok=True)

styles = make_styles(4, rng_seed=3, jitter_amp=0.6)
# two-word samples knit the writer vector across different content, and the
# upweighted latent terms make the factorization emerge in a short run
words = DEFAULT_WORDS[:24]
rng = np.random.default_rng(3)
phrases = [words[i] + " " + words[j] for i, j in rng.choice(24, size=(20, 2)) if i != j][:16]
corpus = synth_corpus(styles, phrases, rng_seed=3)
config = TrainConfig(
    latent_dim=24,
    mixtures=4,
    lstm_layers=2,
    steps=600,
    batch_sentences=5,
    seed=3,
    alphabet=synthetic_alphabet(),
    log_every=50,
    latent_weight=200.0,
)

print(f"training on {len(corpus)} samples (latent {config.latent_dim}, {config.steps} steps)")
result = train(corpus, config, log_path=OUT / "log.jsonl", checkpoint_path=OUT / "model.ckpt")
for record in result.log:
    print(f"  step {record['step']:4d}  total {record['total']:10.1f}")
print(f"parameters: {result.model.parameter_count():,}")
print(f"checkpoint: {OUT / 'model.ckpt'}")
