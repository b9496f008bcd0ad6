"""Synthesize new text in a reference writer's style.

Builds the substring database from a few reference samples, shows how the
target text is covered by stored pieces plus mean-style fallbacks, and decodes
strokes. Run 03_train_style_model.py first.
"""

import sys
from pathlib import Path

import numpy as np

from scribe import StyleModel, build_database, decode_strokes, make_styles, render_svg, sample_wcts, synth_corpus

OUT = Path(__file__).parent / "out" / "04_generate"
CKPT = Path(__file__).parent / "out" / "03_train" / "model.ckpt"
if not CKPT.exists():
    sys.exit("run 03_train_style_model.py first")
OUT.mkdir(parents=True, exist_ok=True)

model = StyleModel.load(CKPT)
writer = make_styles(4, rng_seed=3, jitter_amp=0.6)[1]
refs = synth_corpus([writer], ["his", "ten", "on"], rng_seed=11)
db = build_database(refs, model)
print(f"database from {len(refs)} reference samples: {sorted(db.keys())}")

target = "thin"
plan = sample_wcts(db, target, model)
print(f"cover for {target!r}:")
for seg in plan.segments:
    print(f"  chars {seg.start}..{seg.start + len(seg.key) - 1}: {seg.key!r} from {seg.source}")
print(f"restorer calls: {plan.relink_calls}")

for seed in (1, 2, 3):
    result = decode_strokes(model, plan.wcts, np.random.default_rng(seed), max_steps=300, text=target)
    status = "truncated" if result.truncated else "complete"
    (OUT / f"{target}_seed{seed}.svg").write_text(render_svg(result.sequence))
    print(f"seed {seed}: {result.steps} points ({status})")
print(f"wrote variants to {OUT}")
