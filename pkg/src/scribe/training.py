"""Batch assembly and the optimization loop."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .alphabet import Alphabet, default_alphabet
from .losses import ABLATION_FLAGS, total_loss
from .model import ModelConfig, StyleModel
from .optim import Adam
from .strokes import StrokeSequence

__all__ = [
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "derive_views",
    "corpus_input_scale",
    "train",
]


class TrainingDiverged(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class TrainConfig:
    latent_dim: int = 256
    mixtures: int = 20
    lstm_layers: int = 3
    learning_rate: float = 1e-3
    clip: tuple[float, float] = (-10.0, 10.0)
    batch_sentences: int = 5
    steps: int = 2000
    seed: int = 0
    checkpoint_every: int = 500
    log_every: int = 10
    normalize: bool = True
    alphabet: Alphabet | None = None
    ablations: frozenset = field(default_factory=frozenset)
    # scales the writer-consistency/reconstruction terms; 1.0 is the plain
    # unweighted objective, larger values surface the latent structure in
    # far fewer steps than the unweighted sum needs
    latent_weight: float = 1.0

    def __post_init__(self):
        if isinstance(self.ablations, (list, tuple, set)):
            self.ablations = frozenset(self.ablations)
        unknown = self.ablations - set(ABLATION_FLAGS)
        if unknown:
            raise ValueError(f"unknown ablation flags {sorted(unknown)}; valid: {ABLATION_FLAGS}")
        if self.learning_rate <= 0 or self.steps < 1 or self.batch_sentences < 1:
            raise ValueError("learning_rate, steps and batch_sentences must be positive")


@dataclass
class TrainResult:
    model: StyleModel
    log: list
    final_loss: float


def corpus_input_scale(samples) -> float:
    """Standard deviation of all delta components; used to normalize inputs."""
    parts = np.concatenate([s.rows[:, :2].ravel() for s in samples])
    return max(float(parts.std()), 1e-6)


def _word_char_ranges(text: str):
    """(first_char, last_char) index pairs of space-separated words."""
    ranges = []
    start = None
    for i, ch in enumerate(text):
        if ch == " ":
            if start is not None:
                ranges.append((start, i - 1))
                start = None
        elif start is None:
            start = i
    if start is not None:
        ranges.append((start, len(text) - 1))
    return ranges


def derive_views(samples: list[StrokeSequence]) -> dict:
    """Sentence, word, and character views of a batch.

    Word and character views are crops at end-of-character boundaries. A
    sample that is a single word appears as the same object at both sentence
    and word level so the loss can be shared.
    """
    views = {"sentence": [], "word": [], "char": []}
    for sample in samples:
        if sample.eoc is None:
            raise ValueError("training samples need end-of-character labels")
        views["sentence"].append(sample)
        spans = sample.char_spans()

        word_ranges = _word_char_ranges(sample.text)
        for a, b in word_ranges:
            if a == 0 and b == len(sample.text) - 1:
                views["word"].append(sample)
            else:
                lo, hi = spans[a][0], spans[b][1]
                views["word"].append(sample.crop(lo, hi, sample.text[a : b + 1]))

        for i, ch in enumerate(sample.text):
            if ch == " ":
                continue
            lo, hi = spans[i]
            views["char"].append(sample.crop(lo, hi, ch))
    return views


def train(
    dataset: list[StrokeSequence],
    config: TrainConfig,
    model: StyleModel | None = None,
    log_path=None,
    checkpoint_path=None,
) -> TrainResult:
    """Optimize the model; deterministic given the config seed.

    Batches are ``batch_sentences`` samples plus their derived word and
    character views. A non-finite loss aborts with a diagnostic dump of the
    offending batch. Checkpoints are written every ``checkpoint_every`` steps
    and at the end when ``checkpoint_path`` is given; log records carry the
    step, the per-term loss values, and wall time.
    """
    if not dataset:
        raise ValueError("empty dataset")
    for s in dataset:
        if s.eoc is None:
            raise ValueError("training samples need end-of-character labels (segment first)")

    if model is None:
        alphabet = config.alphabet or default_alphabet()
        scale = corpus_input_scale(dataset) if config.normalize else 1.0
        model = StyleModel(
            ModelConfig(
                alphabet=alphabet,
                latent_dim=config.latent_dim,
                mixtures=config.mixtures,
                lstm_layers=config.lstm_layers,
                input_scale=scale,
                seed=config.seed,
            )
        )

    params = model.params()
    opt = Adam(params, lr=config.learning_rate, clip_range=config.clip)
    rng = np.random.default_rng(np.random.SeedSequence([5, config.seed]))
    log: list[dict] = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    start_time = time.monotonic()
    try:
        for step in range(1, config.steps + 1):
            size = min(config.batch_sentences, len(dataset))
            idx = rng.choice(len(dataset), size=size, replace=False)
            batch = [dataset[i] for i in idx]
            views = derive_views(batch)
            loss, breakdown = total_loss(model, views, config.ablations, config.latent_weight)

            if not np.isfinite(breakdown.total):
                diagnostics = {
                    "step": step,
                    "writers": [s.writer_id for s in batch],
                    "texts": [s.text for s in batch],
                    "terms": breakdown.flat(),
                }
                if log_fh:
                    log_fh.write(json.dumps({"diverged": diagnostics}) + "\n")
                raise TrainingDiverged(f"non-finite loss at step {step}", diagnostics)

            opt.zero_grad()
            loss.backward()
            opt.step()

            if step == 1 or step % config.log_every == 0 or step == config.steps:
                record = {
                    "step": step,
                    "total": breakdown.total,
                    "terms": breakdown.flat(),
                    "wall_time": time.monotonic() - start_time,
                }
                log.append(record)
                if log_fh:
                    log_fh.write(json.dumps(record) + "\n")
            if checkpoint_path and (step % config.checkpoint_every == 0 or step == config.steps):
                model.save(checkpoint_path)
    finally:
        if log_fh:
            log_fh.close()
    return TrainResult(model=model, log=log, final_loss=log[-1]["total"] if log else float("nan"))
