"""Unsupervised stroke-to-character alignment.

The alignment objective is a lattice variant of the usual sequence-labelling
loss in which every frame must carry a real character: blank states never
self-loop, the expansion has no leading or trailing blank, and a blank is
mandatory only between repeated characters. Between distinct characters the
blank is optional and skippable (the default; ``allow_blank_between_distinct``
switches to a lattice with no such blanks at all).

Training is unsupervised: the network sees per-point geometric features and
the transcript, and the forward score of the lattice is minimized. Best-path
decoding then yields per-point character indices and end-of-character flags,
with blanks absorbed into the preceding character so the flag sits on a real
last point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .alphabet import Alphabet
from .checkpoint import load_checkpoint, save_checkpoint
from .features import FEATURE_DIM, extract_features
from .nn import Linear, init_lstm, lstm_forward
from .optim import Adam
from .strokes import StrokeSequence
from .tensor import Tensor

__all__ = [
    "SegLattice",
    "build_lattice",
    "seg_ctc_loss",
    "Alignment",
    "decode_alignment",
    "Segmenter",
    "train_segmenter",
    "segment_dataset",
]

NEG_INF = -np.inf


@dataclass
class SegLattice:
    """Expanded label states and their transition rules."""

    label: str
    symbols: np.ndarray  # alphabet index per expanded state
    is_blank: np.ndarray  # bool per state
    char_pos: np.ndarray  # label position per state; blanks point at the preceding character
    stay_ok: np.ndarray  # self-loop allowed (characters only)
    skip_ok: np.ndarray  # entering state s from s-2 allowed (skippable blank between)
    min_path: int

    @property
    def n_states(self) -> int:
        return len(self.symbols)


def build_lattice(label: str, alphabet: Alphabet, allow_blank_between_distinct: bool = True) -> SegLattice:
    if not label:
        raise ValueError("label must be non-empty")
    blank = alphabet.blank_index
    symbols: list[int] = []
    is_blank: list[bool] = []
    char_pos: list[int] = []
    skip_ok: list[bool] = []

    repeats = 0
    for m, ch in enumerate(label):
        if m > 0:
            repeated = label[m - 1] == ch
            if repeated:
                repeats += 1
            if repeated or allow_blank_between_distinct:
                symbols.append(blank)
                is_blank.append(True)
                char_pos.append(m - 1)
                skip_ok.append(False)
        can_skip = m > 0 and is_blank[-1] and label[m - 1] != ch
        symbols.append(alphabet.index(ch))
        is_blank.append(False)
        char_pos.append(m)
        skip_ok.append(can_skip)

    is_blank_arr = np.array(is_blank)
    return SegLattice(
        label=label,
        symbols=np.array(symbols, dtype=np.intp),
        is_blank=is_blank_arr,
        char_pos=np.array(char_pos, dtype=np.intp),
        stay_ok=~is_blank_arr,
        skip_ok=np.array(skip_ok),
        min_path=len(label) + repeats,
    )


def _check_length(n: int, lattice: SegLattice):
    if n < lattice.min_path:
        raise ValueError(
            f"{n} frames cannot carry label {lattice.label!r}: minimum path length is {lattice.min_path}"
        )


def seg_ctc_loss(logits: Tensor, label: str, alphabet: Alphabet, allow_blank_between_distinct: bool = True) -> Tensor:
    """Negative log total probability of all lattice paths; differentiable.

    ``logits`` is (N, Q) over the alphabet including the blank. The forward
    recursion runs in log space.
    """
    n = logits.shape[0]
    lattice = build_lattice(label, alphabet, allow_blank_between_distinct)
    _check_length(n, lattice)
    S = lattice.n_states

    lsm = T.log_softmax(logits, axis=1)
    lp = lsm[:, lattice.symbols]  # (N, S) gather

    start_mask = np.full(S, NEG_INF)
    start_mask[0] = 0.0
    stay_mask = Tensor(np.where(lattice.stay_ok, 0.0, NEG_INF))
    skip_mask = Tensor(np.where(lattice.skip_ok, 0.0, NEG_INF))
    pad1 = Tensor(np.full(1, NEG_INF))
    pad2 = Tensor(np.full(2, NEG_INF))

    alpha = lp[0] + Tensor(start_mask)
    for t in range(1, n):
        stay = alpha + stay_mask
        step = T.concat([pad1, alpha[: S - 1]]) if S > 1 else pad1
        routes = [stay, step]
        if S > 2:
            routes.append(T.concat([pad2, alpha[: S - 2]]) + skip_mask)
        alpha = T.logsumexp(T.stack(routes), axis=0) + lp[t]
    return -alpha[S - 1]


@dataclass
class Alignment:
    """Per-point character indices into the label plus end-of-character flags."""

    char_index: np.ndarray  # (N,) indices into the label string
    eoc: np.ndarray  # (N,) 0/1
    label: str
    log_prob: float = field(default=0.0)

    def validate(self):
        ci = self.char_index
        if ci[0] != 0 or ci[-1] != len(self.label) - 1:
            raise ValueError("alignment must start at the first character and end at the last")
        steps = np.diff(ci)
        if (steps < 0).any() or (steps > 1).any():
            raise ValueError("character indices must be nondecreasing with steps of at most 1")
        if int(self.eoc.sum()) != len(self.label):
            raise ValueError("exactly one eoc per character required")


def decode_alignment(logits: Tensor | np.ndarray, label: str, alphabet: Alphabet, allow_blank_between_distinct: bool = True) -> Alignment:
    """Best lattice path, with blanks absorbed into the preceding character."""
    scores = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    n = scores.shape[0]
    lattice = build_lattice(label, alphabet, allow_blank_between_distinct)
    _check_length(n, lattice)
    S = lattice.n_states

    m = scores.max(axis=1, keepdims=True)
    lsm = scores - m - np.log(np.exp(scores - m).sum(axis=1, keepdims=True))
    lp = lsm[:, lattice.symbols]

    delta = np.full(S, NEG_INF)
    delta[0] = lp[0, 0]
    back = np.zeros((n, S), dtype=np.intp)
    stay_pen = np.where(lattice.stay_ok, 0.0, NEG_INF)
    skip_pen = np.where(lattice.skip_ok, 0.0, NEG_INF)
    for t in range(1, n):
        stay = delta + stay_pen
        step = np.concatenate([[NEG_INF], delta[: S - 1]])
        skip = np.concatenate([[NEG_INF, NEG_INF], delta[: S - 2]]) + skip_pen if S > 2 else np.full(S, NEG_INF)
        choices = np.stack([stay, step, skip])
        pick = choices.argmax(axis=0)
        delta = choices[pick, np.arange(S)] + lp[t]
        back[t] = pick

    states = np.empty(n, dtype=np.intp)
    states[-1] = S - 1
    for t in range(n - 1, 0, -1):
        states[t - 1] = states[t] - back[t, states[t]]

    char_index = lattice.char_pos[states]
    eoc = np.zeros(n, dtype=np.int64)
    eoc[-1] = 1
    eoc[:-1][np.diff(char_index) > 0] = 1
    out = Alignment(char_index=char_index, eoc=eoc, label=label, log_prob=float(delta[S - 1]))
    out.validate()
    return out


class Segmenter:
    """Stacked bidirectional LSTM over point features with a per-frame class head."""

    def __init__(self, alphabet: Alphabet, hidden: int = 128, layers: int = 3, seed: int = 0):
        self.alphabet = alphabet
        self.hidden = hidden
        self.layers = layers
        rng = np.random.default_rng(np.random.SeedSequence([77, seed]))
        self.fwd = []
        self.bwd = []
        for i in range(layers):
            d = FEATURE_DIM if i == 0 else 2 * hidden
            self.fwd.append(init_lstm(rng, d, hidden, 1))
            self.bwd.append(init_lstm(rng, d, hidden, 1))
        self.head = Linear(rng, 2 * hidden, alphabet.size)

    def params(self) -> dict[str, Tensor]:
        out = {}
        for i in range(self.layers):
            out.update(self.fwd[i].tensors(f"seg.fwd.{i}"))
            out.update(self.bwd[i].tensors(f"seg.bwd.{i}"))
        out.update(self.head.tensors("seg.head"))
        return out

    def logits(self, features: np.ndarray) -> Tensor:
        x = Tensor(features)
        for i in range(self.layers):
            f = lstm_forward(x, self.fwd[i])
            b = T.flip(lstm_forward(T.flip(x, axis=0), self.bwd[i]), axis=0)
            x = T.concat([f, b], axis=1)
        return self.head(x)

    def save(self, path):
        meta = {
            "kind": "segmenter",
            "hidden": self.hidden,
            "layers": self.layers,
            "alphabet": json.dumps(self.alphabet.characters),
        }
        save_checkpoint(path, {k: v.data for k, v in self.params().items()}, meta)

    @classmethod
    def load(cls, path, alphabet: Alphabet | None = None) -> "Segmenter":
        meta, arrays = load_checkpoint(path)
        if meta.get("kind") != "segmenter":
            raise ValueError("checkpoint does not contain a segmenter")
        alpha = alphabet or Alphabet(json.loads(meta["alphabet"]))
        seg = cls(alpha, hidden=int(meta["hidden"]), layers=int(meta["layers"]))
        own = seg.params()
        if set(own) != set(arrays):
            raise ValueError("checkpoint parameters do not match the segmenter layout")
        for k, v in arrays.items():
            if own[k].data.shape != v.shape:
                raise ValueError(f"shape mismatch for {k}")
            own[k].data = v.astype(own[k].data.dtype)
        return seg


def _bootstrap_boundaries(sample: StrokeSequence) -> list[int]:
    """Pseudo end-of-character rows from observable structure only.

    Characters are first split uniformly over the rows; each interior boundary
    is then assigned to a pen-lift row (eos=1) by a monotone minimum-deviation
    matching, since pen lifts are where non-cursive character switches happen.
    Ground-truth labels are never consulted. With too few pen lifts (cursive
    ink) the uniform boundaries are kept.
    """
    n, m = len(sample), len(sample.text)
    anchors = [round((k + 1) * n / m) - 1 for k in range(m - 1)]
    cands = np.nonzero(sample.rows[:, 2] == 1.0)[0].tolist()
    if cands and cands[-1] == n - 1:
        cands = cands[:-1]  # the final row always closes the last character
    K, C = len(anchors), len(cands)
    if C < K or K == 0:
        return anchors + [n - 1]
    big = 1e18
    cost = np.full((K + 1, C + 1), big)
    cost[0, :] = 0.0
    take = np.zeros((K + 1, C + 1), dtype=bool)
    for k in range(1, K + 1):
        for c in range(k, C + 1):
            with_c = cost[k - 1, c - 1] + abs(cands[c - 1] - anchors[k - 1])
            without = cost[k, c - 1]
            cost[k, c], take[k, c] = (with_c, True) if with_c <= without else (without, False)
    sel = []
    k, c = K, C
    while k > 0:
        if take[k, c]:
            sel.append(cands[c - 1])
            k -= 1
        c -= 1
    return sorted(sel) + [n - 1]


def _bootstrap_targets(sample: StrokeSequence, alphabet: Alphabet) -> np.ndarray:
    tgt = np.empty(len(sample), dtype=np.intp)
    start = 0
    for k, end in enumerate(_bootstrap_boundaries(sample)):
        tgt[start : end + 1] = alphabet.index(sample.text[k])
        start = end + 1
    return tgt


def train_segmenter(
    samples: list[StrokeSequence],
    alphabet: Alphabet,
    hidden: int = 128,
    layers: int = 3,
    steps: int = 500,
    batch_size: int = 4,
    lr: float = 2e-3,
    seed: int = 0,
    allow_blank_between_distinct: bool = True,
    log_every: int = 25,
    warmup_frac: float = 0.8,
    anchor_weight: float = 1.0,
    refine_lr_scale: float = 0.25,
) -> tuple[Segmenter, list[dict]]:
    """Fit the alignment network on (strokes, transcript) pairs; no eoc needed.

    Training runs in two phases. A warmup fits per-frame classes against
    bootstrap pseudo-labels (uniform split snapped to pen lifts); the lattice
    objective alone collapses to peaky alignments on small corpora, so the
    bootstrap fixes the basin. The remaining steps minimize the lattice loss
    at a reduced rate with the pseudo-label term kept as an anchor
    (``anchor_weight``), which lets sequence evidence move boundaries without
    drifting into collapse.
    """
    if not samples:
        raise ValueError("empty training set")
    if not 0.0 <= warmup_frac <= 1.0:
        raise ValueError("warmup_frac must lie in [0, 1]")
    seg = Segmenter(alphabet, hidden=hidden, layers=layers, seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence([12, seed]))
    feats = [extract_features(s) for s in samples]
    targets = [_bootstrap_targets(s, alphabet) for s in samples]

    def framewise_nll(i):
        lsm = T.log_softmax(seg.logits(feats[i]), axis=1)
        return -(lsm[np.arange(len(targets[i])), targets[i]].sum())

    warm_steps = int(round(steps * warmup_frac))
    log = []
    opt = Adam(seg.params(), lr=lr)
    for step in range(1, steps + 1):
        if step == warm_steps + 1:
            opt = Adam(seg.params(), lr=lr * refine_lr_scale)
        idx = rng.choice(len(samples), size=min(batch_size, len(samples)), replace=False)
        total = Tensor(0.0)
        for i in idx:
            if step <= warm_steps:
                total = total + framewise_nll(i)
            else:
                lattice = seg_ctc_loss(seg.logits(feats[i]), samples[i].text, alphabet, allow_blank_between_distinct)
                total = total + lattice + anchor_weight * framewise_nll(i)
        opt.zero_grad()
        total.backward()
        opt.step()
        if step == 1 or step % log_every == 0 or step == steps:
            log.append({"step": step, "loss": float(total.data) / len(idx), "phase": "warmup" if step <= warm_steps else "lattice"})
    return seg, log


def segment_dataset(
    samples: list[StrokeSequence],
    seg: Segmenter,
    allow_blank_between_distinct: bool = True,
) -> list[StrokeSequence]:
    """Fill eoc labels with best-path alignments from a trained segmenter."""
    out = []
    for s in samples:
        with T.no_grad():
            logits = seg.logits(extract_features(s))
        ali = decode_alignment(logits.data, s.text, seg.alphabet, allow_blank_between_distinct)
        out.append(StrokeSequence(rows=s.rows.copy(), writer_id=s.writer_id, text=s.text, eoc=ali.eoc))
    return out
