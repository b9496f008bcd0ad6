"""Training objective: generation losses for three reconstruction routes at
three granularities, plus latent consistency and reconstruction penalties.

For one labelled sample the model produces style vectors three ways:

  * ``enc``  - straight from the stroke encoder (teacher forcing target path)
  * ``alpha``- from the estimated writer mean through each character matrix
  * ``beta`` - by re-linking the encoder's vectors with the restorer LSTM

Each route is pushed through the decoder (location NLL plus end-of-stroke and
end-of-character cross-entropies), is asked to imply a consistent writer
vector (variance of C^-1 w_c around its mean), and, for alpha/beta, to
reproduce the encoder's vectors. The reconstruction term of the ``enc`` route
is identically zero and reported as such.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .model import MdnOutputs, MdnStep, StyleModel, mdn_nll, mdn_nll_outputs
from .strokes import StrokeSequence
from .tensor import SingularMatrixError, Tensor

__all__ = [
    "LossBreakdown",
    "loss_loc",
    "loss_loc_steps",
    "loss_flags",
    "loss_w_consistency",
    "loss_wct_reconstruction",
    "sample_losses",
    "total_loss",
    "LEVELS",
    "METHODS",
    "TERMS",
    "ABLATION_FLAGS",
]

LEVELS = ("char", "word", "sentence")
METHODS = ("enc", "alpha", "beta")
TERMS = ("loc", "eos", "eoc", "w", "wct")
ABLATION_FLAGS = ("Lf_enc", "Lalpha", "Lbeta", "wct_rec")

BCE_EPS = 1e-7


def loss_loc(outputs: MdnOutputs, targets: np.ndarray) -> Tensor:
    """Summed mixture NLL of the target shifts; ``targets`` is (N, 2)."""
    if len(outputs) != len(targets):
        raise ValueError("outputs and targets must have equal length")
    return mdn_nll_outputs(outputs, np.asarray(targets, dtype=np.float64))


def loss_loc_steps(steps: list[MdnStep], targets) -> float:
    """Per-step form of the location loss (sum of single-step NLLs)."""
    if len(steps) != len(targets):
        raise ValueError("steps and targets must have equal length")
    return float(sum(mdn_nll(s, t) for s, t in zip(steps, targets)))


def _bce(probs: Tensor, targets: np.ndarray) -> Tensor:
    p = T.clip(probs, BCE_EPS, 1.0 - BCE_EPS)
    y = Tensor(np.asarray(targets, dtype=np.float64))
    return -(y * p.log() + (1.0 - y) * (1.0 - p).log()).sum()


def loss_flags(outputs: MdnOutputs, eos_targets: np.ndarray, eoc_targets: np.ndarray) -> tuple[Tensor, Tensor]:
    """Binary cross-entropies for the end-of-stroke and end-of-character flags."""
    return _bce(outputs.eos_prob, eos_targets), _bce(outputs.eoc_prob, eoc_targets)


def loss_w_consistency(candidates: Tensor) -> Tensor:
    """Squared deviation of writer-vector candidates (M, L) from their mean."""
    mean = candidates.mean(axis=0, keepdims=True)
    diff = candidates - mean
    return (diff * diff).sum()


def loss_wct_reconstruction(original: Tensor, reconstructed: Tensor) -> Tensor:
    """Sum of squared distances between matching style vectors, (M, L) each."""
    if original.shape != reconstructed.shape:
        raise ValueError("original and reconstructed stacks must have equal shape")
    diff = original - reconstructed
    return (diff * diff).sum()


@dataclass
class LossBreakdown:
    """Scalar loss values per (level, method, term), plus their sum."""

    values: dict = field(default_factory=dict)  # level -> method -> term -> float
    total: float = 0.0

    def flat(self) -> dict[str, float]:
        out = {}
        for level, methods in self.values.items():
            for method, terms in methods.items():
                for term, v in terms.items():
                    out[f"{level}.{method}.{term}"] = v
        return out

    def check_total(self, atol=1e-6) -> bool:
        return abs(sum(self.flat().values()) - self.total) <= atol * max(1.0, abs(self.total))


def sample_losses(
    model: StyleModel,
    sample: StrokeSequence,
    ablations: frozenset[str] = frozenset(),
    latent_weight: float = 1.0,
):
    """(loss tensor, {method: {term: float}}) for one labelled sample.

    ``latent_weight`` scales the writer-consistency and reconstruction terms
    relative to the generation terms. The default keeps the plain unweighted
    sum; desk-scale runs that must surface writer identity within a few
    thousand steps can raise it (reported term values stay unscaled).
    """
    keys, enc_stack = model.encode_stacked(sample)
    mats = model.char_matrices(sample.text)
    m_chars = len(keys)

    invs = []
    for t, cm in enumerate(mats):
        try:
            invs.append(T.mat_inverse(cm.mat))
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"character {t} (key {cm.key!r}): {exc}") from exc

    enc_vecs = [enc_stack[t] for t in range(m_chars)]
    candidates_enc = T.stack([invs[t] @ enc_vecs[t] for t in range(m_chars)])
    writer_mean = candidates_enc.mean(axis=0)

    scaled = model.scaled_rows(sample.rows)
    targets_xy = scaled[:, :2]
    eos_targets = sample.rows[:, 2]
    eoc_targets = sample.eoc
    dec_lower = model.decoder_lower(sample)  # shared by all generation routes

    def route_terms(wct_stack: Tensor, candidates: Tensor, rec_of_enc: Tensor | None, gen_enabled=True):
        parts = []
        terms = {}
        if gen_enabled:
            outputs = model.teacher_forced(sample, wct_stack, lower=dec_lower)
            l_loc = loss_loc(outputs, targets_xy)
            l_eos, l_eoc = loss_flags(outputs, eos_targets, eoc_targets)
            parts += [l_loc, l_eos, l_eoc]
            terms.update(loc=float(l_loc.data), eos=float(l_eos.data), eoc=float(l_eoc.data))
        l_w = loss_w_consistency(candidates)
        parts.append(l_w if latent_weight == 1.0 else l_w * latent_weight)
        terms["w"] = float(l_w.data)
        if rec_of_enc is not None:
            l_wct = loss_wct_reconstruction(enc_stack, rec_of_enc)
            parts.append(l_wct if latent_weight == 1.0 else l_wct * latent_weight)
            terms["wct"] = float(l_wct.data)
        else:
            terms["wct"] = 0.0
        total = parts[0]
        for p in parts[1:]:
            total = total + p
        return total, terms

    per_method = {}
    pieces = []

    enc_total, enc_terms = route_terms(enc_stack, candidates_enc, None, gen_enabled="Lf_enc" not in ablations)
    per_method["enc"] = enc_terms
    pieces.append(enc_total)

    if "Lalpha" not in ablations:
        alpha_vecs = [model.reconstruct_alpha(mats[t], writer_mean) for t in range(m_chars)]
        alpha_stack = T.stack(alpha_vecs)
        candidates_alpha = T.stack([invs[t] @ alpha_vecs[t] for t in range(m_chars)])
        rec = None if "wct_rec" in ablations else alpha_stack
        alpha_total, alpha_terms = route_terms(alpha_stack, candidates_alpha, rec)
        per_method["alpha"] = alpha_terms
        pieces.append(alpha_total)

    if "Lbeta" not in ablations:
        beta_stack = model.beta_prefixes(enc_stack)
        beta_vecs = [beta_stack[t] for t in range(m_chars)]
        candidates_beta = T.stack([invs[t] @ beta_vecs[t] for t in range(m_chars)])
        rec = None if "wct_rec" in ablations else beta_stack
        beta_total, beta_terms = route_terms(beta_stack, candidates_beta, rec)
        per_method["beta"] = beta_terms
        pieces.append(beta_total)

    total = pieces[0]
    for p in pieces[1:]:
        total = total + p
    return total, per_method


def total_loss(
    model: StyleModel,
    views: dict,
    ablations: frozenset[str] = frozenset(),
    latent_weight: float = 1.0,
):
    """(loss tensor, LossBreakdown) over {level: [samples]} views.

    Identical view objects (a one-word sentence reused at word level) are
    evaluated once and their loss tensor is added at each level they appear
    in, which matches recomputation exactly.
    """
    memo: dict[int, tuple] = {}
    breakdown = LossBreakdown(values={})
    grand = None
    for level in LEVELS:
        level_values: dict[str, dict[str, float]] = {}
        for sample in views.get(level, []):
            key = id(sample)
            if key not in memo:
                memo[key] = sample_losses(model, sample, ablations, latent_weight)
            tensor_loss, per_method = memo[key]
            grand = tensor_loss if grand is None else grand + tensor_loss
            for method, terms in per_method.items():
                bucket = level_values.setdefault(method, {t: 0.0 for t in TERMS})
                for term, v in terms.items():
                    bucket[term] += v
        if level_values:
            breakdown.values[level] = level_values
    if grand is None:
        raise ValueError("no views to compute a loss over")
    breakdown.total = float(grand.data)
    return grand, breakdown
