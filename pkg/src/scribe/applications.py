"""Inference-time capabilities: new-character estimation, interpolation,
writer identification, and the invertibility audit."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import tensor as T
from .model import StyleModel
from .strokes import StrokeSequence
from .tensor import SingularMatrixError

__all__ = [
    "NewCharResult",
    "estimate_new_character",
    "interpolate_writer",
    "interpolate_char_bilinear",
    "Codebook",
    "build_codebook",
    "writer_vec_of_sample",
    "IdentifyResult",
    "identify_writer",
    "AuditRecord",
    "AuditReport",
    "audit_invertibility",
]

log = logging.getLogger(__name__)

RANK_THRESHOLD = 1e-10  # sigma_min / sigma_max above this counts as full rank


# -- new characters -----------------------------------------------------------


@dataclass
class NewCharResult:
    matrix: np.ndarray
    mode: str
    residual: float  # Frobenius norm of C @ Q - P
    converged: bool = True
    n_iter: int = 0
    message: str = ""


def _pair_matrices(pairs):
    if not pairs:
        raise ValueError("need at least one (writer vector, style vector) pair")
    q = np.column_stack([np.asarray(w, dtype=np.float64) for w, _ in pairs])
    p = np.column_stack([np.asarray(wc, dtype=np.float64) for _, wc in pairs])
    if q.shape != p.shape:
        raise ValueError("writer vectors and style vectors must share a dimension")
    return q, p


def estimate_new_character(
    pairs,
    mode: str = "direct_lsq",
    model: StyleModel | None = None,
    max_iter: int = 500,
    gtol: float = 1e-6,
) -> NewCharResult:
    """Recover a character matrix from (writer vector, style vector) pairs.

    ``direct_lsq`` solves min ||C Q - P||_F directly via the pseudo-inverse
    (minimum-norm solution; with one pair this is the rank-1 matrix mapping w
    to w_new exactly). ``latent_lbfgsb`` instead optimizes the bounded latent
    behind the expansion layer of a trained model with L-BFGS-B, which keeps
    the estimate on the model's character manifold.
    """
    q, p = _pair_matrices(pairs)
    if mode == "direct_lsq":
        c = p @ np.linalg.pinv(q)
        return NewCharResult(matrix=c, mode=mode, residual=float(np.linalg.norm(c @ q - p, "fro")))
    if mode != "latent_lbfgsb":
        raise ValueError(f"unknown mode {mode!r}; use direct_lsq or latent_lbfgsb")
    if model is None:
        raise ValueError("latent_lbfgsb needs a trained model (expansion layer weights)")
    L = model.config.latent_dim
    if q.shape[0] != L:
        raise ValueError(f"pair dimension {q.shape[0]} does not match the model latent size {L}")
    w2 = model.char_expand.w.data  # (L, L*L)
    b2 = model.char_expand.b.data

    def objective(latent):
        c = (latent @ w2 + b2).reshape(L, L)
        r = c @ q - p
        grad_c = 2.0 * (r @ q.T)
        return float((r * r).sum()), w2 @ grad_c.ravel()

    # warm start: latent least-squares fit of the unconstrained solution
    direct = p @ np.linalg.pinv(q)
    start, *_ = np.linalg.lstsq(w2.T, direct.ravel() - b2, rcond=None)
    start = np.clip(start, -1.0, 1.0)
    res = minimize(
        objective,
        start,
        jac=True,
        method="L-BFGS-B",
        bounds=[(-1.0, 1.0)] * L,
        options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-15},
    )
    c = (res.x @ w2 + b2).reshape(L, L)
    out = NewCharResult(
        matrix=c,
        mode=mode,
        residual=float(np.linalg.norm(c @ q - p, "fro")),
        converged=bool(res.success),
        n_iter=int(res.nit),
        message=str(res.message),
    )
    if not res.success:
        log.warning("latent optimization did not converge: %s (objective %.3e)", res.message, res.fun)
    return out


# -- interpolation --------------------------------------------------------------


def interpolate_writer(wa: np.ndarray, wb: np.ndarray, gamma: float) -> np.ndarray:
    """Weighted average gamma * wa + (1 - gamma) * wb."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    return gamma * np.asarray(wa, dtype=np.float64) + (1.0 - gamma) * np.asarray(wb, dtype=np.float64)


def interpolate_char_bilinear(corners, weights) -> np.ndarray:
    """Convex combination of four character matrices."""
    if len(corners) != 4 or len(weights) != 4:
        raise ValueError("need exactly four corner matrices and four weights")
    w = np.asarray(weights, dtype=np.float64)
    if (w < 0).any():
        raise ValueError("weights must be non-negative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1 (got {w.sum()!r})")
    out = np.zeros_like(np.asarray(corners[0], dtype=np.float64))
    for r, c in zip(w, corners):
        out += r * np.asarray(c, dtype=np.float64)
    return out


# -- writer identification -------------------------------------------------------


@dataclass
class Codebook:
    """Enrolled writers: id -> mean writer vector, ids in sorted order."""

    writers: list  # sorted writer ids
    vectors: np.ndarray  # (n_writers, L)

    def __len__(self):
        return len(self.writers)


def writer_vec_of_sample(model: StyleModel, sample: StrokeSequence) -> np.ndarray:
    """Mean of C^-1 w over the characters of one labelled sample."""
    with T.no_grad():
        keys, stacked = model.encode_stacked(sample)
        mats = model.char_matrices(sample.text)
        vecs = [stacked[t] for t in range(len(keys))]
        return model.mean_writer_vec(vecs, mats).data.copy()


def build_codebook(model: StyleModel, samples_by_writer: dict) -> Codebook:
    """Enroll writers from labelled samples, pooling candidates across samples."""
    writers = sorted(samples_by_writer)
    if not writers:
        raise ValueError("no writers to enroll")
    rows = []
    with T.no_grad():
        for wid in writers:
            acc = None
            count = 0
            for sample in samples_by_writer[wid]:
                keys, stacked = model.encode_stacked(sample)
                mats = model.char_matrices(sample.text)
                for t in range(len(keys)):
                    try:
                        inv = T.mat_inverse(mats[t].mat)
                    except SingularMatrixError:
                        log.warning("enrollment: singular matrix for %r, skipped", mats[t].key)
                        continue
                    cand = inv.data @ stacked.data[t]
                    acc = cand if acc is None else acc + cand
                    count += 1
            if count == 0:
                raise ValueError(f"writer {wid!r} produced no usable spans")
            rows.append(acc / count)
    return Codebook(writers=writers, vectors=np.stack(rows))


@dataclass
class IdentifyResult:
    predictions: list  # predicted writer id per query group
    votes: list  # averaged one-hot vote vector per query group
    accuracy: float | None = None


def identify_writer(codebook: Codebook, query_groups, model: StyleModel, labels=None) -> IdentifyResult:
    """Nearest-codebook prediction, one per query group.

    Each group is a list of word samples: every word votes for its nearest
    enrolled writer (squared distance, ties to the lowest writer index) and
    the votes are averaged; the group's prediction is the arg-max vote (ties
    again to the lowest index). With ``labels`` the indicator accuracy over
    groups is reported.
    """
    if len(codebook) == 0:
        raise ValueError("empty codebook")
    predictions = []
    votes = []
    for group in query_groups:
        if not group:
            raise ValueError("empty query group")
        vote = np.zeros(len(codebook))
        for sample in group:
            w = writer_vec_of_sample(model, sample)
            d = ((codebook.vectors - w) ** 2).sum(axis=1)
            vote[int(d.argmin())] += 1.0
        vote /= len(group)
        predictions.append(codebook.writers[int(vote.argmax())])
        votes.append(vote)
    accuracy = None
    if labels is not None:
        labels = list(labels)
        if len(labels) != len(predictions):
            raise ValueError("labels must match query groups")
        accuracy = float(np.mean([p == t for p, t in zip(predictions, labels)]))
    return IdentifyResult(predictions=predictions, votes=votes, accuracy=accuracy)


# -- invertibility audit -----------------------------------------------------------


@dataclass
class AuditRecord:
    string: str
    sigma_ratio: float  # sigma_min / sigma_max
    cond: float
    full_rank: bool


@dataclass
class AuditReport:
    records: list
    singular_strings: list
    n_checked: int
    max_len: int

    def summary(self) -> dict:
        return {
            "checked": self.n_checked,
            "full_rank": self.n_checked - len(self.singular_strings),
            "singular": len(self.singular_strings),
            "worst_cond": max((r.cond for r in self.records), default=float("nan")),
        }


def audit_invertibility(
    model: StyleModel,
    max_len: int = 2,
    sample_per_length: int = 200,
    rng_seed: int = 0,
) -> AuditReport:
    """Rank-check character matrices for strings up to ``max_len``.

    Lengths 1 and 2 are enumerated exhaustively over the model's alphabet;
    longer lengths are sampled (``sample_per_length`` seeded draws). Rank is
    judged by the singular value ratio against RANK_THRESHOLD. Deterministic
    for fixed parameters and seed.
    """
    chars = list(model.alphabet.characters)
    rng = np.random.default_rng(np.random.SeedSequence([443, rng_seed]))
    strings: list[str] = []
    for length in range(1, max_len + 1):
        if length == 1:
            strings.extend(chars)
        elif length == 2:
            strings.extend(a + b for a in chars for b in chars)
        else:
            for _ in range(sample_per_length):
                strings.append("".join(rng.choice(chars, size=length)))
    records = []
    singular = []
    with T.no_grad():
        for s in strings:
            mat = model.char_matrices(s)[-1].mat.data
            sv = np.linalg.svd(mat, compute_uv=False)
            ratio = float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0
            ok = ratio > RANK_THRESHOLD
            records.append(
                AuditRecord(string=s, sigma_ratio=ratio, cond=float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf"), full_rank=ok)
            )
            if not ok:
                singular.append(s)
    return AuditReport(records=records, singular_strings=singular, n_checked=len(strings), max_len=max_len)
