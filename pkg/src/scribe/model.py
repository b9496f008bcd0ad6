"""The factorized handwriting style model.

Latent layout: a writer is a vector ``w`` of length L; a character prefix is a
matrix ``C`` of shape (L, L) predicted from text alone; their product
``w_c = C @ w`` is the writer-specific rendering instruction the stroke
decoder consumes. The stroke encoder reads a drawn sample and produces one
``w_c`` per character (at the end-of-character rows), the character branch
produces the matching ``C`` per prefix, and averaging ``C^-1 w_c`` over a
sample estimates the writer vector.

Networks:
  * stroke encoder: point embedding, then two stacked 3-layer LSTMs
  * character branch: one-hot embedding, 3-layer LSTM (latents bounded in
    (-1, 1) by the LSTM output), then a fully-connected expansion reshaped to
    (L, L)
  * dependency restorer: 3-layer LSTM over ordered ``w_c`` vectors, used to
    re-link style vectors gathered from different places
  * stroke decoder: embedded previous point through a 3-layer LSTM, then a
    second 3-layer LSTM over the hidden state concatenated with the current
    ``w_c``, feeding a mixture-density head (bivariate Gaussians plus
    end-of-stroke / end-of-character probabilities)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .alphabet import Alphabet, one_hot_encode
from .checkpoint import load_checkpoint, save_checkpoint
from .nn import Linear, LstmParams, LstmState, init_lstm, lstm_forward, lstm_step
from .strokes import StrokeSequence
from .tensor import SingularMatrixError, Tensor

__all__ = [
    "ModelConfig",
    "StyleModel",
    "PrefixStyle",
    "CharMatrix",
    "MdnStep",
    "MdnOutputs",
    "mdn_nll",
    "mdn_nll_outputs",
    "DecodeResult",
    "decode_strokes",
    "SIGMA_FLOOR",
    "RHO_LIMIT",
]

SIGMA_FLOOR = 1e-6
RHO_LIMIT = 0.999999


@dataclass
class ModelConfig:
    alphabet: Alphabet
    latent_dim: int = 256
    mixtures: int = 20
    lstm_layers: int = 3
    input_scale: float = 1.0  # divisor for dx/dy on the way in, multiplier on the way out
    seed: int = 0


@dataclass
class PrefixStyle:
    """Writer-character style vector for a text prefix."""

    key: str
    vec: Tensor  # (L,)


@dataclass
class CharMatrix:
    """Character-prefix matrix; invertibility is trained, not guaranteed."""

    key: str
    mat: Tensor  # (L, L)


@dataclass
class MdnStep:
    """One decoder output step after squashing."""

    pi: np.ndarray
    mu_x: np.ndarray
    mu_y: np.ndarray
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    rho: np.ndarray
    eos_prob: float
    eoc_prob: float

    def validate(self):
        if abs(self.pi.sum() - 1.0) > 1e-9 or (self.pi <= 0).any():
            raise ValueError("mixture weights must be positive and sum to 1")
        if (self.sigma_x <= 0).any() or (self.sigma_y <= 0).any():
            raise ValueError("standard deviations must be positive")
        if (np.abs(self.rho) >= 1.0).any():
            raise ValueError("correlations must lie in (-1, 1)")
        if not (0.0 < self.eos_prob < 1.0 and 0.0 < self.eoc_prob < 1.0):
            raise ValueError("flag probabilities must lie in (0, 1)")


@dataclass
class MdnOutputs:
    """Squashed decoder outputs for a whole teacher-forced pass (graph tensors)."""

    log_pi: Tensor  # (N, K)
    mu_x: Tensor
    mu_y: Tensor
    sigma_x: Tensor
    sigma_y: Tensor
    rho: Tensor
    eos_prob: Tensor  # (N,)
    eoc_prob: Tensor

    def __len__(self):
        return self.log_pi.shape[0]

    def step(self, t: int) -> MdnStep:
        return MdnStep(
            pi=np.exp(self.log_pi.data[t]),
            mu_x=self.mu_x.data[t].copy(),
            mu_y=self.mu_y.data[t].copy(),
            sigma_x=self.sigma_x.data[t].copy(),
            sigma_y=self.sigma_y.data[t].copy(),
            rho=self.rho.data[t].copy(),
            eos_prob=float(self.eos_prob.data[t]),
            eoc_prob=float(self.eoc_prob.data[t]),
        )


def _log_bivariate_mixture_np(pi, mu_x, mu_y, sx, sy, rho, dx, dy):
    zx = (dx - mu_x) / sx
    zy = (dy - mu_y) / sy
    z = zx * zx + zy * zy - 2.0 * rho * zx * zy
    log_n = -z / (2.0 * (1.0 - rho * rho)) - np.log(2.0 * np.pi) - np.log(sx) - np.log(sy) - 0.5 * np.log(1.0 - rho * rho)
    logs = np.log(pi) + log_n
    m = logs.max()
    return float(m + np.log(np.exp(logs - m).sum()))


def mdn_nll(step: MdnStep, target: tuple[float, float]) -> float:
    """Negative log-likelihood of one target shift under one mixture step."""
    return -_log_bivariate_mixture_np(
        step.pi, step.mu_x, step.mu_y, step.sigma_x, step.sigma_y, step.rho, target[0], target[1]
    )


def mdn_nll_outputs(outputs: MdnOutputs, targets: np.ndarray) -> Tensor:
    """Summed NLL over all steps; differentiable. ``targets`` is (N, 2)."""
    tx = Tensor(targets[:, 0:1])
    ty = Tensor(targets[:, 1:2])
    zx = (tx - outputs.mu_x) / outputs.sigma_x
    zy = (ty - outputs.mu_y) / outputs.sigma_y
    rho = outputs.rho
    one_minus_r2 = 1.0 - rho * rho
    z = zx * zx + zy * zy - 2.0 * (rho * zx * zy)
    log_n = (
        -z / (2.0 * one_minus_r2)
        - math.log(2.0 * math.pi)
        - outputs.sigma_x.log()
        - outputs.sigma_y.log()
        - 0.5 * one_minus_r2.log()
    )
    lp = T.logsumexp(outputs.log_pi + log_n, axis=1)
    return -lp.sum()


class StyleModel:
    def __init__(self, config: ModelConfig):
        self.config = config
        self.alphabet = config.alphabet
        L = config.latent_dim
        K = config.mixtures
        Q = config.alphabet.size
        nl = config.lstm_layers
        rng = np.random.default_rng(np.random.SeedSequence([31, config.seed]))

        self.enc_embed = Linear(rng, 3, L)
        self.enc_lstm = init_lstm(rng, L, L, nl)
        self.enc_style_lstm = init_lstm(rng, L, L, nl)
        self.char_embed = Linear(rng, Q, L)
        self.char_lstm = init_lstm(rng, L, L, nl)
        self.char_expand = Linear(rng, L, L * L)
        self.relink_lstm = init_lstm(rng, L, L, nl)
        self.dec_embed = Linear(rng, 3, L)
        self.dec_lstm = init_lstm(rng, L, L, nl)
        self.dec_cond_lstm = init_lstm(rng, 2 * L, 2 * L, nl)
        self.mdn_head = Linear(rng, 2 * L, 6 * K + 2)

    # -- parameters ---------------------------------------------------------

    def params(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.enc_embed.tensors("enc_embed"))
        out.update(self.enc_lstm.tensors("enc_lstm"))
        out.update(self.enc_style_lstm.tensors("enc_style_lstm"))
        out.update(self.char_embed.tensors("char_embed"))
        out.update(self.char_lstm.tensors("char_lstm"))
        out.update(self.char_expand.tensors("char_expand"))
        out.update(self.relink_lstm.tensors("relink_lstm"))
        out.update(self.dec_embed.tensors("dec_embed"))
        out.update(self.dec_lstm.tensors("dec_lstm"))
        out.update(self.dec_cond_lstm.tensors("dec_cond_lstm"))
        out.update(self.mdn_head.tensors("mdn_head"))
        return out

    @staticmethod
    def parameter_shapes(latent_dim: int, mixtures: int, alphabet_size: int, lstm_layers: int = 3) -> dict[str, tuple]:
        """Name -> shape map of the full model without allocating anything."""
        L, K, Q, nl = latent_dim, mixtures, alphabet_size, lstm_layers
        out = {}
        out.update(Linear.shapes("enc_embed", 3, L))
        out.update(LstmParams.shapes("enc_lstm", L, L, nl))
        out.update(LstmParams.shapes("enc_style_lstm", L, L, nl))
        out.update(Linear.shapes("char_embed", Q, L))
        out.update(LstmParams.shapes("char_lstm", L, L, nl))
        out.update(Linear.shapes("char_expand", L, L * L))
        out.update(LstmParams.shapes("relink_lstm", L, L, nl))
        out.update(Linear.shapes("dec_embed", 3, L))
        out.update(LstmParams.shapes("dec_lstm", L, L, nl))
        out.update(LstmParams.shapes("dec_cond_lstm", 2 * L, 2 * L, nl))
        out.update(Linear.shapes("mdn_head", 2 * L, 6 * K + 2))
        return out

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params().values())

    def group_parameter_counts(self) -> dict[str, int]:
        groups: dict[str, int] = {}
        for name, p in self.params().items():
            group = name.split(".")[0]
            groups[group] = groups.get(group, 0) + p.data.size
        return groups

    def save(self, path):
        cfg = self.config
        meta = {
            "kind": "style-model",
            "latent_dim": cfg.latent_dim,
            "mixtures": cfg.mixtures,
            "lstm_layers": cfg.lstm_layers,
            "input_scale": repr(cfg.input_scale),
            "alphabet": json.dumps(cfg.alphabet.characters),
        }
        save_checkpoint(path, {k: v.data for k, v in self.params().items()}, meta)

    @classmethod
    def load(cls, path) -> "StyleModel":
        meta, arrays = load_checkpoint(path)
        if meta.get("kind") != "style-model":
            raise ValueError("checkpoint does not contain a style model")
        config = ModelConfig(
            alphabet=Alphabet(json.loads(meta["alphabet"])),
            latent_dim=int(meta["latent_dim"]),
            mixtures=int(meta["mixtures"]),
            lstm_layers=int(meta["lstm_layers"]),
            input_scale=float(meta["input_scale"]),
        )
        model = cls(config)
        own = model.params()
        if set(own) != set(arrays):
            raise ValueError("checkpoint parameters do not match the model layout")
        for k, v in arrays.items():
            if own[k].data.shape != v.shape:
                raise ValueError(f"shape mismatch for {k}: {own[k].data.shape} vs {v.shape}")
            own[k].data = v.astype(own[k].data.dtype)
        return model

    # -- stroke encoder -------------------------------------------------------

    def scaled_rows(self, rows: np.ndarray) -> np.ndarray:
        out = np.array(rows, dtype=np.float64, copy=True)
        out[:, :2] /= self.config.input_scale
        return out

    def encode_stacked(self, sample: StrokeSequence) -> tuple[list[str], Tensor]:
        """All prefix style vectors of a labelled sample as one (M, L) tensor."""
        if sample.eoc is None:
            raise ValueError("encoding requires end-of-character labels (segment first)")
        sample.validate()
        idx = sample.eoc_indices()
        x = Tensor(self.scaled_rows(sample.rows))
        h = lstm_forward(self.enc_embed(x), self.enc_lstm)
        h = lstm_forward(h, self.enc_style_lstm)
        stacked = T.take_rows(h, idx)
        keys = [sample.text[: t + 1] for t in range(len(sample.text))]
        return keys, stacked

    def encode_strokes(self, sample: StrokeSequence) -> list[PrefixStyle]:
        """One style vector per character; the t-th covers the prefix up to t."""
        keys, stacked = self.encode_stacked(sample)
        return [PrefixStyle(key=k, vec=stacked[t]) for t, k in enumerate(keys)]

    # -- character branch -----------------------------------------------------

    def char_latents(self, text: str) -> Tensor:
        """(M, L) prefix latents, bounded in (-1, 1) by the LSTM output."""
        onehot = Tensor(one_hot_encode(text, self.alphabet))
        return lstm_forward(self.char_embed(onehot), self.char_lstm)

    def expand_latent(self, latent: Tensor) -> Tensor:
        """(L,) latent -> (L, L) character matrix through the expansion layer."""
        L = self.config.latent_dim
        return T.reshape(self.char_expand(T.reshape(latent, (1, L)))[0], (L, L))

    def char_matrices(self, text: str) -> list[CharMatrix]:
        L = self.config.latent_dim
        latents = self.char_latents(text)
        expanded = self.char_expand(latents)  # (M, L*L)
        return [
            CharMatrix(key=text[: t + 1], mat=T.reshape(expanded[t], (L, L)))
            for t in range(len(text))
        ]

    # -- latent algebra ---------------------------------------------------------

    def mean_writer_vec(self, vecs: list[Tensor], mats: list[CharMatrix]) -> Tensor:
        """Average of C^-1 w_c over the sample's characters."""
        if not vecs or len(vecs) != len(mats):
            raise ValueError("need matching, non-empty style vectors and matrices")
        acc = None
        for t, (v, cm) in enumerate(zip(vecs, mats)):
            try:
                inv = T.mat_inverse(cm.mat)
            except SingularMatrixError as exc:
                raise SingularMatrixError(f"character {t} (key {cm.key!r}): {exc}") from exc
            term = inv @ v
            acc = term if acc is None else acc + term
        return acc * (1.0 / len(vecs))

    def reconstruct_alpha(self, mat: CharMatrix | Tensor, writer_vec: Tensor) -> Tensor:
        """Rebuild a style vector from the writer mean: C @ w (no bias)."""
        m = mat.mat if isinstance(mat, CharMatrix) else mat
        return m @ writer_vec

    def beta_prefixes(self, stacked: Tensor) -> Tensor:
        """Restorer outputs for every prefix of an (M, L) style-vector stack."""
        return lstm_forward(stacked, self.relink_lstm)

    def reconstruct_beta(self, vecs: list[Tensor]) -> Tensor:
        """Re-link an ordered list of style vectors; returns the final output."""
        if not vecs:
            raise ValueError("need at least one style vector")
        out = self.beta_prefixes(T.stack(vecs))
        return out[out.shape[0] - 1]

    def relink_np(self, vecs: list[np.ndarray]) -> np.ndarray:
        with T.no_grad():
            out = self.beta_prefixes(Tensor(np.stack(vecs)))
        return out.data[-1].copy()

    # -- decoder ---------------------------------------------------------------

    def _squash(self, raw: Tensor) -> MdnOutputs:
        K = self.config.mixtures
        return MdnOutputs(
            log_pi=T.log_softmax(raw[:, 0:K], axis=1),
            mu_x=raw[:, K : 2 * K],
            mu_y=raw[:, 2 * K : 3 * K],
            sigma_x=T.exp(raw[:, 3 * K : 4 * K]) + SIGMA_FLOOR,
            sigma_y=T.exp(raw[:, 4 * K : 5 * K]) + SIGMA_FLOOR,
            rho=T.clip(T.tanh(raw[:, 5 * K : 6 * K]), -RHO_LIMIT, RHO_LIMIT),
            eos_prob=T.sigmoid(raw[:, 6 * K]),
            eoc_prob=T.sigmoid(raw[:, 6 * K + 1]),
        )

    def _squash_step_np(self, raw: np.ndarray) -> MdnStep:
        K = self.config.mixtures
        pi_logits = raw[0:K]
        m = pi_logits.max()
        e = np.exp(pi_logits - m)
        sigma_x = np.exp(raw[3 * K : 4 * K]) + SIGMA_FLOOR
        sigma_y = np.exp(raw[4 * K : 5 * K]) + SIGMA_FLOOR
        return MdnStep(
            pi=e / e.sum(),
            mu_x=raw[K : 2 * K].copy(),
            mu_y=raw[2 * K : 3 * K].copy(),
            sigma_x=sigma_x,
            sigma_y=sigma_y,
            rho=np.clip(np.tanh(raw[5 * K : 6 * K]), -RHO_LIMIT, RHO_LIMIT),
            eos_prob=float(T.stable_sigmoid(raw[6 * K : 6 * K + 1])[0]),
            eoc_prob=float(T.stable_sigmoid(raw[6 * K + 1 : 6 * K + 2])[0]),
        )

    @staticmethod
    def char_of_row(eoc: np.ndarray) -> np.ndarray:
        """Character index owning each row, from end-of-character flags."""
        idx = np.zeros(len(eoc), dtype=np.intp)
        idx[1:] = np.cumsum(eoc[:-1])
        return idx

    def decoder_lower(self, sample: StrokeSequence) -> Tensor:
        """Point-history states (N, L); independent of the conditioning, so one
        pass can serve several conditioning routes."""
        rows = self.scaled_rows(sample.rows)
        prev = np.vstack([np.zeros((1, 3)), rows[:-1]])
        return lstm_forward(self.dec_embed(Tensor(prev)), self.dec_lstm)

    def decoder_upper(self, lower: Tensor, cond: Tensor) -> MdnOutputs:
        h = lstm_forward(T.concat([lower, cond], axis=1), self.dec_cond_lstm)
        return self._squash(self.mdn_head(h))

    def decoder_outputs(self, sample: StrokeSequence, cond: Tensor) -> MdnOutputs:
        """Teacher-forced decoder pass conditioned per step on (N, L) vectors."""
        return self.decoder_upper(self.decoder_lower(sample), cond)

    def teacher_forced(self, sample: StrokeSequence, wct_stack: Tensor, lower: Tensor | None = None) -> MdnOutputs:
        """Decoder pass where each row is conditioned on its character's vector."""
        if sample.eoc is None:
            raise ValueError("teacher forcing requires end-of-character labels")
        cond = T.take_rows(wct_stack, self.char_of_row(sample.eoc))
        if lower is None:
            lower = self.decoder_lower(sample)
        return self.decoder_upper(lower, cond)


@dataclass
class DecodeResult:
    sequence: StrokeSequence
    truncated: bool
    steps: int


def _sample_mixture(step: MdnStep, rng: np.random.Generator, temperature: float) -> tuple[float, float]:
    if temperature <= 0.0:
        j = int(step.pi.argmax())
        return float(step.mu_x[j]), float(step.mu_y[j])
    logits = np.log(step.pi) / temperature
    p = np.exp(logits - logits.max())
    p /= p.sum()
    j = int(rng.choice(len(p), p=p))
    z1, z2 = rng.standard_normal(2)
    sd = math.sqrt(temperature)
    dx = step.mu_x[j] + step.sigma_x[j] * z1 * sd
    dy = step.mu_y[j] + step.sigma_y[j] * (step.rho[j] * z1 + math.sqrt(1.0 - step.rho[j] ** 2) * z2) * sd
    return float(dx), float(dy)


def decode_strokes(
    model: StyleModel,
    wcts: list[np.ndarray],
    rng: np.random.Generator,
    max_steps: int = 400,
    temperature: float = 1.0,
    text: str = "",
    writer_id: str = "",
) -> DecodeResult:
    """Autoregressive sampling loop.

    Starts from the zero point, feeds each sampled point back in (with the
    end-of-stroke bit binarized at 0.5), advances to the next conditioning
    vector when the end-of-character probability crosses 0.5, and stops after
    the last character ends. Every character emits at least one point because
    the advance rides on an emitted row. Hitting ``max_steps`` first sets the
    truncated flag.
    """
    if not wcts:
        raise ValueError("need at least one conditioning vector")
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    state1 = LstmState.zeros(model.dec_lstm)
    state2 = LstmState.zeros(model.dec_cond_lstm)
    prev = np.zeros(3)
    rows = []
    eoc_flags = []
    char_idx = 0
    done = False
    for _ in range(max_steps):
        e = prev @ model.dec_embed.w.data + model.dec_embed.b.data
        h1 = lstm_step(e, state1, model.dec_lstm)
        h2 = lstm_step(np.concatenate([h1, wcts[char_idx]]), state2, model.dec_cond_lstm)
        raw = h2 @ model.mdn_head.w.data + model.mdn_head.b.data
        step = model._squash_step_np(raw)
        dx, dy = _sample_mixture(step, rng, temperature)
        eos_bit = 1.0 if step.eos_prob > 0.5 else 0.0
        advance = step.eoc_prob > 0.5
        rows.append((dx, dy, eos_bit))
        eoc_flags.append(1 if advance else 0)
        prev = np.array([dx, dy, eos_bit])
        if advance:
            char_idx += 1
            if char_idx == len(wcts):
                done = True
                break
    out = np.array(rows)
    out[:, :2] *= model.config.input_scale
    seq = StrokeSequence(
        rows=out,
        writer_id=writer_id,
        text=text,
        eoc=np.array(eoc_flags, dtype=np.int64),
    )
    return DecodeResult(sequence=seq, truncated=not done, steps=len(rows))
