"""Recurrent and affine building blocks on top of the tensor engine.

The LSTM is a single fused graph node: the forward pass caches per-step gate
activations and the backward pass runs full BPTT over the cache. Gate layout
in every 4H-wide weight block is (input, forget, output, candidate), so the
three sigmoid gates occupy one contiguous block. The step equation is

    z = (x @ wx + b) + h_prev @ wh

with the bias folded into the input projection; the runtime stepping helper
uses the same association so fused and stepped forward passes agree bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, _node, default_dtype, stable_sigmoid

__all__ = [
    "LstmLayerParams",
    "LstmParams",
    "Linear",
    "uniform_init",
    "init_lstm",
    "lstm_forward",
    "LstmState",
    "lstm_step",
]


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    """Weights uniform in [-k, k] with k = 1/sqrt(fan_in); used everywhere."""
    k = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-k, k, size=shape).astype(default_dtype()), requires_grad=True)


class Linear:
    """Affine map x @ w + b."""

    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.w = uniform_init(rng, (in_dim, out_dim), fan_in=in_dim)
        self.b = Tensor(np.zeros(out_dim, dtype=default_dtype()), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b

    def tensors(self, prefix: str) -> dict:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}

    @staticmethod
    def shapes(prefix: str, in_dim: int, out_dim: int) -> dict:
        return {f"{prefix}.w": (in_dim, out_dim), f"{prefix}.b": (out_dim,)}


@dataclass
class LstmLayerParams:
    wx: Tensor  # (d_in, 4H)
    wh: Tensor  # (H, 4H)
    b: Tensor  # (4H,)


@dataclass
class LstmParams:
    """Per-layer gate weights for a stacked LSTM."""

    layers: list = field(default_factory=list)
    input_dim: int = 0
    hidden_dim: int = 0

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def tensors(self, prefix: str) -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{prefix}.{i}.wx"] = layer.wx
            out[f"{prefix}.{i}.wh"] = layer.wh
            out[f"{prefix}.{i}.b"] = layer.b
        return out

    @staticmethod
    def shapes(prefix: str, input_dim: int, hidden_dim: int, num_layers: int) -> dict:
        out = {}
        for i in range(num_layers):
            d = input_dim if i == 0 else hidden_dim
            out[f"{prefix}.{i}.wx"] = (d, 4 * hidden_dim)
            out[f"{prefix}.{i}.wh"] = (hidden_dim, 4 * hidden_dim)
            out[f"{prefix}.{i}.b"] = (4 * hidden_dim,)
        return out

    def validate(self):
        h = self.hidden_dim
        for i, layer in enumerate(self.layers):
            d = self.input_dim if i == 0 else h
            if layer.wx.shape != (d, 4 * h) or layer.wh.shape != (h, 4 * h) or layer.b.shape != (4 * h,):
                raise ValueError(
                    f"layer {i} gate shapes {layer.wx.shape}/{layer.wh.shape}/{layer.b.shape} "
                    f"inconsistent with ({d} + {h}) -> {4 * h}"
                )


def init_lstm(rng: np.random.Generator, input_dim: int, hidden_dim: int, num_layers: int) -> LstmParams:
    layers = []
    for i in range(num_layers):
        d = input_dim if i == 0 else hidden_dim
        layers.append(
            LstmLayerParams(
                wx=uniform_init(rng, (d, 4 * hidden_dim), fan_in=d),
                wh=uniform_init(rng, (hidden_dim, 4 * hidden_dim), fan_in=hidden_dim),
                b=Tensor(np.zeros(4 * hidden_dim, dtype=default_dtype()), requires_grad=True),
            )
        )
    return LstmParams(layers=layers, input_dim=input_dim, hidden_dim=hidden_dim)


def _cell(z, c_prev, H):
    """One step given preactivations z (4H,): returns (sig, g, c, tc, h)."""
    sig = stable_sigmoid(z[: 3 * H])  # input, forget, output gates
    g = np.tanh(z[3 * H :])
    c = sig[H : 2 * H] * c_prev + sig[:H] * g
    tc = np.tanh(c)
    return sig, g, c, tc, sig[2 * H : 3 * H] * tc


def lstm_forward(inputs: Tensor, params: LstmParams, h0: np.ndarray | None = None, c0: np.ndarray | None = None) -> Tensor:
    """Run a stacked LSTM over (N, d_in) inputs; returns top-layer states (N, H).

    Differentiable with respect to the inputs and every layer parameter.
    h0/c0 are optional (num_layers, H) initial states, not differentiated.
    """
    x = inputs.data
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValueError(f"expected inputs (N, {params.input_dim}), got {x.shape}")
    params.validate()
    H = params.hidden_dim
    nl = params.num_layers
    N = x.shape[0]
    if h0 is None:
        h0 = np.zeros((nl, H), dtype=x.dtype)
    if c0 is None:
        c0 = np.zeros((nl, H), dtype=x.dtype)

    caches = []
    cur = x
    for li, layer in enumerate(params.layers):
        wx, wh, b = layer.wx.data, layer.wh.data, layer.b.data
        xp = cur @ wx + b
        SIG = np.empty((N, 3 * H), dtype=x.dtype)
        G = np.empty((N, H), dtype=x.dtype)
        TC = np.empty_like(G)
        HS = np.empty_like(G)
        HPREV = np.empty_like(G)
        CPREV = np.empty_like(G)
        h = h0[li]
        c = c0[li]
        for t in range(N):
            HPREV[t] = h
            CPREV[t] = c
            z = xp[t] + h @ wh
            SIG[t], G[t], c, TC[t], h = _cell(z, c, H)
            HS[t] = h
        caches.append((cur, SIG, G, TC, HS, HPREV, CPREV))
        cur = HS

    parents = [inputs]
    for layer in params.layers:
        parents.extend((layer.wx, layer.wh, layer.b))

    def backward(gtop):
        dcur = gtop
        for li in range(nl - 1, -1, -1):
            layer = params.layers[li]
            x_l, SIG, G, TC, HS, HPREV, CPREV = caches[li]
            whT = layer.wh.data.T
            DZ = np.empty((N, 4 * H), dtype=x_l.dtype)
            dh_rec = np.zeros(H, dtype=x_l.dtype)
            dc = np.zeros(H, dtype=x_l.dtype)
            for t in range(N - 1, -1, -1):
                sig = SIG[t]
                dh = dcur[t] + dh_rec
                dct = dc + dh * sig[2 * H :] * (1.0 - TC[t] * TC[t])
                dz = DZ[t]
                dz[:H] = dct * G[t]
                dz[H : 2 * H] = dct * CPREV[t]
                dz[2 * H : 3 * H] = dh * TC[t]
                dz[: 3 * H] *= sig * (1.0 - sig)
                dz[3 * H :] = (dct * sig[:H]) * (1.0 - G[t] * G[t])
                dh_rec = dz @ whT
                dc = dct * sig[H : 2 * H]
            if layer.wx.requires_grad:
                layer.wx.accumulate_grad(x_l.T @ DZ)
            if layer.wh.requires_grad:
                layer.wh.accumulate_grad(HPREV.T @ DZ)
            if layer.b.requires_grad:
                layer.b.accumulate_grad(DZ.sum(axis=0))
            dcur = DZ @ layer.wx.data.T
        if inputs.requires_grad:
            inputs.accumulate_grad(dcur)

    return _node(cur, tuple(parents), backward)


@dataclass
class LstmState:
    """Mutable per-layer (h, c) state for step-by-step decoding."""

    h: np.ndarray  # (num_layers, H)
    c: np.ndarray

    @classmethod
    def zeros(cls, params: LstmParams, dtype=None) -> "LstmState":
        dtype = dtype or default_dtype()
        return cls(
            h=np.zeros((params.num_layers, params.hidden_dim), dtype=dtype),
            c=np.zeros((params.num_layers, params.hidden_dim), dtype=dtype),
        )


def lstm_step(x: np.ndarray, state: LstmState, params: LstmParams) -> np.ndarray:
    """Advance one timestep in place; returns the top-layer hidden state.

    Inference-only (numpy arrays, no graph). Matches lstm_forward bitwise.
    """
    H = params.hidden_dim
    cur = x
    for li, layer in enumerate(params.layers):
        z = (cur @ layer.wx.data + layer.b.data) + state.h[li] @ layer.wh.data
        _, _, c, _, h = _cell(z, state.c[li], H)
        state.h[li] = h
        state.c[li] = c
        cur = h
    return cur
