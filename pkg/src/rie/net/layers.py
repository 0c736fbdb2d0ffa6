"""The two neural estimators: feature MLP and the embedding-sequence head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, LayerCountMismatch
from . import tensor as T
from .tensor import Tensor

N_OUTPUTS = 9


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class FeatNetConfig:
    """Concatenated-feature MLP: three ReLU layers then a linear 9-way output."""

    input_dim: int
    hidden: tuple = (64, 64, 64)
    output: int = N_OUTPUTS

    def __post_init__(self):
        if len(self.hidden) != 3:
            raise DimensionMismatch("featnet has exactly three hidden layers")


class FeatNet:
    def __init__(self, cfg: FeatNetConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        dims = [cfg.input_dim, *cfg.hidden, cfg.output]
        self.weights = []
        self.biases = []
        for fi, fo in zip(dims[:-1], dims[1:]):
            self.weights.append(Tensor(glorot_uniform(rng, fi, fo, (fi, fo)), True))
            self.biases.append(Tensor(np.zeros(fo), True))

    def parameters(self) -> list[Tensor]:
        return [*self.weights, *self.biases]

    def forward(self, xa: np.ndarray, xb: np.ndarray) -> Tensor:
        """xa, xb: (B, input_dim/2) standardized feature slices."""
        xa = np.atleast_2d(np.asarray(xa, dtype=np.float64))
        xb = np.atleast_2d(np.asarray(xb, dtype=np.float64))
        x = np.concatenate([xa, xb], axis=1)
        if x.shape[1] != self.cfg.input_dim:
            raise DimensionMismatch(
                f"featnet expects {self.cfg.input_dim} inputs, got {x.shape[1]}"
            )
        h = Tensor(x)
        for k in range(3):
            h = T.relu(T.add(T.matmul(h, self.weights[k]), self.biases[k]))
        return T.add(T.matmul(h, self.weights[3]), self.biases[3])

    def forward_batch(self, samples) -> Tensor:
        xa = np.stack([s[0] for s in samples])
        xb = np.stack([s[1] for s in samples])
        return self.forward(xa, xb)

    def state(self) -> dict:
        out = {}
        for k in range(4):
            out[f"w{k}"] = self.weights[k].data
            out[f"b{k}"] = self.biases[k].data
        return out

    def load_state(self, arrays: dict) -> None:
        for k in range(4):
            self.weights[k].data = np.asarray(arrays[f"w{k}"], dtype=np.float64)
            self.biases[k].data = np.asarray(arrays[f"b{k}"], dtype=np.float64)


@dataclass
class SslHeadConfig:
    """Layer-weighted sum -> BiLSTM -> attention pooling -> MLP."""

    n_layers: int
    frame_dim: int
    lstm_hidden: int = 64
    attn_dim: int = 64
    mlp_hidden: tuple = (128, 64)
    output: int = N_OUTPUTS

    @property
    def utterance_dim(self) -> int:
        return 2 * self.lstm_hidden


def attention_pool(h: Tensor, W: Tensor, b: Tensor, v: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax attention over time: scores v' tanh(W h_t + b).

    h: (B, T, H); mask: (B, T) boolean validity; returns (B, H).
    """
    scores = T.matmul(T.tanh(T.add(T.matmul(h, W), b)), T.reshape(v, (-1, 1)))
    alpha = T.softmax(T.reshape(scores, scores.shape[:2]), axis=1, mask=mask)
    weighted = T.mul(T.reshape(alpha, (*alpha.shape, 1)), h)
    return T.reduce_sum(weighted, axis=1)


class SslHead:
    def __init__(self, cfg: SslHeadConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        H, D, A = cfg.lstm_hidden, cfg.frame_dim, cfg.attn_dim
        self.layer_w = Tensor(np.zeros(cfg.n_layers), True)

        def lstm_params():
            w = glorot_uniform(rng, D + H, 4 * H, (D + H, 4 * H))
            b = np.zeros(4 * H)
            b[H : 2 * H] = 1.0  # forget-gate bias
            return Tensor(w, True), Tensor(b, True)

        self.lstm_fw, self.lstm_fb = lstm_params()
        self.lstm_rw, self.lstm_rb = lstm_params()

        U = cfg.utterance_dim
        self.attn_W = Tensor(glorot_uniform(rng, U, A, (U, A)), True)
        self.attn_b = Tensor(np.zeros(A), True)
        self.attn_v = Tensor(glorot_uniform(rng, A, 1, (A,)), True)

        dims = [2 * U, *cfg.mlp_hidden, cfg.output]
        self.mlp_w, self.mlp_b = [], []
        for fi, fo in zip(dims[:-1], dims[1:]):
            self.mlp_w.append(Tensor(glorot_uniform(rng, fi, fo, (fi, fo)), True))
            self.mlp_b.append(Tensor(np.zeros(fo), True))

    def parameters(self) -> list[Tensor]:
        return [
            self.layer_w,
            self.lstm_fw,
            self.lstm_fb,
            self.lstm_rw,
            self.lstm_rb,
            self.attn_W,
            self.attn_b,
            self.attn_v,
            *self.mlp_w,
            *self.mlp_b,
        ]

    def utterance_embedding(self, E: np.ndarray, lengths: np.ndarray) -> Tensor:
        """E: (B, L, Tmax, D) padded layer stacks -> (B, 2*lstm_hidden)."""
        if E.shape[1] != self.cfg.n_layers:
            raise LayerCountMismatch(
                f"expected {self.cfg.n_layers} layers, got {E.shape[1]}"
            )
        B, L, Tmax, D = E.shape
        mask = np.arange(Tmax)[None, :] < lengths[:, None]

        sw = T.softmax(self.layer_w, axis=0)
        weighted = T.mul(T.reshape(sw, (1, L, 1, 1)), Tensor(E))
        H = T.reduce_sum(weighted, axis=1)  # (B, T, D)

        fw = T.lstm_sequence(H, self.lstm_fw, self.lstm_fb, lengths)
        rev = T.reverse_sequence(H, lengths)
        bw = T.reverse_sequence(
            T.lstm_sequence(rev, self.lstm_rw, self.lstm_rb, lengths), lengths
        )
        both = T.concat([fw, bw], axis=2)  # (B, T, 2H)
        return attention_pool(both, self.attn_W, self.attn_b, self.attn_v, mask)

    def forward_pair(
        self,
        Ea: np.ndarray,
        lengths_a: np.ndarray,
        Eb: np.ndarray,
        lengths_b: np.ndarray,
    ) -> Tensor:
        psi_a = self.utterance_embedding(Ea, lengths_a)
        psi_b = self.utterance_embedding(Eb, lengths_b)
        h = T.concat([psi_a, psi_b], axis=1)
        last = len(self.mlp_w) - 1
        for k, (w, b) in enumerate(zip(self.mlp_w, self.mlp_b)):
            h = T.add(T.matmul(h, w), b)
            if k < last:
                h = T.relu(h)
        return h

    def forward_batch(self, samples) -> Tensor:
        Ea, la = _pad_stack([s[0] for s in samples])
        Eb, lb = _pad_stack([s[1] for s in samples])
        return self.forward_pair(Ea, la, Eb, lb)

    def state(self) -> dict:
        out = {
            "layer_w": self.layer_w.data,
            "lstm_fw": self.lstm_fw.data,
            "lstm_fb": self.lstm_fb.data,
            "lstm_rw": self.lstm_rw.data,
            "lstm_rb": self.lstm_rb.data,
            "attn_W": self.attn_W.data,
            "attn_b": self.attn_b.data,
            "attn_v": self.attn_v.data,
        }
        for k in range(len(self.mlp_w)):
            out[f"mlp_w{k}"] = self.mlp_w[k].data
            out[f"mlp_b{k}"] = self.mlp_b[k].data
        return out

    def load_state(self, arrays: dict) -> None:
        for name, param in zip(
            ["layer_w", "lstm_fw", "lstm_fb", "lstm_rw", "lstm_rb", "attn_W", "attn_b", "attn_v"],
            [self.layer_w, self.lstm_fw, self.lstm_fb, self.lstm_rw, self.lstm_rb,
             self.attn_W, self.attn_b, self.attn_v],
        ):
            param.data = np.asarray(arrays[name], dtype=np.float64)
        for k in range(len(self.mlp_w)):
            self.mlp_w[k].data = np.asarray(arrays[f"mlp_w{k}"], dtype=np.float64)
            self.mlp_b[k].data = np.asarray(arrays[f"mlp_b{k}"], dtype=np.float64)


def _pad_stack(tensors):
    """Stack (L, T_i, D) arrays into (B, L, Tmax, D) plus lengths."""
    lengths = np.array([t.shape[1] for t in tensors], dtype=int)
    L, D = tensors[0].shape[0], tensors[0].shape[2]
    Tmax = int(lengths.max())
    out = np.zeros((len(tensors), L, Tmax, D))
    for i, t in enumerate(tensors):
        out[i, :, : t.shape[1]] = t
    return out, lengths
