"""Optimizers, the training loop, and finite-difference gradient checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceDetected
from . import tensor as T
from .layers import FeatNet, FeatNetConfig, SslHead, SslHeadConfig, attention_pool
from .tensor import Tensor


@dataclass
class TrainConfig:
    optimizer: str = "adam"  # adam | adamw
    lr: float = 0.001
    weight_decay: float = 0.01  # adamw only (decoupled)
    batch_size: int = 8
    max_epochs: int = 500
    patience: int = 20
    val_fraction: float = 0.1
    seed: int = 0
    clip_norm: float = 5.0
    augment_antisymmetric: bool = True

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 1:
            raise ValueError("lr must be >= 0 and batch_size >= 1")


class Adam:
    """Adam / AdamW (decoupled weight decay) with bias correction."""

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0, decoupled=False):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.decoupled = decoupled
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def clip_gradients(self, max_norm: float):
        total = 0.0
        for p in self.params:
            if p.grad is not None:
                total += float((p.grad**2).sum())
        norm = np.sqrt(total)
        if norm > max_norm > 0:
            scale = max_norm / norm
            for p in self.params:
                if p.grad is not None:
                    p.grad *= scale

    def step(self):
        self.t += 1
        for k, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if self.decoupled and self.weight_decay:
                p.data = p.data - self.lr * self.weight_decay * p.data
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            mhat = self.m[k] / (1.0 - self.b1**self.t)
            vhat = self.v[k] / (1.0 - self.b2**self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(params, cfg: TrainConfig) -> Adam:
    if cfg.optimizer == "adam":
        return Adam(params, cfg.lr)
    if cfg.optimizer == "adamw":
        return Adam(params, cfg.lr, weight_decay=cfg.weight_decay, decoupled=True)
    raise ValueError(f"unknown optimizer {cfg.optimizer!r}")


@dataclass
class TrainResult:
    curve: list  # (epoch, train_mse, val_mse or nan)
    best_epoch: int
    steps: int


def _swap(sample):
    a, b, y = sample
    return (b, a, -np.asarray(y))


def _batch_loss(model, batch) -> T.Tensor:
    pred = model.forward_batch([(s[0], s[1]) for s in batch])
    target = np.stack([np.asarray(s[2], dtype=np.float64) for s in batch])
    return T.mse(pred, target)


def _eval_mse(model, samples, batch_size) -> float:
    if not samples:
        return float("nan")
    total, count = 0.0, 0
    for lo in range(0, len(samples), batch_size):
        batch = samples[lo : lo + batch_size]
        loss = _batch_loss(model, batch)
        n = sum(np.asarray(s[2]).size for s in batch)
        total += float(loss.data) * n
        count += n
    return total / count


def train(model, samples, cfg: TrainConfig) -> TrainResult:
    """Mini-batch training with seeded shuffles and early stopping.

    samples: list of (input_a, input_b, target) tuples; inputs are
    whatever the model's forward_batch expects.  Deterministic given the
    seed: identical runs produce bit-identical loss curves.
    """
    if not samples:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    opt = make_optimizer(params, cfg)

    samples = list(samples)
    if cfg.val_fraction > 0 and len(samples) >= 10:
        n_val = max(1, int(round(cfg.val_fraction * len(samples))))
        perm = rng.permutation(len(samples))
        val = [samples[i] for i in perm[:n_val]]
        trainset = [samples[i] for i in perm[n_val:]]
    else:
        val = []
        trainset = samples

    if cfg.augment_antisymmetric:
        trainset = trainset + [_swap(s) for s in trainset]

    best_val = np.inf
    best_state = {k: v.copy() for k, v in model.state().items()}
    best_epoch = 0
    since_best = 0
    curve = []
    steps = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(trainset))
        epoch_loss, seen = 0.0, 0
        for lo in range(0, len(order), cfg.batch_size):
            batch = [trainset[i] for i in order[lo : lo + cfg.batch_size]]
            opt.zero_grad()
            loss = _batch_loss(model, batch)
            if not np.isfinite(loss.data):
                raise DivergenceDetected(f"loss became {float(loss.data)} at step {steps}")
            loss.backward()
            opt.clip_gradients(cfg.clip_norm)
            opt.step()
            steps += 1
            epoch_loss += float(loss.data) * len(batch)
            seen += len(batch)
        train_mse = epoch_loss / seen
        val_mse = _eval_mse(model, val, cfg.batch_size)
        curve.append((epoch, train_mse, val_mse))
        if val:
            if val_mse < best_val - 1e-12:
                best_val = val_mse
                best_state = {k: v.copy() for k, v in model.state().items()}
                best_epoch = epoch
                since_best = 0
            else:
                since_best += 1
                if since_best > cfg.patience:
                    break
        else:
            best_epoch = epoch
    if val:
        model.load_state(best_state)
    return TrainResult(curve, best_epoch, steps)


def write_loss_curve(path, curve) -> None:
    lines = ["epoch,train_mse,val_mse"]
    for epoch, tr, va in curve:
        lines.append(f"{epoch},{tr:.9g},{va:.9g}")
    from pathlib import Path

    Path(path).write_text("\n".join(lines) + "\n")


# gradient checking ---------------------------------------------------------


def _max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def _check(build_loss, leaves, eps: float) -> float:
    """Compare reverse-mode grads to central differences on every leaf entry."""
    for leaf in leaves:
        leaf.grad = None
    loss = build_loss()
    loss.backward()
    analytic = [leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]
    worst = 0.0
    for leaf, ga in zip(leaves, analytic):
        gn = np.zeros_like(leaf.data)
        flat = leaf.data.reshape(-1)
        gn_flat = gn.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            up = float(build_loss().data)
            flat[idx] = orig - eps
            down = float(build_loss().data)
            flat[idx] = orig
            gn_flat[idx] = (up - down) / (2.0 * eps)
        worst = max(worst, _max_rel_error(ga, gn))
    return worst


def grad_check(block: str, eps: float = 1e-5, seed: int = 0) -> float:
    """Finite-difference check for one named block; returns max rel error."""
    rng = np.random.default_rng(seed)

    if block == "linear":
        w = Tensor(rng.standard_normal((4, 3)), True)
        b = Tensor(rng.standard_normal(3), True)
        x = Tensor(rng.standard_normal((5, 4)), True)
        return _check(lambda: T.mean_all(T.mul(T.add(T.matmul(x, w), b), T.add(T.matmul(x, w), b))), [w, b, x], eps)

    if block in ("relu", "tanh", "sigmoid"):
        fn = {"relu": T.relu, "tanh": T.tanh, "sigmoid": T.sigmoid}[block]
        raw = rng.standard_normal((6, 5))
        # keep values away from the ReLU kink so central differences are valid
        x = Tensor(raw + 0.2 * np.sign(raw), True)
        c = rng.standard_normal((6, 5))
        return _check(lambda: T.mean_all(T.mul(fn(x), Tensor(c))), [x], eps)

    if block == "softmax":
        x = Tensor(rng.standard_normal((4, 6)), True)
        c = rng.standard_normal((4, 6))
        return _check(lambda: T.mean_all(T.mul(T.softmax(x, axis=1), Tensor(c))), [x], eps)

    if block == "lstm_cell":
        H, D, steps = 8, 5, 5
        w = Tensor(rng.standard_normal((D + H, 4 * H)) * 0.4, True)
        b = Tensor(rng.standard_normal(4 * H) * 0.1, True)
        x = Tensor(rng.standard_normal((2, steps, D)), True)
        lengths = np.array([steps, steps - 2])
        c = rng.standard_normal((2, steps, H))
        return _check(
            lambda: T.mean_all(T.mul(T.lstm_sequence(x, w, b, lengths), Tensor(c))),
            [w, b, x],
            eps,
        )

    if block == "attention":
        B, Tm, H, A = 2, 4, 6, 5
        h = Tensor(rng.standard_normal((B, Tm, H)), True)
        W = Tensor(rng.standard_normal((H, A)) * 0.5, True)
        b = Tensor(rng.standard_normal(A) * 0.1, True)
        v = Tensor(rng.standard_normal(A) * 0.5, True)
        mask = np.arange(Tm)[None, :] < np.array([[4], [3]])[:, 0][:, None]
        c = rng.standard_normal((B, H))
        return _check(
            lambda: T.mean_all(T.mul(attention_pool(h, W, b, v, mask), Tensor(c))),
            [h, W, b, v],
            eps,
        )

    if block == "mse":
        x = Tensor(rng.standard_normal((3, 9)), True)
        y = rng.standard_normal((3, 9))
        return _check(lambda: T.mse(x, y), [x], eps)

    if block == "featnet":
        net = FeatNet(FeatNetConfig(input_dim=8), seed=seed)
        xa = rng.standard_normal((3, 4))
        xb = rng.standard_normal((3, 4))
        y = rng.standard_normal((3, 9))
        return _check(lambda: T.mse(net.forward(xa, xb), y), net.parameters(), eps)

    if block == "sslhead":
        cfg = SslHeadConfig(n_layers=2, frame_dim=4, lstm_hidden=3, attn_dim=3, mlp_hidden=(5, 4))
        net = SslHead(cfg, seed=seed)
        Ea = rng.standard_normal((2, 2, 5, 4))
        Eb = rng.standard_normal((2, 2, 6, 4))
        la = np.array([5, 3])
        lb = np.array([6, 4])
        y = rng.standard_normal((2, 9))
        return _check(lambda: T.mse(net.forward_pair(Ea, la, Eb, lb), y), net.parameters(), eps)

    raise ValueError(f"unknown block {block!r}")


GRAD_CHECK_BLOCKS = (
    "linear",
    "relu",
    "tanh",
    "sigmoid",
    "softmax",
    "lstm_cell",
    "attention",
    "mse",
    "featnet",
    "sslhead",
)
