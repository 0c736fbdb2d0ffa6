"""Glue between corpus artifacts, regressors, nets, and the CV harness.

A "method" is anything with fit(train_pairs, dataset, fold) -> state and
predict(state, test_pairs, dataset) -> (n, 9).  Selection and
standardization always happen inside fit, on training data only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import regress
from .axes import AXIS_IDS
from .corpus import load_labels, load_manifest, read_embeddings
from .errors import ConfigError
from .features import FEATURE_NAMES, read_features_csv
from .net import FeatNet, FeatNetConfig, SslHead, SslHeadConfig, TrainConfig, train
from .serialize import load_model, save_model

# the ten descriptor/functional columns of the reference correlation table;
# the neural feature baseline consumes these from both utterances
TABLE_FEATURES = (
    "F0_mean",
    "F0_p20",
    "F0_p50",
    "F0_p80",
    "mfcc1_mean",
    "mfcc2_mean",
    "alphaRatio_mean",
    "hammarberg_mean",
    "F1bandwidth_mean",
    "spectralFlux_mean",
)

CLASSICAL_KINDS = ("linear", "ridge", "pls2", "rf", "gbdt", "svr")
METHOD_NAMES = CLASSICAL_KINDS + ("featnet", "sslhead")


@dataclass
class PairDataset:
    pairs: list
    labels: dict  # pair_id -> ImpressionVector
    features: dict | None = None  # utt_id -> FeatureVector
    embeddings: dict | None = None  # utt_id -> EmbeddingSequence

    @property
    def label_matrix(self) -> dict:
        return {pid: iv.values for pid, iv in self.labels.items()}

    def feature_row(self, utt_id: str, names) -> np.ndarray:
        return self.features[utt_id].as_array(names)

    def diff_matrix(self, pairs, names=FEATURE_NAMES) -> np.ndarray:
        return np.stack(
            [
                self.feature_row(p.utt_b, names) - self.feature_row(p.utt_a, names)
                for p in pairs
            ]
        )

    def label_rows(self, pairs) -> np.ndarray:
        return np.stack([self.labels[p.pair_id].values for p in pairs])


def load_dataset(corpus_dir, features_csv=None, with_embeddings: bool = False) -> PairDataset:
    """Load a corpus directory produced by the synthesizer or by hand."""
    corpus_dir = Path(corpus_dir)
    pairs = load_manifest(corpus_dir / "pairs.jsonl")
    labels = load_labels(corpus_dir / "labels.csv")
    features = None
    if features_csv is not None and Path(features_csv).exists():
        features = read_features_csv(features_csv)
    embeddings = None
    if with_embeddings:
        emb_dir = corpus_dir / "emb"
        embeddings = {
            path.stem: read_embeddings(path) for path in sorted(emb_dir.glob("*.rie1"))
        }
    return PairDataset(pairs, labels, features, embeddings)


@dataclass
class ClassicalState:
    models: dict
    selections: dict


FITTERS = {
    "linear": lambda X, y, axis, names, hp, seed: regress.fit_linear(
        X, y, dimension=axis, names=names
    ),
    "ridge": lambda X, y, axis, names, hp, seed: regress.fit_ridge(
        X, y, alpha=hp.get("alpha", 0.5), dimension=axis, names=names
    ),
    "pls2": lambda X, y, axis, names, hp, seed: regress.fit_pls2(
        X, y, n_components=hp.get("n_components", 5), dimension=axis, names=names
    ),
    "rf": lambda X, y, axis, names, hp, seed: regress.fit_rf(
        X, y, n_trees=hp.get("n_trees", 300), seed=seed, dimension=axis, names=names
    ),
    "gbdt": lambda X, y, axis, names, hp, seed: regress.fit_gbdt(
        X,
        y,
        n_estimators=hp.get("n_estimators", 100),
        max_depth=hp.get("max_depth", 3),
        learning_rate=hp.get("learning_rate", 0.1),
        seed=seed,
        dimension=axis,
        names=names,
    ),
    "svr": lambda X, y, axis, names, hp, seed: regress.fit_svr(
        X,
        y,
        C=hp.get("C", 10.0),
        epsilon=hp.get("epsilon", 0.1),
        gamma=hp.get("gamma", "scale"),
        dimension=axis,
        names=names,
    ),
}


@dataclass
class ClassicalMethod:
    """Per-axis top-k selection on difference features, one model per axis."""

    kind: str
    k: int = 8
    hyper: dict = field(default_factory=dict)
    seed: int = 0
    multi_output_pls: bool = False

    def fit(self, train_pairs, dataset: PairDataset, fold: int) -> ClassicalState:
        if self.kind not in FITTERS:
            raise ConfigError(f"unknown classical kind {self.kind!r}")
        X = dataset.diff_matrix(train_pairs)
        Y = dataset.label_rows(train_pairs)
        fold_seed = int(np.random.SeedSequence((self.seed, fold)).generate_state(1)[0])

        models, selections = {}, {}
        if self.kind == "pls2" and self.multi_output_pls:
            union: list[str] = []
            for i, axis in enumerate(AXIS_IDS):
                report = regress.rank_features(X, Y[:, i], FEATURE_NAMES, self.k, axis)
                selections[axis] = report
                union.extend(n for n in report.selected if n not in union)
            idx = [FEATURE_NAMES.index(n) for n in union]
            model = regress.fit_pls2(
                X[:, idx],
                Y,
                n_components=self.hyper.get("n_components", 5),
                dimension="*",
                names=union,
            )
            models["*"] = model
            return ClassicalState(models, selections)

        for i, axis in enumerate(AXIS_IDS):
            report = regress.rank_features(X, Y[:, i], FEATURE_NAMES, self.k, axis)
            selections[axis] = report
            idx = [FEATURE_NAMES.index(n) for n in report.selected]
            models[axis] = FITTERS[self.kind](
                X[:, idx], Y[:, i], axis, report.selected, self.hyper, fold_seed
            )
        return ClassicalState(models, selections)

    def predict(self, state: ClassicalState, test_pairs, dataset: PairDataset) -> np.ndarray:
        if "*" in state.models:
            model = state.models["*"]
            X = dataset.diff_matrix(test_pairs, model.feature_names)
            return regress.predict(model, X, model.feature_names)
        cols = []
        for axis in AXIS_IDS:
            model = state.models[axis]
            X = dataset.diff_matrix(test_pairs, model.feature_names)
            cols.append(regress.predict(model, X, model.feature_names))
        return np.column_stack(cols)


@dataclass
class FeatNetState:
    net: FeatNet
    mean: np.ndarray
    scale: np.ndarray
    names: tuple


@dataclass
class FeatNetMethod:
    """Concatenated-feature MLP over the ten table descriptors."""

    train_cfg: TrainConfig = field(
        default_factory=lambda: TrainConfig(optimizer="adam", lr=0.001)
    )
    names: tuple = TABLE_FEATURES
    seed: int = 0

    def fit(self, train_pairs, dataset: PairDataset, fold: int) -> FeatNetState:
        utts = sorted({u for p in train_pairs for u in (p.utt_a, p.utt_b)})
        rows = np.stack([dataset.feature_row(u, self.names) for u in utts])
        mean, scale = regress.standardize_fit(rows)
        std = {u: (dataset.feature_row(u, self.names) - mean) / scale for u in utts}
        samples = [
            (std[p.utt_a], std[p.utt_b], dataset.labels[p.pair_id].values)
            for p in train_pairs
        ]
        fold_seed = int(np.random.SeedSequence((self.seed, fold)).generate_state(1)[0])
        cfg = TrainConfig(**{**self.train_cfg.__dict__, "seed": fold_seed})
        net = FeatNet(FeatNetConfig(input_dim=2 * len(self.names)), seed=fold_seed)
        train(net, samples, cfg)
        return FeatNetState(net, mean, scale, self.names)

    def predict(self, state: FeatNetState, test_pairs, dataset: PairDataset) -> np.ndarray:
        xa = np.stack(
            [
                (dataset.feature_row(p.utt_a, state.names) - state.mean) / state.scale
                for p in test_pairs
            ]
        )
        xb = np.stack(
            [
                (dataset.feature_row(p.utt_b, state.names) - state.mean) / state.scale
                for p in test_pairs
            ]
        )
        return state.net.forward(xa, xb).data


@dataclass
class SslHeadState:
    net: SslHead


@dataclass
class SslHeadMethod:
    """BiLSTM + attention head over stored frame embeddings."""

    train_cfg: TrainConfig = field(
        default_factory=lambda: TrainConfig(optimizer="adamw", lr=0.002)
    )
    seed: int = 0
    lstm_hidden: int = 64

    def _samples(self, pairs, dataset):
        out = []
        for p in pairs:
            Ea = dataset.embeddings[p.utt_a].data.astype(np.float64)
            Eb = dataset.embeddings[p.utt_b].data.astype(np.float64)
            out.append((Ea, Eb, dataset.labels[p.pair_id].values))
        return out

    def fit(self, train_pairs, dataset: PairDataset, fold: int) -> SslHeadState:
        if dataset.embeddings is None:
            raise ConfigError("dataset has no embeddings for the sslhead method")
        first = dataset.embeddings[train_pairs[0].utt_a]
        cfg_net = SslHeadConfig(
            n_layers=first.layers, frame_dim=first.dim, lstm_hidden=self.lstm_hidden
        )
        fold_seed = int(np.random.SeedSequence((self.seed, fold)).generate_state(1)[0])
        cfg = TrainConfig(**{**self.train_cfg.__dict__, "seed": fold_seed})
        net = SslHead(cfg_net, seed=fold_seed)
        train(net, self._samples(train_pairs, dataset), cfg)
        return SslHeadState(net)

    def predict(self, state: SslHeadState, test_pairs, dataset: PairDataset) -> np.ndarray:
        samples = self._samples(test_pairs, dataset)
        outs = []
        for lo in range(0, len(samples), 16):
            chunk = samples[lo : lo + 16]
            outs.append(state.net.forward_batch([(s[0], s[1]) for s in chunk]).data)
        return np.concatenate(outs)


def make_method(name: str, seed: int = 0, k: int = 8, hyper: dict | None = None,
                train_cfg: TrainConfig | None = None):
    hyper = hyper or {}
    if name in CLASSICAL_KINDS:
        return ClassicalMethod(name, k=k, hyper=hyper, seed=seed)
    if name == "featnet":
        cfg = train_cfg or TrainConfig(optimizer="adam", lr=0.001)
        return FeatNetMethod(train_cfg=cfg, seed=seed)
    if name == "sslhead":
        cfg = train_cfg or TrainConfig(optimizer="adamw", lr=0.002)
        return SslHeadMethod(train_cfg=cfg, seed=seed)
    raise ConfigError(f"unknown method {name!r}")


# neural checkpoints in the model container ---------------------------------


def save_featnet(path, state: FeatNetState) -> None:
    arrays = dict(state.net.state())
    arrays["std_mean"] = state.mean
    arrays["std_scale"] = state.scale
    arrays["input_dim"] = np.array(float(state.net.cfg.input_dim))
    save_model(path, "featnet", "*", state.names, arrays)


def load_featnet(path) -> FeatNetState:
    kind, _, names, arrays = load_model(path)
    if kind != "featnet":
        raise ConfigError(f"{path}: kind {kind!r} is not featnet")
    net = FeatNet(FeatNetConfig(input_dim=int(float(arrays["input_dim"]))))
    net.load_state(arrays)
    return FeatNetState(net, arrays["std_mean"], arrays["std_scale"], names)


def save_sslhead(path, state: SslHeadState) -> None:
    arrays = dict(state.net.state())
    cfg = state.net.cfg
    arrays["cfg"] = np.array(
        [cfg.n_layers, cfg.frame_dim, cfg.lstm_hidden, cfg.attn_dim], dtype=np.float64
    )
    save_model(path, "sslhead", "*", (), arrays)


def load_sslhead(path) -> SslHeadState:
    kind, _, _, arrays = load_model(path)
    if kind != "sslhead":
        raise ConfigError(f"{path}: kind {kind!r} is not sslhead")
    L, D, H, A = (int(v) for v in arrays["cfg"])
    net = SslHead(SslHeadConfig(n_layers=L, frame_dim=D, lstm_hidden=H, attn_dim=A))
    net.load_state(arrays)
    return SslHeadState(net)
