"""Pearson/CCC metrics, the 10-fold CV harness, and report rendering.

Scoring is pooled: held-out predictions from all folds are concatenated
and each axis gets one Pearson and one CCC over the pool.  Feature
selection and standardization happen inside each fold's training split,
never globally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .axes import AXIS_IDS
from .errors import ConstantInput, TooFewPairs

DESIGNATED_FOLD = 0  # the one judged by external models
TIE_EPS = 0.005


def pearson(x, y) -> float | None:
    """Sample Pearson r; None (undefined marker) for constant input."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise ConstantInput("pearson needs two equal-length vectors of size >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt((xc**2).sum())
    sy = np.sqrt((yc**2).sum())
    if sx == 0.0 or sy == 0.0:
        return None
    return float((xc @ yc) / (sx * sy))


def ccc(x, y) -> float:
    """Lin's concordance: 2 cov / (var_x + var_y + (mx - my)^2).

    Population (1/n) moments.  Total by convention: 0.0 when the
    denominator vanishes (both inputs constant with equal means), which
    also covers the constant-prediction case (cov = 0).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise ConstantInput("ccc needs two equal-length vectors of size >= 2")
    mx, my = x.mean(), y.mean()
    vx = ((x - mx) ** 2).mean()
    vy = ((y - my) ** 2).mean()
    cov = ((x - mx) * (y - my)).mean()
    denom = vx + vy + (mx - my) ** 2
    if denom == 0.0:
        return 0.0
    return float(2.0 * cov / denom)


@dataclass
class FoldPlan:
    k: int
    seed: int
    assignments: dict  # pair_id -> fold index

    def fold_ids(self, fold: int) -> list:
        return [pid for pid, f in self.assignments.items() if f == fold]

    def sizes(self) -> list[int]:
        counts = [0] * self.k
        for f in self.assignments.values():
            counts[f] += 1
        return counts


def make_folds(pair_ids, k: int = 10, seed: int = 0) -> FoldPlan:
    """Seeded shuffle, then round-robin assignment (sizes differ by <= 1)."""
    pair_ids = sorted(pair_ids)
    if len(pair_ids) < k:
        raise TooFewPairs(f"{len(pair_ids)} pairs for k={k}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(pair_ids))
    assignments = {pair_ids[j]: i % k for i, j in enumerate(perm)}
    return FoldPlan(k, seed, assignments)


@dataclass
class ResultTable:
    """rows: axes A..I; columns: methods; cells: (pearson or None, ccc)."""

    methods: list
    cells: dict  # (axis, method) -> (float | None, float)
    meta: dict = field(default_factory=dict)

    def row(self, axis):
        return {m: self.cells[(axis, m)] for m in self.methods}


@dataclass
class CvDiagnostics:
    selections: dict = field(default_factory=dict)  # (fold, axis) -> SelectionReport


def score_pooled(predictions: np.ndarray, targets: np.ndarray, method: str) -> dict:
    """Per-axis (pearson, ccc) cells over pooled predictions."""
    cells = {}
    for i, axis in enumerate(AXIS_IDS):
        cells[(axis, method)] = (
            pearson(predictions[:, i], targets[:, i]),
            ccc(predictions[:, i], targets[:, i]),
        )
    return cells


def cross_validate(methods: dict, dataset, plan: FoldPlan):
    """Train/predict every method over the plan; pooled per-axis scoring.

    methods: name -> method object with
        fit(train_pairs, dataset, fold) -> state
        predict(state, test_pairs, dataset) -> (n, 9) array
    dataset must provide .pairs (list of UtterancePair) and .label_matrix
    (pair_id -> length-9 array).  Returns (ResultTable, CvDiagnostics).
    """
    diagnostics = CvDiagnostics()
    preds: dict[str, list] = {name: [] for name in methods}
    targets: list[np.ndarray] = []
    pair_by_id = {p.pair_id: p for p in dataset.pairs}

    for fold in range(plan.k):
        test_ids = sorted(plan.fold_ids(fold))
        train_ids = sorted(set(plan.assignments) - set(test_ids))
        train_pairs = [pair_by_id[i] for i in train_ids]
        test_pairs = [pair_by_id[i] for i in test_ids]
        for name, method in methods.items():
            state = method.fit(train_pairs, dataset, fold)
            out = np.asarray(method.predict(state, test_pairs, dataset))
            preds[name].append(out)
            reports = getattr(state, "selections", None)
            if reports:
                for axis, report in reports.items():
                    diagnostics.selections[(fold, name, axis)] = report
        targets.append(np.stack([dataset.label_matrix[i] for i in test_ids]))

    target_mat = np.concatenate(targets)
    cells = {}
    for name in methods:
        cells.update(score_pooled(np.concatenate(preds[name]), target_mat, name))
    table = ResultTable(list(methods), cells, {"k": plan.k, "seed": plan.seed})
    return table, diagnostics


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.3f}"


def _flag_best(row_values: dict, metric_idx: int) -> set:
    finite = {m: v[metric_idx] for m, v in row_values.items() if v[metric_idx] is not None}
    if not finite:
        return set()
    best = max(finite.values())
    return {m for m, v in finite.items() if v >= best - TIE_EPS}


def render_report(table: ResultTable, fmt: str = "markdown") -> str:
    """Render both metrics, flagging the best method per row (ties share)."""
    if fmt not in ("markdown", "csv"):
        raise ValueError(f"format must be markdown or csv, got {fmt!r}")
    header_meta = [f"# {k}={v}" for k, v in sorted(table.meta.items())]
    lines = list(header_meta)
    for metric_idx, metric in ((0, "pearson"), (1, "ccc")):
        if fmt == "markdown":
            lines.append(f"\n## {metric}")
            lines.append("| axis | " + " | ".join(table.methods) + " |")
            lines.append("|---" * (len(table.methods) + 1) + "|")
        else:
            lines.append(f"metric={metric}")
            lines.append("axis," + ",".join(table.methods))
        for axis in AXIS_IDS:
            row = table.row(axis)
            best = _flag_best(row, metric_idx)
            cells = []
            for m in table.methods:
                text = _fmt(row[m][metric_idx])
                if m in best:
                    text = f"**{text}**" if fmt == "markdown" else text + "*"
                cells.append(text)
            if fmt == "markdown":
                lines.append(f"| {axis} | " + " | ".join(cells) + " |")
            else:
                lines.append(f"{axis}," + ",".join(cells))
    return "\n".join(lines) + "\n"
