import numpy as np
import pytest

from rie.axes import AXIS_IDS
from rie.corpus import ImpressionVector, UtterancePair
from rie.errors import ConstantInput, TooFewPairs
from rie.evaluate import (
    FoldPlan,
    ResultTable,
    ccc,
    cross_validate,
    make_folds,
    pearson,
    render_report,
    score_pooled,
)
from rie.pipeline import PairDataset


class TestPearson:
    def test_identity(self):
        assert pearson([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0)

    def test_perfect_linearity(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-12)

    def test_hand_case(self):
        x = np.array([1.0, 2.0, 3.0])
        y = np.array([3.0, 1.0, 2.0])
        xm, ym = x - x.mean(), y - y.mean()
        expected = (xm * ym).sum() / np.sqrt((xm**2).sum() * (ym**2).sum())
        assert pearson(x, y) == pytest.approx(expected, abs=1e-15)

    def test_constant_marker(self):
        assert pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]) is None

    def test_length_guard(self):
        with pytest.raises(ConstantInput):
            pearson([1.0], [2.0])


class TestCcc:
    def test_identity(self):
        assert ccc([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0)

    def test_four_elevenths(self):
        assert ccc([1, 2, 3], [2, 4, 6]) == pytest.approx(4.0 / 11.0, abs=1e-12)

    def test_mean_shift_penalty(self):
        x = np.array([1.0, 2.0, 3.0])
        assert abs(ccc(x, x + 0.7)) < abs(pearson(x, x + 0.7))

    def test_constant_prediction_is_zero(self):
        assert ccc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]) == 0.0

    def test_both_constant_equal_means(self):
        assert ccc([2.0, 2.0], [2.0, 2.0]) == 0.0

    def test_magnitude_bounded_by_pearson(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            n = rng.integers(2, 12)
            x = rng.standard_normal(n)
            y = rng.standard_normal(n)
            p = pearson(x, y)
            if p is None:
                continue
            assert abs(ccc(x, y)) <= abs(p) + 1e-12


class TestFolds:
    def test_814_sizes(self):
        ids = [f"p{i:04d}" for i in range(814)]
        plan = make_folds(ids, k=10, seed=1)
        sizes = sorted(plan.sizes())
        assert sizes == [81] * 6 + [82] * 4

    def test_leave_one_out(self):
        ids = [f"p{i}" for i in range(12)]
        plan = make_folds(ids, k=12, seed=0)
        assert plan.sizes() == [1] * 12

    def test_seed_determinism(self):
        ids = [f"p{i}" for i in range(50)]
        a = make_folds(ids, 5, seed=3)
        b = make_folds(ids, 5, seed=3)
        c = make_folds(ids, 5, seed=4)
        assert a.assignments == b.assignments
        assert a.assignments != c.assignments

    def test_partition(self):
        ids = [f"p{i}" for i in range(37)]
        plan = make_folds(ids, 5, seed=2)
        seen = [pid for f in range(5) for pid in plan.fold_ids(f)]
        assert sorted(seen) == sorted(ids)

    def test_too_few(self):
        with pytest.raises(TooFewPairs):
            make_folds(["a", "b"], k=10, seed=0)

    def test_input_order_irrelevant(self):
        ids = [f"p{i}" for i in range(30)]
        a = make_folds(ids, 5, seed=9)
        b = make_folds(ids[::-1], 5, seed=9)
        assert a.assignments == b.assignments


def _toy_dataset(n_pairs=30, seed=0):
    rng = np.random.default_rng(seed)
    pairs = [UtterancePair(f"p{i:03d}", f"u{2*i}", f"u{2*i+1}", "s", "t") for i in range(n_pairs)]
    labels = {
        p.pair_id: ImpressionVector(np.clip(rng.standard_normal(9), -3, 3)) for p in pairs
    }
    return PairDataset(pairs, labels)


class _OracleMethod:
    """Deliberately leaks the labels; every cell must be (1.0, 1.0)."""

    def fit(self, train_pairs, dataset, fold):
        return dataset

    def predict(self, state, test_pairs, dataset):
        return np.stack([dataset.labels[p.pair_id].values for p in test_pairs])


class _ConstantMethod:
    def fit(self, train_pairs, dataset, fold):
        return None

    def predict(self, state, test_pairs, dataset):
        return np.zeros((len(test_pairs), 9))


class TestCrossValidate:
    def test_oracle_scores_one(self):
        ds = _toy_dataset()
        plan = make_folds([p.pair_id for p in ds.pairs], 5, seed=1)
        table, _ = cross_validate({"oracle": _OracleMethod()}, ds, plan)
        for axis in AXIS_IDS:
            p, c = table.cells[(axis, "oracle")]
            assert p == pytest.approx(1.0, abs=1e-12)
            assert c == pytest.approx(1.0, abs=1e-12)

    def test_constant_predictor_convention(self):
        ds = _toy_dataset()
        plan = make_folds([p.pair_id for p in ds.pairs], 5, seed=1)
        table, _ = cross_validate({"const": _ConstantMethod()}, ds, plan)
        for axis in AXIS_IDS:
            p, c = table.cells[(axis, "const")]
            assert p is None
            assert c == 0.0

    def test_pooled_not_averaged(self):
        # folds with opposite per-fold offsets: per-fold Pearson would be 1.0
        # everywhere, pooled must be lower for the offset method
        pairs = [UtterancePair(f"p{i:03d}", f"u{2*i}", f"u{2*i+1}", "s", "t") for i in range(20)]
        rng = np.random.default_rng(5)
        base = rng.uniform(-1, 1, (20, 9))
        labels = {p.pair_id: ImpressionVector(base[i]) for i, p in enumerate(pairs)}
        ds = PairDataset(pairs, labels)
        plan = make_folds([p.pair_id for p in ds.pairs], 2, seed=0)

        class OffsetMethod:
            def fit(self, train_pairs, dataset, fold):
                return 2.0 if fold == 0 else -2.0

            def predict(self, state, test_pairs, dataset):
                return np.stack(
                    [0.1 * dataset.labels[p.pair_id].values + state for p in test_pairs]
                )

        table, _ = cross_validate({"off": OffsetMethod()}, ds, plan)
        for axis in AXIS_IDS:
            p, _ = table.cells[(axis, "off")]
            assert p is not None and p < 0.9  # per-fold averaging would give 1.0

    def test_selection_recomputed_per_fold(self):
        # plant a feature that predicts the label only inside fold 0's pairs;
        # training without fold 0 must rank it differently than training with it
        from rie.features import FEATURE_NAMES
        from rie.pipeline import ClassicalMethod

        rng = np.random.default_rng(9)
        n = 40
        pairs = [UtterancePair(f"p{i:03d}", f"a{i}", f"b{i}", "s", "t") for i in range(n)]
        plan = make_folds([p.pair_id for p in pairs], 4, seed=3)
        fold0 = set(plan.fold_ids(0))
        y = rng.uniform(-2, 2, n)
        labels = {p.pair_id: ImpressionVector(np.tile(y[i], 9)) for i, p in enumerate(pairs)}

        from rie.features import FeatureVector

        features = {}
        plant = FEATURE_NAMES[0]
        for i, p in enumerate(pairs):
            row_a = dict(zip(FEATURE_NAMES, rng.uniform(-1, 1, len(FEATURE_NAMES))))
            row_b = dict(zip(FEATURE_NAMES, rng.uniform(-1, 1, len(FEATURE_NAMES))))
            plant_value = y[i] if p.pair_id in fold0 else rng.uniform(-2, 2)
            row_b[plant] = row_a[plant] + plant_value
            features[p.utt_a] = FeatureVector(p.utt_a, row_a)
            features[p.utt_b] = FeatureVector(p.utt_b, row_b)
        ds = PairDataset(pairs, labels, features)

        method = ClassicalMethod("ridge", k=4, seed=0)
        _, diag = cross_validate({"ridge": method}, ds, plan)
        sel_fold0 = diag.selections[(0, "ridge", "A")].selected
        # global selection (leaky) over all pairs
        X = ds.diff_matrix(ds.pairs)
        from rie.regress import rank_features

        leaky = rank_features(X, np.array([y[i] for i in range(n)]), FEATURE_NAMES, 4).selected
        assert plant in leaky
        assert plant not in sel_fold0


class TestMultiOutputPls:
    def test_union_feature_set_predicts_all_axes(self):
        from rie.features import FEATURE_NAMES, FeatureVector
        from rie.pipeline import ClassicalMethod

        rng = np.random.default_rng(21)
        pairs = [UtterancePair(f"p{i:03d}", f"a{i}", f"b{i}", "s", "t") for i in range(30)]
        features = {}
        for p in pairs:
            for u in (p.utt_a, p.utt_b):
                features[u] = FeatureVector(
                    u, dict(zip(FEATURE_NAMES, rng.uniform(-1, 1, len(FEATURE_NAMES))))
                )
        labels = {
            p.pair_id: ImpressionVector(np.clip(rng.standard_normal(9), -3, 3)) for p in pairs
        }
        ds = PairDataset(pairs, labels, features)
        method = ClassicalMethod("pls2", k=4, multi_output_pls=True)
        state = method.fit(ds.pairs, ds, fold=0)
        assert set(state.models) == {"*"}
        out = method.predict(state, ds.pairs[:5], ds)
        assert out.shape == (5, 9)
        assert len(state.selections) == 9


class TestRenderReport:
    def _table(self):
        cells = {}
        for axis in AXIS_IDS:
            cells[(axis, "m1")] = (0.5, 0.4)
            cells[(axis, "m2")] = (0.8, 0.7)
        return ResultTable(["m1", "m2"], cells, {"seed": 1})

    def test_best_flagged_every_row(self):
        text = render_report(self._table(), "markdown")
        assert text.count("**0.800**") == 9
        assert "**0.500**" not in text

    def test_tie_flags_both(self):
        cells = {}
        for axis in AXIS_IDS:
            cells[(axis, "m1")] = (0.799, 0.7)
            cells[(axis, "m2")] = (0.800, 0.7)
        text = render_report(ResultTable(["m1", "m2"], cells), "markdown")
        assert text.count("**0.799**") == 9 and text.count("**0.800**") == 9

    def test_csv_format(self):
        text = render_report(self._table(), "csv")
        assert "metric=pearson" in text and "metric=ccc" in text
        assert "A,0.500,0.800*" in text

    def test_none_rendered_as_na(self):
        cells = {(axis, "m"): (None, 0.0) for axis in AXIS_IDS}
        text = render_report(ResultTable(["m"], cells), "csv")
        assert "n/a" in text

    def test_golden_snapshot(self):
        # frozen output for a fixed table; guards formatting drift
        cells = {}
        for i, axis in enumerate(AXIS_IDS):
            cells[(axis, "ridge")] = (0.9 - 0.05 * i, 0.85 - 0.05 * i)
        text = render_report(ResultTable(["ridge"], cells, {"seed": 7}), "csv")
        lines = text.splitlines()
        assert lines[0] == "# seed=7"
        assert lines[1] == "metric=pearson"
        assert lines[2] == "axis,ridge"
        assert lines[3] == "A,0.900*"
        assert lines[11] == "I,0.500*"
