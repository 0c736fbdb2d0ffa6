import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rie.axes import AXIS_IDS
from rie.corpus import (
    EmbeddingSequence,
    ImpressionVector,
    RatingRecord,
    UtterancePair,
    aggregate_ratings,
    load_labels,
    load_manifest,
    load_ratings,
    read_embeddings,
    write_embeddings,
    write_labels,
    write_manifest,
)
from rie.errors import (
    BadMagic,
    DuplicatePairId,
    InsufficientRaters,
    NonFiniteValue,
    SchemaError,
    TruncatedFile,
    VersionMismatch,
)


def _pair_line(pair_id="p0", a="u0", b="u1"):
    return json.dumps(
        {"pair_id": pair_id, "utt_a": a, "utt_b": b, "speaker": "s", "text_id": "t"}
    )


class TestManifest:
    def test_two_valid_lines(self, tmp_path):
        p = tmp_path / "pairs.jsonl"
        p.write_text(_pair_line("p0") + "\n" + _pair_line("p1", "u2", "u3") + "\n")
        pairs = load_manifest(p)
        assert [x.pair_id for x in pairs] == ["p0", "p1"]

    def test_self_pair_rejected(self, tmp_path):
        p = tmp_path / "pairs.jsonl"
        p.write_text(_pair_line("p0", "u0", "u0") + "\n")
        with pytest.raises(SchemaError) as exc:
            load_manifest(p)
        assert "line 1" in str(exc.value)

    def test_duplicate_pair_id(self, tmp_path):
        p = tmp_path / "pairs.jsonl"
        p.write_text(_pair_line("p0") + "\n" + _pair_line("p0", "u2", "u3") + "\n")
        with pytest.raises(DuplicatePairId):
            load_manifest(p)

    def test_missing_field(self, tmp_path):
        p = tmp_path / "pairs.jsonl"
        p.write_text('{"pair_id": "p0", "utt_a": "u0"}\n')
        with pytest.raises(SchemaError):
            load_manifest(p)

    def test_round_trip(self, tmp_path):
        pairs = [UtterancePair(f"p{i}", f"u{2*i}", f"u{2*i+1}", "s", "t") for i in range(20)]
        path = tmp_path / "pairs.jsonl"
        write_manifest(path, pairs)
        assert load_manifest(path) == pairs


def _records(pair_id, ab_scores, ba_scores):
    recs = []
    for i, s in enumerate(ab_scores):
        recs.append(RatingRecord(pair_id, "AB", f"ab{i}", tuple([s] * 9)))
    for i, s in enumerate(ba_scores):
        recs.append(RatingRecord(pair_id, "BA", f"ba{i}", tuple([s] * 9)))
    return recs


class TestAggregation:
    def test_hand_case(self):
        # AB scores 5,6 -> +1,+2; BA scores 3,2 -> +1,+2; mean 1.5
        recs = _records("p0", [5, 6], [3, 2])
        out = aggregate_ratings(recs, min_raters=4)
        assert np.allclose(out["p0"].values, 1.5)

    def test_all_neutral(self):
        recs = _records("p0", [4] * 5, [4] * 5)
        out = aggregate_ratings(recs, min_raters=10)
        assert np.all(out["p0"].values == 0.0)

    def test_ab_only_scale_endpoint(self):
        recs = _records("p0", [7] * 10, [])
        out = aggregate_ratings(recs, min_raters=10)
        assert np.all(out["p0"].values == 3.0)

    def test_insufficient_raters(self):
        recs = _records("p0", [5] * 4, [3] * 4)
        with pytest.raises(InsufficientRaters) as exc:
            aggregate_ratings(recs, min_raters=10)
        assert exc.value.count == 8

    def test_order_permutation_invariance(self):
        recs = _records("p0", [5, 2, 7], [1, 4, 6, 3])
        a = aggregate_ratings(recs, min_raters=1)["p0"].values
        b = aggregate_ratings(recs[::-1], min_raters=1)["p0"].values
        assert np.array_equal(a, b)

    @settings(max_examples=100, deadline=None)
    @given(
        ab=st.lists(st.integers(1, 7), min_size=1, max_size=12),
        ba=st.lists(st.integers(1, 7), min_size=0, max_size=12),
    )
    def test_flip_consistency_and_bounds(self, ab, ba):
        recs = _records("p0", ab, ba)
        base = aggregate_ratings(recs, min_raters=1)["p0"].values
        # mirroring every AB record into its BA form must not change anything
        flipped = [
            RatingRecord(r.pair_id, "BA" if r.order == "AB" else "AB", r.rater,
                         tuple(8 - s for s in r.scores))
            for r in recs
        ]
        mirrored = aggregate_ratings(flipped, min_raters=1)["p0"].values
        assert np.allclose(base, mirrored)
        assert np.all(base >= -3.0) and np.all(base <= 3.0)


class TestRatingsCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "ratings.csv"
        header = "pair_id,order,rater," + ",".join(f"dim{a}" for a in AXIS_IDS)
        rows = ["p0,AB,r1,5,4,4,4,4,4,4,6,4", "p0,BA,r2,3,4,4,4,4,4,4,2,4"]
        path.write_text(header + "\n" + "\n".join(rows) + "\n")
        recs = load_ratings(path)
        assert len(recs) == 2
        out = aggregate_ratings(recs, min_raters=2)
        assert out["p0"].values[0] == 1.0
        assert out["p0"].values[7] == 2.0

    def test_bad_header(self, tmp_path):
        path = tmp_path / "ratings.csv"
        path.write_text("pair,order\np0,AB\n")
        with pytest.raises(SchemaError):
            load_ratings(path)

    def test_bad_score(self, tmp_path):
        path = tmp_path / "ratings.csv"
        header = "pair_id,order,rater," + ",".join(f"dim{a}" for a in AXIS_IDS)
        path.write_text(header + "\np0,AB,r1,9,4,4,4,4,4,4,4,4\n")
        with pytest.raises(SchemaError):
            load_ratings(path)


class TestEmbeddingStore:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        seq = EmbeddingSequence("u0", rng.standard_normal((13, 99, 768)).astype(np.float32))
        path = tmp_path / "u0.rie1"
        write_embeddings(seq, path)
        back = read_embeddings(path)
        assert back.layers == 13 and back.frames == 99 and back.dim == 768
        assert np.array_equal(back.data, seq.data)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.rie1"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(BadMagic):
            read_embeddings(path)

    def test_version_mismatch(self, tmp_path):
        import struct

        path = tmp_path / "x.rie1"
        path.write_bytes(struct.pack("<4sIIII", b"RIE1", 9, 1, 1, 1) + b"\x00" * 4)
        with pytest.raises(VersionMismatch):
            read_embeddings(path)

    def test_truncated_payload(self, tmp_path):
        import struct

        path = tmp_path / "x.rie1"
        path.write_bytes(struct.pack("<4sIIII", b"RIE1", 1, 2, 10, 8) + b"\x00" * 100)
        with pytest.raises(TruncatedFile):
            read_embeddings(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "x.rie1"
        path.write_bytes(b"RIE1\x01")
        with pytest.raises(TruncatedFile):
            read_embeddings(path)

    def test_non_finite(self, tmp_path):
        import struct

        data = np.full((1, 2, 2), np.nan, dtype="<f4")
        path = tmp_path / "x.rie1"
        path.write_bytes(struct.pack("<4sIIII", b"RIE1", 1, 1, 2, 2) + data.tobytes())
        with pytest.raises(NonFiniteValue):
            read_embeddings(path)


class TestImpressionVector:
    def test_bounds_enforced(self):
        with pytest.raises(SchemaError):
            ImpressionVector(np.array([4.0] + [0.0] * 8))

    def test_labels_round_trip(self, tmp_path):
        labels = {
            "p0": ImpressionVector(np.linspace(-3, 3, 9)),
            "p1": ImpressionVector(np.zeros(9)),
        }
        path = tmp_path / "labels.csv"
        write_labels(path, labels)
        back = load_labels(path)
        for k in labels:
            assert np.allclose(back[k].values, labels[k].values, atol=1e-8)
