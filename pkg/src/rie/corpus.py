"""Dataset artifacts: pair manifests, rating aggregation, embedding store.

File formats owned here:
  pairs.jsonl   one UtterancePair object per line
  ratings.csv   pair_id, order, rater, dimA..dimI (7-point Likert)
  labels.csv    pair_id, dimA..dimI (centered reals)
  *.rie1        binary frame-embedding tensors (see write_embeddings)
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .axes import AXIS_IDS, N_AXES, SCORE_MAX, SCORE_MIN
from .errors import (
    BadMagic,
    DuplicatePairId,
    InsufficientRaters,
    NonFiniteValue,
    SchemaError,
    TruncatedFile,
    VersionMismatch,
)

EMBEDDING_MAGIC = b"RIE1"
EMBEDDING_VERSION = 1


@dataclass(frozen=True)
class UtterancePair:
    pair_id: str
    utt_a: str
    utt_b: str
    speaker: str
    text_id: str

    def __post_init__(self):
        if self.utt_a == self.utt_b:
            raise SchemaError(f"pair {self.pair_id!r}: utt_a == utt_b")


@dataclass(frozen=True)
class RatingRecord:
    pair_id: str
    order: str  # "AB" or "BA"
    rater: str
    scores: tuple  # 9 ints, each 1..7

    def __post_init__(self):
        if self.order not in ("AB", "BA"):
            raise SchemaError(f"order must be AB or BA, got {self.order!r}")
        if len(self.scores) != N_AXES:
            raise SchemaError(f"expected {N_AXES} scores, got {len(self.scores)}")
        for s in self.scores:
            if not isinstance(s, int) or not 1 <= s <= 7:
                raise SchemaError(f"Likert scores must be integers in [1, 7], got {s!r}")


@dataclass
class ImpressionVector:
    """Nine centered scores, axis order A..I, each in [-3, +3]."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (N_AXES,):
            raise SchemaError(f"impression vector needs {N_AXES} values")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteValue("impression vector has non-finite entries")
        if np.any(self.values < SCORE_MIN) or np.any(self.values > SCORE_MAX):
            raise SchemaError("impression values outside [-3, 3]")


@dataclass
class EmbeddingSequence:
    """Frame embeddings for one utterance: layers x frames x dim."""

    utt_id: str
    data: np.ndarray  # (L, T, D) float32

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise SchemaError("embedding tensor must be (L, T, D) with all dims >= 1")
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteValue(f"{self.utt_id}: non-finite embedding values")

    @property
    def layers(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[2]


def load_manifest(path) -> list[UtterancePair]:
    """Read pairs.jsonl, validating every line."""
    pairs = []
    seen = set()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise SchemaError(f"invalid JSON: {e}", line=lineno) from e
        try:
            pair = UtterancePair(
                pair_id=str(obj["pair_id"]),
                utt_a=str(obj["utt_a"]),
                utt_b=str(obj["utt_b"]),
                speaker=str(obj["speaker"]),
                text_id=str(obj["text_id"]),
            )
        except KeyError as e:
            raise SchemaError(f"missing field {e}", line=lineno) from e
        except SchemaError as e:
            raise SchemaError(str(e), line=lineno) from e
        if pair.pair_id in seen:
            raise DuplicatePairId(pair.pair_id)
        seen.add(pair.pair_id)
        pairs.append(pair)
    return pairs


def write_manifest(path, pairs: list[UtterancePair]) -> None:
    lines = [
        json.dumps(
            {
                "pair_id": p.pair_id,
                "utt_a": p.utt_a,
                "utt_b": p.utt_b,
                "speaker": p.speaker,
                "text_id": p.text_id,
            },
            sort_keys=True,
        )
        for p in pairs
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def aggregate_ratings(
    records: list[RatingRecord], min_raters: int = 10
) -> dict[str, ImpressionVector]:
    """Fold AB/BA ratings into one centered mean vector per pair.

    AB records contribute s - 4, BA records 4 - s (reflection around the
    neutral midpoint), so presentation order cancels in the mean.
    """
    by_pair: dict[str, list[RatingRecord]] = {}
    for rec in records:
        by_pair.setdefault(rec.pair_id, []).append(rec)

    out = {}
    for pair_id, recs in by_pair.items():
        if len(recs) < min_raters:
            raise InsufficientRaters(pair_id, len(recs))
        signed = np.array(
            [
                [s - 4.0 for s in r.scores]
                if r.order == "AB"
                else [4.0 - s for s in r.scores]
                for r in recs
            ]
        )
        mean = np.clip(signed.mean(axis=0), SCORE_MIN, SCORE_MAX)
        out[pair_id] = ImpressionVector(mean)
    return out


def load_ratings(path) -> list[RatingRecord]:
    """Read ratings.csv (pair_id, order, rater, dimA..dimI)."""
    expected = ["pair_id", "order", "rater"] + [f"dim{a}" for a in AXIS_IDS]
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != expected:
            raise SchemaError(f"ratings header must be {expected}")
        for lineno, row in enumerate(reader, start=2):
            try:
                scores = tuple(int(row[f"dim{a}"]) for a in AXIS_IDS)
                records.append(
                    RatingRecord(row["pair_id"], row["order"], row["rater"], scores)
                )
            except (ValueError, SchemaError) as e:
                raise SchemaError(str(e), line=lineno) from e
    return records


def write_labels(path, labels: dict[str, ImpressionVector]) -> None:
    """labels.csv: pair_id plus one centered real per axis."""
    lines = ["pair_id," + ",".join(f"dim{a}" for a in AXIS_IDS)]
    for pair_id in labels:
        vals = ",".join(f"{v:.9g}" for v in labels[pair_id].values)
        lines.append(f"{pair_id},{vals}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_labels(path) -> dict[str, ImpressionVector]:
    expected = ["pair_id"] + [f"dim{a}" for a in AXIS_IDS]
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != expected:
            raise SchemaError(f"labels header must be {expected}")
        for row in reader:
            out[row["pair_id"]] = ImpressionVector(
                np.array([float(row[f"dim{a}"]) for a in AXIS_IDS])
            )
    return out


_HEADER = struct.Struct("<4sIIII")


def write_embeddings(seq: EmbeddingSequence, path) -> None:
    """Binary layout: magic 'RIE1', u32 version, u32 L/T/D, float32 LE data
    in layer-major then frame-major order."""
    header = _HEADER.pack(
        EMBEDDING_MAGIC, EMBEDDING_VERSION, seq.layers, seq.frames, seq.dim
    )
    payload = np.ascontiguousarray(seq.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_embeddings(path) -> EmbeddingSequence:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedFile(f"{path}: shorter than the header")
    magic, version, L, T, D = _HEADER.unpack_from(raw)
    if magic != EMBEDDING_MAGIC:
        raise BadMagic(f"{path}: magic {magic!r}")
    if version != EMBEDDING_VERSION:
        raise VersionMismatch(f"{path}: version {version}")
    expected = L * T * D * 4
    payload = raw[_HEADER.size :]
    if len(payload) < expected:
        raise TruncatedFile(f"{path}: header claims {expected} bytes, found {len(payload)}")
    data = np.frombuffer(payload[:expected], dtype="<f4").reshape(L, T, D)
    if not np.all(np.isfinite(data)):
        raise NonFiniteValue(f"{path}: non-finite embedding values")
    return EmbeddingSequence(Path(path).stem, data.copy())
