"""MLLM judging: prompts, provider adapters, parsing, fold scoring."""

from __future__ import annotations

import numpy as np

from ..evaluate import DESIGNATED_FOLD, FoldPlan, ResultTable, score_pooled
from .mock import MockProvider
from .parse import parse_scores, strip_rationale
from .prompts import JudgePrompt, build_prompt
from .providers import (
    AuditLog,
    JudgeResponse,
    ProviderConfig,
    TokenBucket,
    judge,
    judge_pairs,
)

__all__ = [
    "AuditLog",
    "JudgePrompt",
    "JudgeResponse",
    "MockProvider",
    "ProviderConfig",
    "TokenBucket",
    "build_prompt",
    "judge",
    "judge_fold",
    "judge_pairs",
    "parse_scores",
    "strip_rationale",
]


def judge_fold(
    dataset,
    plan: FoldPlan,
    cfg: ProviderConfig,
    wav_dir,
    fold: int = DESIGNATED_FOLD,
    language: str = "ja",
    shots=(),
    transport=None,
    audit: AuditLog | None = None,
    method_name: str | None = None,
):
    """Judge every pair in the designated fold and score it like any method.

    Returns (ResultTable, {pair_id: JudgeResponse}).
    """
    from pathlib import Path

    from .providers import _http_transport

    wav_dir = Path(wav_dir)
    pair_by_id = {p.pair_id: p for p in dataset.pairs}
    fold_ids = sorted(plan.fold_ids(fold))
    prompts = {}
    for pid in fold_ids:
        pair = pair_by_id[pid]
        prompts[pid] = build_prompt(
            pair,
            shots=shots,
            language=language,
            audio_refs=(wav_dir / f"{pair.utt_a}.wav", wav_dir / f"{pair.utt_b}.wav"),
        )
    responses = judge_pairs(
        prompts, cfg, transport=transport or _http_transport, audit=audit
    )
    preds = np.stack([responses[pid].scores for pid in fold_ids])
    targets = np.stack([dataset.labels[pid].values for pid in fold_ids])
    name = method_name or f"mllm:{cfg.style}"
    cells = score_pooled(preds, targets, name)
    table = ResultTable([name], cells, {"fold": fold, "k": plan.k, "seed": plan.seed})
    return table, responses
