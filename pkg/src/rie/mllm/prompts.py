"""Deterministic prompt construction for audio-pair judging."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..axes import AXIS_ENDPOINTS, AXIS_IDS
from ..corpus import UtterancePair
from ..errors import TemplateNotFound

TEMPLATE_DIR = Path(__file__).parent / "templates"

AXIS_LABELS_JA = {
    "A": ("高い", "低い"),
    "B": ("澄んだ", "かすれた"),
    "C": ("落ち着いた", "落ち着きのない"),
    "D": ("力強い", "弱々しい"),
    "E": ("若々しい", "年老いた"),
    "F": ("太い", "細い"),
    "G": ("緊張した", "リラックスした"),
    "H": ("暗い", "明るい"),
    "I": ("冷たい", "温かい"),
}


@dataclass
class JudgePrompt:
    template_id: str
    language: str
    rendered_text: str
    shots: list  # [(pair_id, ImpressionVector)]
    audio_refs: tuple  # (path_a, path_b)


def _axes_block(language: str) -> str:
    lines = []
    for axis in AXIS_IDS:
        lo, hi = AXIS_ENDPOINTS[axis]
        if language == "ja":
            lo_ja, hi_ja = AXIS_LABELS_JA[axis]
            lines.append(f"{axis}) {lo_ja}({lo}) – {hi_ja}({hi})")
        else:
            lines.append(f"{axis}) {lo} – {hi}")
    return "\n".join(lines)


def _shots_block(shots, language: str) -> str:
    if not shots:
        return ""
    header = "Scored examples:" if language == "en" else "採点済みの例:"
    lines = [header]
    for k, (pair_ref, vector) in enumerate(shots, start=1):
        scores = ", ".join(
            f"{axis}={vector.values[i]:+.1f}" for i, axis in enumerate(AXIS_IDS)
        )
        lines.append(f"{k}. pair {pair_ref}: {scores}")
    return "\n".join(lines) + "\n"


def build_prompt(
    pair: UtterancePair,
    shots=(),
    language: str = "ja",
    audio_refs: tuple = ("", ""),
    template_id: str = "judge",
) -> JudgePrompt:
    """Render the judging prompt for one pair from its template file."""
    if len(shots) > 8:
        raise ValueError("at most 8 in-context shots")
    path = TEMPLATE_DIR / f"{template_id}_{language}.txt"
    if not path.exists():
        raise TemplateNotFound(str(path))
    template = path.read_text(encoding="utf-8")
    text = template.format(
        axes_block=_axes_block(language), shots_block=_shots_block(shots, language)
    )
    return JudgePrompt(template_id, language, text, list(shots), tuple(audio_refs))
