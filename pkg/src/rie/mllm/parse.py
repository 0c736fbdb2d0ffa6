"""Score extraction from model responses.

Primary path: one fenced JSON block keyed by the axis letters.  Fallback:
per-axis line patterns ("H: 2", "Dark-Bright = -1.5", and the axis's
endpoint words).  Responses on the raw 1-7 Likert scale are detected
(all values in [1, 7], some above 3, and the text mentions the scale) and
centered by subtracting 4.
"""

from __future__ import annotations

import json
import re

import numpy as np

from ..axes import AXIS_ENDPOINTS, AXIS_IDS
from ..errors import ParseError

_FENCED = re.compile(r"```(?:json)?\s*(\{.*?\})\s*```", re.DOTALL)
_NUMBER = r"([+-]?\d+(?:\.\d+)?)"
_SCALE_MENTION = re.compile(
    r"1\s*(?:-|–|—|~|〜|to)\s*7|seven[\s-]?point|7[\s-]?point|likert", re.IGNORECASE
)


def _from_json_block(raw: str) -> dict | None:
    for match in _FENCED.finditer(raw):
        try:
            obj = json.loads(match.group(1))
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def _axis_patterns(axis: str):
    lo, hi = AXIS_ENDPOINTS[axis]
    yield re.compile(
        rf"(?:^|[^A-Za-z]){axis}\s*[):.]?\s*(?:\([^)]*\))?\s*[:=]\s*{_NUMBER}",
        re.MULTILINE,
    )
    yield re.compile(
        rf"{lo}\s*[-–—/]\s*{hi}\s*(?:\([^)]*\))?\s*[:=]?\s*{_NUMBER}", re.IGNORECASE
    )


def parse_scores(raw: str) -> np.ndarray:
    """Nine centered scores in axis order, or ParseError naming what's missing."""
    values: dict[str, float] = {}
    obj = _from_json_block(raw)
    if obj is not None:
        for axis in AXIS_IDS:
            for key in (axis, axis.lower()):
                if key in obj and isinstance(obj[key], (int, float)):
                    values[axis] = float(obj[key])
                    break

    if len(values) < len(AXIS_IDS):
        for axis in AXIS_IDS:
            if axis in values:
                continue
            for pattern in _axis_patterns(axis):
                m = pattern.search(raw)
                if m:
                    values[axis] = float(m.group(1))
                    break

    missing = [axis for axis in AXIS_IDS if axis not in values]
    if missing:
        raise ParseError(f"no score found for axes {missing}", missing=missing)

    scores = np.array([values[axis] for axis in AXIS_IDS])
    on_raw_scale = (
        np.all((scores >= 1.0) & (scores <= 7.0))
        and np.any(scores > 3.0)
        and _SCALE_MENTION.search(raw) is not None
    )
    if on_raw_scale:
        scores = scores - 4.0
    if np.any(scores < -3.0) or np.any(scores > 3.0):
        out = [a for a, s in zip(AXIS_IDS, scores) if not -3.0 <= s <= 3.0]
        raise ParseError(f"scores outside [-3, 3] for axes {out}", missing=out)
    return scores


def strip_rationale(raw: str) -> str:
    """Free text with the fenced score block removed (kept for audit)."""
    return _FENCED.sub("", raw).strip()
