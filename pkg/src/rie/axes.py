"""The nine antonymic impression axes.

Every module that touches impression vectors (ratings, labels, model
outputs, prompts, reports) imports the ordering from here so axis A..I
always means the same thing.  Scores are centered: -3 is the first
endpoint label, +3 the second, 0 means no perceived difference.
"""

AXIS_IDS = ("A", "B", "C", "D", "E", "F", "G", "H", "I")

# axis id -> (endpoint at -3, endpoint at +3)
AXIS_ENDPOINTS = {
    "A": ("High", "Low"),
    "B": ("Clear", "Hoarse"),
    "C": ("Calm", "Restless"),
    "D": ("Powerful", "Weak"),
    "E": ("Youthful", "Elderly"),
    "F": ("Thick", "Thin"),
    "G": ("Tense", "Relaxed"),
    "H": ("Dark", "Bright"),
    "I": ("Cold", "Warm"),
}

N_AXES = len(AXIS_IDS)

SCORE_MIN = -3.0
SCORE_MAX = 3.0


def axis_label(axis_id: str) -> str:
    """Human-readable axis name, e.g. ``"Dark-Bright"`` for H."""
    lo, hi = AXIS_ENDPOINTS[axis_id]
    return f"{lo}-{hi}"
