import re

import numpy as np
import pytest

from rie.audio import AudioBuffer
from rie.synth import generate_corpus

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            match = _CRITERION.search(getattr(report, "nodeid", ""))
            if match:
                verdict = "PASS" if outcome == "passed" else "FAIL"
                lines.append((int(match.group(1)), verdict, match.group(2)))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for num, verdict, name in sorted(lines):
            terminalreporter.write_line(f"criterion {num:2d} [{verdict}] {name}")


def sine(freq_hz, duration_s=1.0, fs=16000, amp=0.6, utt_id="tone"):
    t = np.arange(int(duration_s * fs)) / fs
    return AudioBuffer(amp * np.sin(2 * np.pi * freq_hz * t), fs, utt_id)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """40-pair synthetic corpus shared by the slower integration tests."""
    root = tmp_path_factory.mktemp("corpus40")
    pairs = generate_corpus(40, 11, root)
    return root, pairs
