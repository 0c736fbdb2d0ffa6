"""Voiced-segment acoustic descriptors and utterance-level functionals.

The candidate pool is a 26-feature subset of the usual affective-speech
parameter sets: {F0, mfcc1..4, alphaRatio, hammarberg, F1bandwidth,
spectralFlux, loudness} x {mean, stddevNorm}, plus p20/p50/p80 for F0 and
loudness.  All functionals are computed over voiced frames only, with the
voicing mask taken from the F0 tracker.  Unvoiced/undefined frames carry
NaN and are excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct, rfft
from scipy.signal import medfilt

from .audio import (
    CANONICAL_RATE,
    F0_FRAME_S,
    HOP_S,
    LLD_FRAME_S,
    AudioBuffer,
    FrameSequence,
    frame_signal,
)
from .errors import NameSetMismatch

NFFT = 512
N_MEL_FILTERS = 26
MEL_FMIN = 20.0
MEL_FMAX = 8000.0
LPC_ORDER = 12
VOICING_THRESHOLD = 0.45
LOG_FLOOR = 1e-10
LOUDNESS_FLOOR_DB = -120.0

DESCRIPTORS = (
    "F0",
    "mfcc1",
    "mfcc2",
    "mfcc3",
    "mfcc4",
    "alphaRatio",
    "hammarberg",
    "F1bandwidth",
    "spectralFlux",
    "loudness",
)
PERCENTILE_DESCRIPTORS = ("F0", "loudness")


def feature_names() -> tuple[str, ...]:
    """The 26 candidate feature names in their canonical order."""
    names = []
    for d in DESCRIPTORS:
        names.append(f"{d}_mean")
        names.append(f"{d}_stddevNorm")
        if d in PERCENTILE_DESCRIPTORS:
            names.extend([f"{d}_p20", f"{d}_p50", f"{d}_p80"])
    return tuple(names)


FEATURE_NAMES = feature_names()


@dataclass
class LLDTrack:
    """Per-frame descriptor values with a voicing mask.

    Frames that are unvoiced or where the descriptor is undefined carry
    NaN; functionals skip them.
    """

    values: np.ndarray
    voiced: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.values.shape != self.voiced.shape:
            raise ValueError("values and voiced must have equal length")


@dataclass
class FeatureVector:
    """Utterance-level functionals, keyed by '<descriptor>_<functional>'."""

    utt_id: str
    entries: dict[str, float]
    no_voiced: tuple[str, ...] = field(default_factory=tuple)

    def as_array(self, names=FEATURE_NAMES) -> np.ndarray:
        return np.array([self.entries[n] for n in names])


@dataclass
class DiffFeatureVector:
    """phi(x_b) - phi(x_a), name for name."""

    pair_id: str
    entries: dict[str, float]


def hz_to_semitones(f_hz):
    """Pitch in semitones relative to 27.5 Hz."""
    return 12.0 * np.log2(np.asarray(f_hz, dtype=np.float64) / 27.5)


def track_f0(buf: AudioBuffer, fmin: float = 60.0, fmax: float = 500.0) -> LLDTrack:
    """Autocorrelation pitch tracker on 40 ms rectangular frames.

    Voicing = normalized ACF peak >= 0.45, median-smoothed over 5 frames.
    Voiced frames report 12*log2(f/27.5); unvoiced frames are NaN.
    """
    fs = buf.sample_rate_hz
    frames = frame_signal(buf, F0_FRAME_S, HOP_S, "rectangular").frames
    frames = frames - frames.mean(axis=1, keepdims=True)
    flen = frames.shape[1]

    lag_min = int(np.ceil(fs / fmax))
    lag_max = min(int(np.floor(fs / fmin)), flen - 2)

    nfft = 1 << int(np.ceil(np.log2(2 * flen)))
    spec = np.fft.rfft(frames, nfft, axis=1)
    acf = np.fft.irfft(np.abs(spec) ** 2, nfft, axis=1)[:, : lag_max + 2]

    r0 = acf[:, 0]
    quiet = r0 < 1e-10
    norm = np.where(quiet, 1.0, r0)
    nacf = acf / norm[:, None]

    window = nacf[:, lag_min : lag_max + 1]
    rel = np.argmax(window, axis=1)
    lag = rel + lag_min
    peak = window[np.arange(len(rel)), rel]

    # parabolic interpolation around the integer peak
    left = nacf[np.arange(len(lag)), lag - 1]
    mid = nacf[np.arange(len(lag)), lag]
    right = nacf[np.arange(len(lag)), lag + 1]
    denom = left - 2.0 * mid + right
    delta = np.where(np.abs(denom) > 1e-12, 0.5 * (left - right) / denom, 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    refined = lag + delta

    voiced = (peak >= VOICING_THRESHOLD) & ~quiet
    if voiced.size >= 3:
        k = min(5, voiced.size if voiced.size % 2 else voiced.size - 1)
        voiced = medfilt(voiced.astype(np.float64), k) > 0.5

    f0_hz = fs / refined
    semitones = hz_to_semitones(np.maximum(f0_hz, 1e-6))
    values = np.where(voiced, semitones, np.nan)
    return LLDTrack(values, voiced)


def _align_voicing(voiced: np.ndarray, n_frames: int) -> np.ndarray:
    """Match a voicing mask to another framing with the same hop."""
    if voiced.size >= n_frames:
        return voiced[:n_frames]
    return np.concatenate([voiced, np.zeros(n_frames - voiced.size, dtype=bool)])


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _mel_filterbank(fs: int, nfft: int, n_filters: int, fmin: float, fmax: float):
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_filters + 2))
    freqs = np.fft.rfftfreq(nfft, 1.0 / fs)
    fb = np.zeros((n_filters, freqs.size))
    for i in range(n_filters):
        lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    return fb


def compute_mfcc(
    frames: FrameSequence, n_coeffs: int = 4, voiced: np.ndarray | None = None
) -> list[LLDTrack]:
    """MFCC 1..n_coeffs from a 26-filter log-mel spectrum (DCT-II, ortho).

    Coefficient 0 is discarded, which is what makes the remaining
    coefficients gain-invariant.  The log floor is relative to each
    frame's strongest band (100 dB down) so the floor scales with gain
    too; silence falls back to an absolute floor.
    """
    power = np.abs(rfft(frames.frames, NFFT, axis=1)) ** 2
    fb = _mel_filterbank(frames.sample_rate_hz, NFFT, N_MEL_FILTERS, MEL_FMIN, MEL_FMAX)
    energies = power @ fb.T
    floor = np.maximum(energies.max(axis=1, keepdims=True) * 1e-10, LOG_FLOOR)
    logmel = np.log(np.maximum(energies, floor))
    coeffs = dct(logmel, type=2, norm="ortho", axis=1)[:, 1 : n_coeffs + 1]
    mask = np.ones(frames.n_frames, bool) if voiced is None else _align_voicing(voiced, frames.n_frames)
    return [LLDTrack(np.where(mask, coeffs[:, i], np.nan), mask) for i in range(n_coeffs)]


def spectral_measures(
    frames: FrameSequence, voiced: np.ndarray | None = None
) -> dict[str, LLDTrack]:
    """Alpha ratio, Hammarberg index, and spectral flux per frame."""
    fs = frames.sample_rate_hz
    mag = np.abs(rfft(frames.frames, NFFT, axis=1))
    freqs = np.fft.rfftfreq(NFFT, 1.0 / fs)
    power = mag**2

    # floors scale with the frame so the ratios stay exactly gain-invariant;
    # true silence falls back to the absolute floor
    power_floor = np.maximum(power.sum(axis=1) * 1e-12, LOG_FLOOR)
    mag_floor = np.maximum(mag.max(axis=1) * 1e-6, LOG_FLOOR)

    low = (freqs >= 50.0) & (freqs < 1000.0)
    high = (freqs >= 1000.0) & (freqs <= 5000.0)
    alpha = 10.0 * np.log10(
        np.maximum(power[:, high].sum(axis=1), power_floor)
        / np.maximum(power[:, low].sum(axis=1), power_floor)
    )

    below = freqs < 2000.0
    above = (freqs >= 2000.0) & (freqs <= 5000.0)
    hammarberg = 20.0 * np.log10(
        np.maximum(mag[:, below].max(axis=1), mag_floor)
        / np.maximum(mag[:, above].max(axis=1), mag_floor)
    )

    norms = np.linalg.norm(mag, axis=1, keepdims=True)
    unit = mag / np.maximum(norms, LOG_FLOOR)
    flux = np.zeros(frames.n_frames)
    if frames.n_frames > 1:
        flux[1:] = ((unit[1:] - unit[:-1]) ** 2).sum(axis=1)

    mask = np.ones(frames.n_frames, bool) if voiced is None else _align_voicing(voiced, frames.n_frames)
    out = {}
    for name, vals in (("alpha_ratio", alpha), ("hammarberg", hammarberg), ("spectral_flux", flux)):
        out[name] = LLDTrack(np.where(mask, vals, np.nan), mask)
    return out


def levinson_durbin(r: np.ndarray, order: int) -> np.ndarray | None:
    """Levinson-Durbin recursion; None when the autocorrelation is degenerate.

    Returns the prediction polynomial [1, a1..a_order].
    """
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    if err <= 0:
        return None
    for i in range(1, order + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1 : 0 : -1])
        k = -acc / err
        prev = a[: i + 1].copy()
        a[1 : i + 1] = prev[1 : i + 1] + k * prev[i - 1 :: -1][:i]
        err *= 1.0 - k * k
        if err <= 1e-20:
            return None
    return a


def f1_tracks(
    frames: FrameSequence, voiced: np.ndarray | None = None
) -> tuple[LLDTrack, LLDTrack]:
    """First-formant frequency and bandwidth via order-12 LPC.

    Pole pairs map to candidate formants (f = angle*fs/2pi, bw =
    -(fs/pi)*ln|r|); F1 is the lowest candidate with f in [150, 1500] Hz
    and bw < 1000 Hz.  Frames without a candidate (and unvoiced frames)
    carry NaN.  No pre-emphasis: on an all-pole reference signal the
    0.97 first difference drags low formant estimates up by ~14%, well
    past the 5% recovery budget.
    """
    fs = frames.sample_rate_hz
    n = frames.n_frames
    mask = np.ones(n, bool) if voiced is None else _align_voicing(voiced, n)

    freq = np.full(n, np.nan)
    band = np.full(n, np.nan)
    for t in np.flatnonzero(mask):
        x = frames.frames[t]
        r = np.correlate(x, x, "full")[x.size - 1 : x.size + LPC_ORDER]
        a = levinson_durbin(r, LPC_ORDER)
        if a is None:
            continue
        roots = np.roots(a)
        roots = roots[np.imag(roots) > 1e-8]
        radii = np.abs(roots)
        ok = (radii > 1e-6) & (radii < 1.0)
        if not ok.any():
            continue
        f = np.angle(roots[ok]) * fs / (2.0 * np.pi)
        bw = -(fs / np.pi) * np.log(radii[ok])
        cand = (f >= 150.0) & (f <= 1500.0) & (bw < 1000.0)
        if cand.any():
            best = np.argmin(f[cand])
            freq[t] = f[cand][best]
            band[t] = bw[cand][best]
    found = mask & np.isfinite(band)
    return LLDTrack(freq, found), LLDTrack(band, found)


def estimate_f1_bandwidth(
    frames: FrameSequence, voiced: np.ndarray | None = None
) -> LLDTrack:
    """F1 bandwidth per frame; NoFormantFound frames carry NaN."""
    return f1_tracks(frames, voiced)[1]


def compute_loudness(
    frames: FrameSequence, voiced: np.ndarray | None = None
) -> LLDTrack:
    """A-weighted RMS per frame in dB (floor at -120 dB)."""
    fs = frames.sample_rate_hz
    mag = np.abs(rfft(frames.frames, NFFT, axis=1))
    freqs = np.fft.rfftfreq(NFFT, 1.0 / fs)
    weighted = mag * _a_weight_response(freqs)[None, :]
    # Parseval: mean-square of the weighted frame
    scale = np.ones(freqs.size)
    scale[1:] = 2.0
    if NFFT % 2 == 0:
        scale[-1] = 1.0
    ms = (weighted**2 * scale[None, :]).sum(axis=1) / (NFFT * frames.frame_len)
    db = 10.0 * np.log10(np.maximum(ms, 10.0 ** (LOUDNESS_FLOOR_DB / 10.0)))
    mask = np.ones(frames.n_frames, bool) if voiced is None else _align_voicing(voiced, frames.n_frames)
    return LLDTrack(np.where(mask, db, np.nan), mask)


def _a_weight_response(freqs: np.ndarray) -> np.ndarray:
    f2 = np.asarray(freqs, dtype=np.float64) ** 2
    num = 12194.0**2 * f2**2
    den = (
        (f2 + 20.6**2)
        * np.sqrt((f2 + 107.7**2) * (f2 + 737.9**2))
        * (f2 + 12194.0**2)
    )
    with np.errstate(invalid="ignore"):
        ra = np.where(den > 0, num / den, 0.0)
    ra_1k = 12194.0**2 * 1000.0**4 / (
        (1000.0**2 + 20.6**2)
        * np.sqrt((1000.0**2 + 107.7**2) * (1000.0**2 + 737.9**2))
        * (1000.0**2 + 12194.0**2)
    )
    return ra / ra_1k


def functionals(track: LLDTrack) -> tuple[dict[str, float], bool]:
    """mean / stddevNorm / p20 / p50 / p80 over voiced, finite frames.

    Returns (values, all_unvoiced).  With no usable frame every
    functional is 0.0 and the flag is set.
    """
    v = track.values[track.voiced]
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"mean": 0.0, "stddevNorm": 0.0, "p20": 0.0, "p50": 0.0, "p80": 0.0}, True
    mean = float(v.mean())
    std = float(v.std())
    stddev_norm = std / abs(mean) if mean != 0.0 else 0.0
    p20, p50, p80 = (float(x) for x in np.percentile(v, [20, 50, 80]))
    return {"mean": mean, "stddevNorm": stddev_norm, "p20": p20, "p50": p50, "p80": p80}, False


def extract_features(buf: AudioBuffer) -> FeatureVector:
    """Extract the 26-feature candidate pool for one canonical utterance."""
    if buf.sample_rate_hz != CANONICAL_RATE:
        raise ValueError(f"{buf.id}: extract_features requires 16 kHz input")

    f0 = track_f0(buf)
    lld = frame_signal(buf, LLD_FRAME_S, HOP_S, "hann")
    voiced = _align_voicing(f0.voiced, lld.n_frames)

    mfccs = compute_mfcc(lld, 4, voiced)
    spect = spectral_measures(lld, voiced)
    tracks = {
        "F0": f0,
        "mfcc1": mfccs[0],
        "mfcc2": mfccs[1],
        "mfcc3": mfccs[2],
        "mfcc4": mfccs[3],
        "alphaRatio": spect["alpha_ratio"],
        "hammarberg": spect["hammarberg"],
        "spectralFlux": spect["spectral_flux"],
        "F1bandwidth": estimate_f1_bandwidth(lld, voiced),
        "loudness": compute_loudness(lld, voiced),
    }

    entries: dict[str, float] = {}
    flagged = []
    for d in DESCRIPTORS:
        vals, empty = functionals(tracks[d])
        if empty:
            flagged.append(d)
        entries[f"{d}_mean"] = vals["mean"]
        entries[f"{d}_stddevNorm"] = vals["stddevNorm"]
        if d in PERCENTILE_DESCRIPTORS:
            entries[f"{d}_p20"] = vals["p20"]
            entries[f"{d}_p50"] = vals["p50"]
            entries[f"{d}_p80"] = vals["p80"]
    return FeatureVector(buf.id, entries, tuple(flagged))


def diff_features(fa: FeatureVector, fb: FeatureVector, pair_id: str = "") -> DiffFeatureVector:
    """phi(x_b) - phi(x_a); exact antisymmetry under swap."""
    if set(fa.entries) != set(fb.entries):
        raise NameSetMismatch(
            f"feature names differ: {sorted(set(fa.entries) ^ set(fb.entries))}"
        )
    entries = {name: fb.entries[name] - fa.entries[name] for name in fa.entries}
    return DiffFeatureVector(pair_id or f"{fa.utt_id}->{fb.utt_id}", entries)


def write_features_csv(path, vectors: list[FeatureVector]) -> None:
    """Persist feature vectors: id column + the 26 names, 9 sig digits."""
    names = FEATURE_NAMES
    lines = ["id," + ",".join(names)]
    for fv in vectors:
        lines.append(fv.utt_id + "," + ",".join(f"{fv.entries[n]:.9g}" for n in names))
    from pathlib import Path

    Path(path).write_text("\n".join(lines) + "\n")


def read_features_csv(path) -> dict[str, FeatureVector]:
    from pathlib import Path

    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    if header[0] != "id":
        raise NameSetMismatch("features csv must start with an id column")
    names = header[1:]
    out = {}
    for line in lines[1:]:
        cells = line.split(",")
        out[cells[0]] = FeatureVector(
            cells[0], {n: float(v) for n, v in zip(names, cells[1:])}
        )
    return out
