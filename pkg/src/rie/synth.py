"""Deterministic synthetic corpus: waveforms, labels, surrogate embeddings.

Stands in for the private recordings: a source-filter synthesizer with a
six-parameter style space, a fixed monotone labeling map from style
deltas to the nine impression axes, and surrogate "SSL" embeddings built
from per-frame descriptors through a fixed random linear map.  Everything
is reproducible from (params, seed); per-utterance and per-pair RNG
streams are derived from (seed, id) so generation order never matters.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import AudioBuffer, frame_signal, quantize_pcm16, write_wav
from .axes import AXIS_IDS
from .corpus import (
    EmbeddingSequence,
    ImpressionVector,
    UtterancePair,
    write_embeddings,
    write_labels,
    write_manifest,
)
from .errors import IoError
from .features import spectral_measures, track_f0

FS = 16000

PARAM_RANGES = {
    "f0_base": (120.0, 350.0),
    "f0_slope": (-12.0, 12.0),
    "tilt_db_per_oct": (-18.0, 0.0),
    "rate": (2.0, 8.0),
    "breathiness": (0.0, 0.5),
    "tension": (0.5, 2.0),
}

PARAM_ORDER = tuple(PARAM_RANGES)

LABEL_NOISE_SIGMA = 0.15

# Labeling map weights over standardized params, one row per axis A..I.
# Signs are the documented monotone structure:
#   A falls with f0_base and with rising contours (mean heard pitch -> "High")
#   B rises with breathiness (-> "Hoarse"), slightly with darker tilt
#   C rises with rate and f0_slope (-> "Restless")
#   D rises with the loudness proxy 0.5*tilt + 0.5*rate (-> "Weak" axis
#     orientation fixed here; the map, not semantics, is the contract)
#   E falls with f0_base, f0_slope, and rate, rises a little with tension
#   F rises with tension (-> "Thin"), falls with brighter tilt
#   G rises with rate and f0_slope (-> "Relaxed" end when negative)
#   H rises with f0_base, f0_slope, and tilt (brighter spectrum -> "Bright")
#   I rises with tilt and rate (-> "Warm")
# C and G lean on f0_slope beyond its mean-pitch effect, which only the
# time course of the pitch contour can disentangle from f0_base; that is
# what gives sequence models an edge there.
LABEL_WEIGHTS = {
    #        f0_base slope   tilt   rate  breath tension
    "A": (-1.10, -0.90, 0.00, 0.00, 0.00, 0.00),
    "B": (0.00, 0.00, -0.25, 0.00, 1.20, 0.00),
    "C": (0.00, 0.50, 0.00, 0.95, 0.00, 0.00),
    "D": (0.00, 0.00, 0.55, 0.55, 0.00, 0.00),
    "E": (-0.90, -0.40, 0.00, -0.35, 0.00, 0.25),
    "F": (0.00, 0.00, -0.60, 0.00, 0.00, 0.45),
    "G": (0.00, 0.60, 0.00, 0.80, 0.00, 0.00),
    "H": (0.80, 0.35, 0.60, 0.00, 0.00, 0.00),
    "I": (0.00, 0.00, 0.70, 0.60, 0.00, 0.00),
}

RESONATOR_CENTERS = (550.0, 1650.0, 2750.0)
RESONATOR_BANDWIDTHS = (80.0, 110.0, 140.0)

# surrogate embedding geometry
SURROGATE_LAYERS = 3
SURROGATE_DIM = 64
SURROGATE_HOP_S = 0.040  # 25 frames/s keeps sequence models cheap
_SURROGATE_SEED = 0x52494531  # fixed: the map is part of the format, not the corpus seed


@dataclass(frozen=True)
class StyleParams:
    f0_base: float
    f0_slope: float
    tilt_db_per_oct: float
    rate: float
    breathiness: float
    tension: float

    def __post_init__(self):
        for name, (lo, hi) in PARAM_RANGES.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")

    def standardized(self) -> np.ndarray:
        """Each parameter mapped linearly to [-1, 1] over its range."""
        out = []
        for name in PARAM_ORDER:
            lo, hi = PARAM_RANGES[name]
            out.append(2.0 * (getattr(self, name) - lo) / (hi - lo) - 1.0)
        return np.array(out)


@dataclass
class SynthPair:
    pair: UtterancePair
    params_a: StyleParams
    params_b: StyleParams
    label: ImpressionVector


def _stream(seed: int, name: str) -> np.random.Generator:
    """Independent RNG stream keyed by (seed, name)."""
    return np.random.default_rng(np.random.SeedSequence((seed, zlib.crc32(name.encode()))))


def style_score(params: StyleParams) -> np.ndarray:
    """Per-utterance style score L(p) = 1.5 * tanh(W z(p)), one per axis."""
    z = params.standardized()
    w = np.array([LABEL_WEIGHTS[a] for a in AXIS_IDS])
    return 1.5 * np.tanh(w @ z)


def pair_label(
    params_a: StyleParams,
    params_b: StyleParams,
    rng: np.random.Generator | None = None,
) -> ImpressionVector:
    """label = L(b) - L(a) + eps, eps truncated at 3 sigma, clamped to [-3, 3]."""
    label = style_score(params_b) - style_score(params_a)
    if rng is not None:
        eps = rng.normal(0.0, LABEL_NOISE_SIGMA, size=label.shape)
        label = label + np.clip(eps, -3 * LABEL_NOISE_SIGMA, 3 * LABEL_NOISE_SIGMA)
    return ImpressionVector(np.clip(label, -3.0, 3.0))


def loudness_proxy_db(params: StyleParams) -> float:
    """Vocal-effort proxy realized as the target RMS of the waveform."""
    z = params.standardized()
    tilt_z, rate_z = z[PARAM_ORDER.index("tilt_db_per_oct")], z[PARAM_ORDER.index("rate")]
    return -26.0 + 6.0 * (0.5 * tilt_z + 0.5 * rate_z)


def synthesize(params: StyleParams, duration_s: float, seed: int) -> AudioBuffer:
    """Source-filter synthesis of one utterance.

    Impulse-train source following the exponential F0 contour, mixed with
    seeded noise per breathiness, syllable-rate amplitude modulation,
    three cascaded resonators with tension-scaled bandwidths, and a
    spectral-tilt shaping in the frequency domain.
    """
    if not 1.0 <= duration_s <= 5.0:
        raise ValueError("duration must be in [1, 5] s")
    n = int(round(duration_s * FS))
    t = np.arange(n) / FS
    rng = np.random.default_rng(seed)

    f0 = np.clip(params.f0_base * 2.0 ** (params.f0_slope * t / 12.0), 70.0, 480.0)
    phase = np.cumsum(f0 / FS)
    pulses = np.zeros(n)
    pulses[np.diff(np.floor(phase), prepend=0.0) > 0] = 1.0
    pulses /= np.sqrt(np.mean(pulses**2)) + 1e-12

    voiced = pulses
    for fc, bw in zip(RESONATOR_CENTERS, RESONATOR_BANDWIDTHS):
        r = np.exp(-np.pi * bw * params.tension / FS)
        theta = 2.0 * np.pi * fc / FS
        voiced = lfilter([1.0 - r], [1.0, -2.0 * r * np.cos(theta), r * r], voiced)
    voiced /= np.sqrt(np.mean(voiced**2)) + 1e-12

    # aspiration stays broadband (mixed after the resonators) so it cannot
    # masquerade as periodicity at a resonator frequency
    noise = rng.standard_normal(n)
    noise /= np.sqrt(np.mean(noise**2)) + 1e-12
    b = params.breathiness
    y = (1.0 - b) * voiced + b * noise

    # syllable-rate amplitude modulation; depth grows with rate so rate is
    # visible to utterance-level statistics, not just to the time course
    depth = 0.15 + 0.055 * params.rate
    envelope = (1.0 - depth) + depth * 0.5 * (1.0 - np.cos(2.0 * np.pi * params.rate * t))
    y = y * envelope

    # tilt shapes the spectrum above the 500 Hz pivot only; boosting below
    # the pivot would drown the harmonics in amplified low-frequency noise
    spec = np.fft.rfft(y)
    freqs = np.fft.rfftfreq(n, 1.0 / FS)
    octaves = np.log2(np.maximum(freqs, 500.0) / 500.0)
    spec *= 10.0 ** (params.tilt_db_per_oct * octaves / 20.0)
    y = np.fft.irfft(spec, n)

    target_rms = 10.0 ** (loudness_proxy_db(params) / 20.0)
    y *= target_rms / (np.sqrt(np.mean(y**2)) + 1e-12)
    peak = np.abs(y).max()
    if peak > 0.95:
        y *= 0.95 / peak
    return AudioBuffer(y, FS, f"synth-{seed}")


def surrogate_embeddings(buf: AudioBuffer, utt_id: str) -> EmbeddingSequence:
    """Fixed random linear map from per-frame descriptors to (L, T, D).

    Descriptors per frame: F0 in semitones (0 when unvoiced), log energy,
    a spectral-tilt estimate (alpha ratio), and spectral flux.  The map
    is seeded by a constant so every corpus shares it.
    """
    f0 = track_f0(buf)
    frames = frame_signal(buf, SURROGATE_HOP_S, SURROGATE_HOP_S, "hann")
    spect = spectral_measures(frames)
    T = frames.n_frames

    # track_f0 runs at a 10 ms hop; take every 4th frame to land on 40 ms.
    # Unvoiced frames take the utterance's voiced mean so the channel's
    # time average stays the voiced-only mean pitch.
    fill = float(np.nanmean(f0.values)) if f0.voiced.any() else 0.0
    f0_vals = np.where(f0.voiced, np.nan_to_num(f0.values), fill)[::4]
    f0_vals = np.pad(f0_vals[:T], (0, max(0, T - f0_vals[:T].size)), constant_values=fill)

    energy = 10.0 * np.log10(np.maximum((frames.frames**2).mean(axis=1), 1e-12))
    tilt = np.nan_to_num(spect["alpha_ratio"].values)
    flux = np.nan_to_num(spect["spectral_flux"].values)

    desc = np.stack([f0_vals, energy, tilt, flux], axis=1)
    # rough fixed standardization so no descriptor dominates the map
    desc = (desc - np.array([40.0, -40.0, -20.0, 0.1])) / np.array([15.0, 15.0, 15.0, 0.2])

    rng = np.random.default_rng(_SURROGATE_SEED)
    data = np.empty((SURROGATE_LAYERS, T, SURROGATE_DIM), dtype=np.float32)
    for layer in range(SURROGATE_LAYERS):
        w = rng.standard_normal((4, SURROGATE_DIM)) / 2.0
        data[layer] = (desc @ w).astype(np.float32)
    return EmbeddingSequence(utt_id, data)


def _draw_params(rng: np.random.Generator) -> StyleParams:
    """Sample generation-time style params (strictly inside the type ranges)."""
    return StyleParams(
        f0_base=rng.uniform(140.0, 320.0),
        f0_slope=rng.uniform(-6.0, 6.0),
        tilt_db_per_oct=rng.uniform(-15.0, -1.0),
        rate=rng.uniform(2.5, 7.5),
        breathiness=rng.uniform(0.0, 0.45),
        tension=rng.uniform(0.6, 1.8),
    )


def generate_corpus(n_pairs: int, seed: int, out_dir) -> list[SynthPair]:
    """Write a full synthetic corpus tree under out_dir.

    Layout: wavs/*.wav (PCM16), emb/*.rie1 (surrogate embeddings),
    pairs.jsonl, labels.csv.  Byte-identical for identical (n_pairs, seed).
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    out_dir = Path(out_dir)
    try:
        (out_dir / "wavs").mkdir(parents=True, exist_ok=True)
        (out_dir / "emb").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(str(e)) from e

    n_utts = min(2 * n_pairs, max(4, int(np.ceil(n_pairs * 1.25))))
    utt_ids = [f"u{i:04d}" for i in range(n_utts)]

    params: dict[str, StyleParams] = {}
    buffers: dict[str, AudioBuffer] = {}
    for utt_id in utt_ids:
        rng = _stream(seed, utt_id)
        p = _draw_params(rng)
        duration = rng.uniform(1.1, 1.6)
        buf = synthesize(p, duration, int(rng.integers(0, 2**31)))
        # quantize in memory so surrogates match the PCM16 wav on disk
        buf = AudioBuffer(quantize_pcm16(buf.samples), FS, utt_id)
        params[utt_id] = p
        buffers[utt_id] = buf
        write_wav(out_dir / "wavs" / f"{utt_id}.wav", buf)
        write_embeddings(surrogate_embeddings(buf, utt_id), out_dir / "emb" / f"{utt_id}.rie1")

    pair_rng = _stream(seed, "pairs")
    pairs: list[SynthPair] = []
    labels: dict[str, ImpressionVector] = {}
    manifest: list[UtterancePair] = []
    for i in range(n_pairs):
        a, b = pair_rng.choice(n_utts, size=2, replace=False)
        pair_id = f"p{i:04d}"
        pair = UtterancePair(pair_id, utt_ids[a], utt_ids[b], "spk0", "t0")
        label = pair_label(params[utt_ids[a]], params[utt_ids[b]], _stream(seed, pair_id))
        manifest.append(pair)
        labels[pair_id] = label
        pairs.append(SynthPair(pair, params[utt_ids[a]], params[utt_ids[b]], label))

    write_manifest(out_dir / "pairs.jsonl", manifest)
    write_labels(out_dir / "labels.csv", labels)
    return pairs
