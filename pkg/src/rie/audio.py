"""Audio loading, resampling, and framing.

Everything downstream consumes mono float64 buffers at a canonical
16 kHz.  WAV parsing is done by hand (struct over RIFF chunks) so the
error cases are exact: channel/codec problems raise UnsupportedFormat,
truncation raises CorruptFile.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import upfirdn

from .errors import CorruptFile, SignalTooShort, UnsupportedFormat, UpsampleRequested

CANONICAL_RATE = 16000
ALLOWED_RATES = (16000, 22050, 44100, 48000)

# default framing: 25 ms / 10 ms Hann for spectral LLDs, 40 ms / 10 ms for F0
LLD_FRAME_S = 0.025
F0_FRAME_S = 0.040
HOP_S = 0.010

_WINDOWS = ("hann", "gaussian", "rectangular")


@dataclass
class AudioBuffer:
    """Mono waveform with its sample rate and utterance id."""

    samples: np.ndarray
    sample_rate_hz: int
    id: str

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise UnsupportedFormat("buffer must be a non-empty 1-D signal")
        if not np.all(np.isfinite(self.samples)):
            raise CorruptFile(f"{self.id}: non-finite samples")
        if np.max(np.abs(self.samples)) > 1.0:
            raise CorruptFile(f"{self.id}: samples outside [-1, 1]")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass
class FrameSequence:
    """Windowed analysis frames: n_frames x frame_len."""

    frames: np.ndarray
    frame_s: float
    hop_s: float
    sample_rate_hz: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_len(self) -> int:
        return self.frames.shape[1]

    @property
    def hop(self) -> int:
        return int(round(self.hop_s * self.sample_rate_hz))


def load_wav(path, utt_id: str | None = None) -> AudioBuffer:
    """Load a mono PCM16 or float32 RIFF/WAVE file.

    PCM16 is normalized by 32768 (so -32768 maps to exactly -1.0).
    The id defaults to the file stem.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12:
        raise CorruptFile(f"{path}: too short for a RIFF header")
    if raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise CorruptFile(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack("<I", raw[pos + 4 : pos + 8])
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise CorruptFile(f"{path}: truncated {cid!r} chunk")
        if cid == b"fmt ":
            if size < 16:
                raise CorruptFile(f"{path}: fmt chunk too small")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise CorruptFile(f"{path}: missing fmt or data chunk")

    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if channels != 1:
        raise UnsupportedFormat(f"{path}: {channels} channels (mono required)")
    if rate not in ALLOWED_RATES:
        raise UnsupportedFormat(f"{path}: sample rate {rate} not in {ALLOWED_RATES}")

    if audio_format == 1 and bits == 16:
        if len(data) % 2:
            raise CorruptFile(f"{path}: odd PCM16 payload size")
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        if len(data) % 4:
            raise CorruptFile(f"{path}: misaligned float32 payload")
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
        samples = np.clip(samples, -1.0, 1.0)
    else:
        raise UnsupportedFormat(f"{path}: codec (format={audio_format}, bits={bits})")

    if samples.size == 0:
        raise CorruptFile(f"{path}: empty data chunk")
    return AudioBuffer(samples, rate, utt_id if utt_id is not None else path.stem)


def write_wav(path, buf: AudioBuffer, fmt: str = "pcm16") -> None:
    """Write a mono WAV (PCM16 by default, or float32)."""
    path = Path(path)
    if fmt == "pcm16":
        ints = np.clip(np.round(buf.samples * 32768.0), -32768, 32767).astype("<i2")
        payload = ints.tobytes()
        audio_format, bits = 1, 16
    elif fmt == "float32":
        payload = buf.samples.astype("<f4").tobytes()
        audio_format, bits = 3, 32
    else:
        raise ValueError(f"unknown wav format {fmt!r}")
    block_align = bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        audio_format,
        1,
        buf.sample_rate_hz,
        buf.sample_rate_hz * block_align,
        block_align,
        bits,
        b"data",
        len(payload),
    )
    path.write_bytes(header + payload)


def quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    """Round-trip samples through the PCM16 convention used on disk."""
    ints = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767)
    return ints / 32768.0


def _design_lowpass(up: int, down: int) -> np.ndarray:
    """Windowed-sinc anti-aliasing kernel: Kaiser beta 8.6, 64 taps/phase.

    The kernel is expressed on the up-sampled grid and spans 64 input
    samples, i.e. each polyphase branch sees 64 taps.  Cutoff sits at the
    output Nyquist (up/down of the input Nyquist).
    """
    half = 32 * up
    n = np.arange(-half, half + 1)
    c = up / down  # cutoff as a fraction of the input Nyquist
    h = c * np.sinc(c * n / up)
    return h * np.kaiser(2 * half + 1, 8.6)


def resample_to_16k(buf: AudioBuffer) -> AudioBuffer:
    """Band-limit below 8 kHz and decimate to exactly 16 kHz.

    Identity for 16 kHz input (hence idempotent).  Output length is
    round(n * 16000 / rate).
    """
    rate = buf.sample_rate_hz
    if rate == CANONICAL_RATE:
        return buf
    if rate < CANONICAL_RATE:
        raise UpsampleRequested(f"{buf.id}: rate {rate} below 16000")

    g = math.gcd(rate, CANONICAL_RATE)
    up, down = CANONICAL_RATE // g, rate // g
    n = buf.samples.size
    n_out = int(round(n * CANONICAL_RATE / rate))

    # upfirdn keeps conv indices j*down; shift the input by z zeros so the
    # kernel center (delay 32*up) lands on that grid.
    z = (-32) % down
    off = (32 + z) * up // down
    x = np.concatenate([np.zeros(z), buf.samples, np.zeros(64)])
    h = _design_lowpass(up, down)
    y = upfirdn(h, x, up=up, down=down)
    y = np.clip(y[off : off + n_out], -1.0, 1.0)
    return AudioBuffer(y, CANONICAL_RATE, buf.id)


def _make_window(kind: str, frame_len: int) -> np.ndarray:
    if kind == "hann":
        return np.hanning(frame_len)
    if kind == "gaussian":
        # +-3 sigma at the frame edges
        t = np.arange(frame_len) - (frame_len - 1) / 2.0
        return np.exp(-0.5 * (t / (frame_len / 6.0)) ** 2)
    if kind == "rectangular":
        return np.ones(frame_len)
    raise ValueError(f"window must be one of {_WINDOWS}, got {kind!r}")


def frame_signal(
    buf: AudioBuffer, frame_s: float, hop_s: float, window: str = "hann"
) -> FrameSequence:
    """Slice the signal into overlapping windowed frames.

    n_frames = floor((n_samples - frame_len) / hop) + 1.
    """
    if not 0 < hop_s <= frame_s:
        raise ValueError("need 0 < hop_s <= frame_s")
    fs = buf.sample_rate_hz
    frame_len = int(round(frame_s * fs))
    hop = int(round(hop_s * fs))
    n = buf.samples.size
    if frame_len > n:
        raise SignalTooShort(f"{buf.id}: {n} samples < frame of {frame_len}")
    n_frames = (n - frame_len) // hop + 1
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = buf.samples[idx] * _make_window(window, frame_len)[None, :]
    return FrameSequence(frames, frame_s, hop_s, fs)
