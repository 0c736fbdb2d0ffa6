"""Run an SSL encoder over 16 kHz WAVs and dump every hidden layer.

Output files use the "RIE1" byte layout the estimation toolkit reads:
magic "RIE1", u32 version=1, u32 L, u32 T, u32 D, then L*T*D float32
little-endian, layer-major.  That file format (plus mono 16 kHz WAV in)
is the entire contract with the consumer.

Model ids of the form "random:hubert-base" build a deterministic
randomly-initialized base-size model from the architecture config alone;
anything else is fetched with transformers.from_pretrained.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EMBEDDING_MAGIC = b"RIE1"
EMBEDDING_VERSION = 1
_HEADER = struct.Struct("<4sIIII")

RANDOM_MODEL_SEED = 20260810


class ModelLoadError(Exception):
    pass


class AudioFormatError(Exception):
    pass


@dataclass
class ExportJob:
    model_id: str
    inputs: list  # wav paths
    out_dir: Path
    layers: str | list = "all"  # "all" or explicit 0-based indices

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        self.inputs = [Path(p) for p in self.inputs]


def read_wav_16k_mono(path) -> np.ndarray:
    """PCM16 mono 16 kHz only; resampling is the consumer toolkit's job."""
    try:
        with wave.open(str(path), "rb") as wav:
            channels = wav.getnchannels()
            rate = wav.getframerate()
            width = wav.getsampwidth()
            frames = wav.readframes(wav.getnframes())
    except (wave.Error, EOFError) as e:
        raise AudioFormatError(f"{path}: {e}") from e
    if channels != 1:
        raise AudioFormatError(f"{path}: {channels} channels, need mono")
    if rate != 16000:
        raise AudioFormatError(f"{path}: {rate} Hz, need 16000")
    if width != 2:
        raise AudioFormatError(f"{path}: {8 * width}-bit, need PCM16")
    return np.frombuffer(frames, dtype="<i2").astype(np.float32) / 32768.0


def load_model(model_id: str):
    """A (model, n_layers, hidden_size) triple in eval mode on CPU."""
    import torch
    from transformers import HubertConfig, HubertModel

    torch.set_num_threads(1)  # keeps re-exports byte-identical
    if model_id.startswith("random:"):
        arch = model_id.split(":", 1)[1]
        if arch != "hubert-base":
            raise ModelLoadError(f"unknown random architecture {arch!r}")
        torch.manual_seed(RANDOM_MODEL_SEED)
        model = HubertModel(HubertConfig())
    else:
        try:
            from transformers import AutoModel

            model = AutoModel.from_pretrained(model_id)
        except Exception as e:
            raise ModelLoadError(f"cannot load {model_id!r}: {e}") from e
    model.eval()
    cfg = model.config
    return model, cfg.num_hidden_layers + 1, cfg.hidden_size


def write_rie1(path, tensor: np.ndarray) -> None:
    L, T, D = tensor.shape
    header = _HEADER.pack(EMBEDDING_MAGIC, EMBEDDING_VERSION, L, T, D)
    Path(path).write_bytes(header + np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def encode(model, samples: np.ndarray, layer_indices) -> np.ndarray:
    import torch

    with torch.no_grad():
        out = model(torch.from_numpy(samples)[None, :], output_hidden_states=True)
    stack = [out.hidden_states[i][0].numpy().astype(np.float32) for i in layer_indices]
    return np.stack(stack)


def export(job: ExportJob):
    """One .rie1 per utterance plus embeddings_manifest.csv.

    Returns a list of (utt_id, L, T, D) rows (the manifest content).
    """
    model, n_layers, hidden = load_model(job.model_id)
    if job.layers == "all":
        layer_indices = list(range(n_layers))
    else:
        layer_indices = [int(i) for i in job.layers]
        bad = [i for i in layer_indices if not 0 <= i < n_layers]
        if bad:
            raise ModelLoadError(f"layer indices {bad} outside 0..{n_layers - 1}")

    job.out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for wav_path in job.inputs:
        samples = read_wav_16k_mono(wav_path)
        tensor = encode(model, samples, layer_indices)
        utt_id = Path(wav_path).stem
        write_rie1(job.out_dir / f"{utt_id}.rie1", tensor)
        rows.append((utt_id, tensor.shape[0], tensor.shape[1], tensor.shape[2]))

    manifest = job.out_dir / "embeddings_manifest.csv"
    lines = ["utt_id,layers,frames,dim"] + [f"{r[0]},{r[1]},{r[2]},{r[3]}" for r in rows]
    manifest.write_text("\n".join(lines) + "\n")
    return rows
