"""export-embeddings command line."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .export import AudioFormatError, ExportJob, ModelLoadError, export


@click.command()
@click.option("--model", "model_id", default="random:hubert-base", show_default=True,
              help="checkpoint id, or random:hubert-base for a seeded random model")
@click.option("--wav-dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--layers", default="all", show_default=True,
              help='"all" or comma-separated 0-based layer indices')
def main(model_id, wav_dir, out, layers):
    """Write per-utterance RIE1 embedding tensors for every WAV in a directory."""
    wavs = sorted(Path(wav_dir).glob("*.wav"))
    if not wavs:
        raise click.UsageError(f"no .wav files under {wav_dir}")
    layer_spec = "all" if layers == "all" else [s for s in layers.split(",") if s]
    try:
        rows = export(ExportJob(model_id, wavs, Path(out), layer_spec))
    except (ModelLoadError, AudioFormatError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    click.echo(f"exported {len(rows)} utterances to {out}")


if __name__ == "__main__":
    main()
