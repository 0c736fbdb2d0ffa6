"""Batch command-line frontend: config-driven, reproducible runs.

Every command validates its inputs, writes results into a run directory
through temp-file renames, and embeds (config hash, seed, toolkit
version) in its outputs.  Exit codes: 0 success, 1 runtime failure,
2 usage/config error.
"""

from __future__ import annotations

import functools
import hashlib
import json
import os
import re
import sys
from pathlib import Path

import click
import jsonschema
import yaml

from . import __version__
from .audio import load_wav
from .axes import AXIS_IDS
from .corpus import load_manifest
from .errors import ConfigError, RieError
from .evaluate import cross_validate, make_folds, render_report
from .features import extract_features, write_features_csv
from .net import TrainConfig
from .pipeline import (
    CLASSICAL_KINDS,
    METHOD_NAMES,
    ClassicalMethod,
    FeatNetMethod,
    SslHeadMethod,
    load_dataset,
    make_method,
    save_featnet,
    save_sslhead,
)
from .regress import save as save_classical
from .synth import generate_corpus

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["version", "corpus"],
    "properties": {
        "version": {"const": 1},
        "corpus": {
            "type": "object",
            "required": ["dir"],
            "properties": {
                "dir": {"type": "string"},
                "features": {"type": "string"},
            },
        },
        "cv": {
            "type": "object",
            "properties": {
                "k": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer"},
                "selection_k": {"type": "integer", "minimum": 1},
                "methods": {
                    "type": "array",
                    "items": {"enum": list(METHOD_NAMES)},
                },
                "hyper": {"type": "object"},
                "train": {"type": "object"},
            },
        },
        "report": {
            "type": "object",
            "properties": {
                "formats": {"type": "array", "items": {"enum": ["markdown", "csv"]}}
            },
        },
        "provider": {
            "type": "object",
            "properties": {
                "style": {"enum": ["openai", "gemini"]},
                "endpoint": {"type": "string"},
                "model": {"type": "string"},
                "api_key_env": {"type": "string"},
                "language": {"enum": ["en", "ja"]},
            },
        },
    },
}

_ENV_PATTERN = re.compile(r"\$\{([A-Z0-9_]+)\}")


def _interpolate_secrets(cfg: dict) -> dict:
    """${VAR} expansion, allowed only inside the provider section."""
    provider = cfg.get("provider")
    if not isinstance(provider, dict):
        return cfg
    out = dict(provider)
    for key, value in provider.items():
        if isinstance(value, str):
            out[key] = _ENV_PATTERN.sub(lambda m: os.environ.get(m.group(1), ""), value)
    cfg = dict(cfg)
    cfg["provider"] = out
    return cfg


def load_config(path) -> tuple[dict, str]:
    """Validated config plus its content hash (hash taken before secrets)."""
    try:
        raw = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    try:
        cfg = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML: {e}") from e
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"config schema: {e.message}") from e
    digest = hashlib.sha256(
        json.dumps(cfg, sort_keys=True, default=str).encode()
    ).hexdigest()[:16]
    return _interpolate_secrets(cfg), digest


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def finalize_run(run_dir: Path) -> None:
    """Write the append-only run manifest with per-file checksums."""
    entries = {}
    for file in sorted(run_dir.rglob("*")):
        if file.is_file() and file.name != "run_manifest.json":
            entries[str(file.relative_to(run_dir))] = hashlib.sha256(
                file.read_bytes()
            ).hexdigest()
    atomic_write_text(run_dir / "run_manifest.json", json.dumps(entries, indent=2, sort_keys=True))


def _meta_header(seed, config_hash, corpus) -> dict:
    return {
        "seed": seed,
        "config_hash": config_hash,
        "toolkit_version": __version__,
        "corpus": str(corpus),
    }


def runtime_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (click.ClickException, click.Abort):
            raise
        except ConfigError as e:
            raise click.UsageError(str(e)) from e
        except RieError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.version_option(__version__)
@click.option("--seed", type=int, default=None, help="default seed for subcommands")
@click.option("--jobs", type=int, default=None, help="parallelism hint (provider concurrency)")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="default config file for subcommands")
@click.pass_context
def main(ctx, seed, jobs, config_path):
    """Relative voice impression estimation toolkit."""
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, jobs=jobs, config=config_path)


def _ctx_default(ctx, key, value):
    if value is not None:
        return value
    return (ctx.obj or {}).get(key)


@main.command("synth")
@click.option("--pairs", "n_pairs", type=int, required=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
@runtime_errors
def cmd_synth(ctx, n_pairs, seed, out):
    """Generate the synthetic corpus (wavs, labels, surrogate embeddings)."""
    seed = _ctx_default(ctx, "seed", seed) or 0
    out = Path(out)
    if out.exists():
        raise ConfigError(f"{out} already exists; corpus directories are write-once")
    tmp = out.with_name(out.name + f".tmp{os.getpid()}")
    generate_corpus(n_pairs, seed, tmp)
    os.replace(tmp, out)
    click.echo(f"wrote corpus of {n_pairs} pairs to {out}")


@main.command("extract")
@click.option("--corpus", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@runtime_errors
def cmd_extract(corpus, out):
    """Batch feature extraction over every utterance in the manifest."""
    corpus = Path(corpus)
    pairs = load_manifest(corpus / "pairs.jsonl")
    utt_ids = sorted({u for p in pairs for u in (p.utt_a, p.utt_b)})
    vectors = []
    for utt_id in utt_ids:
        buf = load_wav(corpus / "wavs" / f"{utt_id}.wav", utt_id)
        vectors.append(extract_features(buf))
    tmp = Path(out).with_name(Path(out).name + f".tmp{os.getpid()}")
    write_features_csv(tmp, vectors)
    os.replace(tmp, out)
    click.echo(f"wrote {len(vectors)} feature rows to {out}")


@main.command("select")
@click.option("--corpus", type=click.Path(exists=True), required=True)
@click.option("--features", type=click.Path(exists=True), required=True)
@click.option("--k", type=int, default=8, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@runtime_errors
def cmd_select(corpus, features, k, out):
    """Per-axis correlation ranking over the whole corpus (no CV)."""
    from .features import FEATURE_NAMES
    from .regress import rank_features

    ds = load_dataset(corpus, features)
    X = ds.diff_matrix(ds.pairs)
    Y = ds.label_rows(ds.pairs)
    lines = ["axis,rank,feature,pearson_r,selected"]
    for i, axis in enumerate(AXIS_IDS):
        report = rank_features(X, Y[:, i], FEATURE_NAMES, k, axis)
        for rank, (name, r) in enumerate(report.ranked, start=1):
            chosen = "1" if name in report.selected else "0"
            lines.append(f"{axis},{rank},{name},{r:.6f},{chosen}")
    atomic_write_text(out, "\n".join(lines) + "\n")
    click.echo(f"wrote selection report to {out}")


def _train_cfg_from(cfg_section: dict | None, method: str, seed: int) -> TrainConfig:
    base = {"seed": seed}
    if method == "featnet":
        base.update(optimizer="adam", lr=0.001)
    else:
        base.update(optimizer="adamw", lr=0.002)
    base.update(cfg_section or {})
    return TrainConfig(**base)


@main.command("train")
@click.option("--method", type=click.Choice(METHOD_NAMES), required=True)
@click.option("--corpus", type=click.Path(exists=True), required=True)
@click.option("--features", type=click.Path(), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--k", type=int, default=8, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@runtime_errors
def cmd_train(method, corpus, features, seed, k, out):
    """Fit one model kind on the full corpus and save it."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    features = features or (Path(corpus) / "features.csv")
    ds = load_dataset(corpus, features, with_embeddings=method == "sslhead")
    if method in CLASSICAL_KINDS:
        m = ClassicalMethod(method, k=k, seed=seed)
        state = m.fit(ds.pairs, ds, fold=0)
        for axis, model in state.models.items():
            save_classical(model, out_dir / f"{method}_{axis}.riem")
    elif method == "featnet":
        m = FeatNetMethod(train_cfg=_train_cfg_from(None, method, seed), seed=seed)
        state = m.fit(ds.pairs, ds, fold=0)
        save_featnet(out_dir / "featnet.riem", state)
    else:
        m = SslHeadMethod(train_cfg=_train_cfg_from(None, method, seed), seed=seed)
        state = m.fit(ds.pairs, ds, fold=0)
        save_sslhead(out_dir / "sslhead.riem", state)
    atomic_write_text(
        out_dir / "train_meta.json",
        json.dumps(_meta_header(seed, "n/a", corpus) | {"method": method}, indent=2, sort_keys=True),
    )
    finalize_run(out_dir)
    click.echo(f"saved {method} model(s) to {out_dir}")


def _build_methods(cfg: dict, seed: int) -> dict:
    cv_cfg = cfg.get("cv", {})
    k = cv_cfg.get("selection_k", 8)
    hyper = cv_cfg.get("hyper", {})
    train_cfgs = cv_cfg.get("train", {})
    methods = {}
    for name in cv_cfg.get("methods", ["linear", "ridge"]):
        if name in CLASSICAL_KINDS:
            methods[name] = ClassicalMethod(name, k=k, hyper=hyper.get(name, {}), seed=seed)
        else:
            methods[name] = make_method(
                name, seed=seed, train_cfg=_train_cfg_from(train_cfgs.get(name), name, seed)
            )
    return methods


@main.command("cv")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="override the config seed")
@click.pass_context
@runtime_errors
def cmd_cv(ctx, config_path, out, seed):
    """Full cross-validation over the configured methods; writes reports."""
    config_path = _ctx_default(ctx, "config", config_path)
    seed = _ctx_default(ctx, "seed", seed)
    if config_path is None:
        raise click.UsageError("cv requires --config")
    cfg, digest = load_config(config_path)
    run_dir = Path(out)
    run_dir.mkdir(parents=True, exist_ok=True)
    cv_cfg = cfg.get("cv", {})
    seed = cv_cfg.get("seed", 0) if seed is None else seed
    corpus = cfg["corpus"]["dir"]
    features = cfg["corpus"].get("features", str(Path(corpus) / "features.csv"))
    wants_embeddings = any(m == "sslhead" for m in cv_cfg.get("methods", []))
    ds = load_dataset(corpus, features, with_embeddings=wants_embeddings)
    if ds.features is None:
        raise ConfigError(f"no features file at {features}; run `rie extract` first")
    plan = make_folds([p.pair_id for p in ds.pairs], cv_cfg.get("k", 10), seed)
    methods = _build_methods(cfg, seed)
    table, _ = cross_validate(methods, ds, plan)
    table.meta.update(_meta_header(seed, digest, corpus))

    results = {
        "meta": table.meta,
        "methods": table.methods,
        "cells": {
            f"{axis}|{m}": list(table.cells[(axis, m)])
            for axis in AXIS_IDS
            for m in table.methods
        },
    }
    atomic_write_text(run_dir / "results.json", json.dumps(results, indent=2, sort_keys=True))
    for fmt in cfg.get("report", {}).get("formats", ["markdown"]):
        ext = "md" if fmt == "markdown" else "csv"
        atomic_write_text(run_dir / f"report.{ext}", render_report(table, fmt))
    finalize_run(run_dir)
    click.echo(f"cross-validation finished; reports in {run_dir}")


@main.command("judge")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--fold", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@click.pass_context
@runtime_errors
def cmd_judge(ctx, config_path, fold, out, seed):
    """Judge the designated fold with the configured MLLM provider."""
    from .mllm import AuditLog, ProviderConfig, judge_fold

    config_path = _ctx_default(ctx, "config", config_path)
    seed = _ctx_default(ctx, "seed", seed)
    if config_path is None:
        raise click.UsageError("judge requires --config")
    cfg, digest = load_config(config_path)
    provider = cfg.get("provider")
    if not provider or "endpoint" not in provider:
        raise ConfigError("judge requires a provider section with an endpoint")
    run_dir = Path(out)
    run_dir.mkdir(parents=True, exist_ok=True)
    cv_cfg = cfg.get("cv", {})
    seed = cv_cfg.get("seed", 0) if seed is None else seed
    corpus = Path(cfg["corpus"]["dir"])
    ds = load_dataset(corpus, cfg["corpus"].get("features"))
    plan = make_folds([p.pair_id for p in ds.pairs], cv_cfg.get("k", 10), seed)
    pcfg = ProviderConfig(
        style=provider.get("style", "openai"),
        endpoint=provider["endpoint"],
        model=provider.get("model", "default"),
        api_key_env=provider.get("api_key_env", "RIE_API_KEY"),
        concurrency=_ctx_default(ctx, "jobs", None) or 2,
    )
    audit = AuditLog(run_dir / "judge_audit.jsonl")
    table, _ = judge_fold(
        ds, plan, pcfg, corpus / "wavs", fold=fold,
        language=provider.get("language", "ja"), audit=audit,
    )
    table.meta.update(_meta_header(seed, digest, corpus))
    atomic_write_text(run_dir / "judge_report.md", render_report(table, "markdown"))
    finalize_run(run_dir)
    click.echo(f"judged fold {fold}; report in {run_dir}")


@main.command("report")
@click.option("--run", "run_dir", type=click.Path(exists=True), required=True)
@click.option("--format", "fmt", type=click.Choice(["markdown", "csv"]), default="markdown")
@runtime_errors
def cmd_report(run_dir, fmt):
    """Re-render the saved ResultTable of a finished run."""
    from .evaluate import ResultTable

    run_dir = Path(run_dir)
    results_path = run_dir / "results.json"
    if not results_path.exists():
        raise ConfigError(f"{results_path} not found")
    obj = json.loads(results_path.read_text())
    cells = {}
    for key, (p, c) in obj["cells"].items():
        axis, method = key.split("|", 1)
        cells[(axis, method)] = (p, c)
    table = ResultTable(obj["methods"], cells, obj.get("meta", {}))
    text = render_report(table, fmt)
    ext = "md" if fmt == "markdown" else "csv"
    atomic_write_text(run_dir / f"report.{ext}", text)
    click.echo(text)


if __name__ == "__main__":
    main()
