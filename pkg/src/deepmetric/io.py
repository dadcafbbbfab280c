"""Readers and writers for every artifact the package emits.

All delimited files use comma separation and shortest round-trip float
literals, so reading back a written file reproduces the in-memory values
exactly. The checkpoint is a single JSON document: a config echo plus flat
parameter lists (field order below is fixed by the sorted-key serialization).
"""

import dataclasses
import json

import numpy as np

from . import embedder as embedder_mod
from . import metric as metric_mod
from .errors import DataFormatError

CHECKPOINT_FORMAT = "deepmetric-checkpoint-v1"


def write_checkpoint(path, embedder_params: embedder_mod.EmbedderParams,
                     metric_params: metric_mod.MetricParams) -> None:
    """Config echo + flat parameter lists, exact round-trip."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "embedder_config": dataclasses.asdict(embedder_params.config),
        "embedder_params": [float(v) for v in embedder_params.flat],
        "metric_dim": int(metric_params.w.shape[1]),
        "metric_w": [float(v) for v in metric_params.w.ravel()],
    }
    doc["embedder_config"]["branch_hidden_dims"] = list(
        embedder_params.config.branch_hidden_dims)
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_checkpoint(path) -> tuple[embedder_mod.EmbedderParams, metric_mod.MetricParams]:
    try:
        with open(path, "r", encoding="ascii") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DataFormatError(f"checkpoint not found: {path}")
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not a valid checkpoint: {exc}")
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataFormatError(f"{path}: unknown checkpoint format {doc.get('format')!r}")
    cfg_dict = dict(doc["embedder_config"])
    cfg_dict["branch_hidden_dims"] = tuple(cfg_dict["branch_hidden_dims"])
    config = embedder_mod.EmbedderConfig(**cfg_dict)
    layout = embedder_mod.ParamLayout(config)
    flat = np.array(doc["embedder_params"], dtype=np.float64)
    if flat.shape != (layout.size,):
        raise DataFormatError(
            f"{path}: expected {layout.size} embedder parameters, got {flat.size}")
    metric_dim = int(doc["metric_dim"])
    w = np.array(doc["metric_w"], dtype=np.float64)
    if w.size != config.output_dim * metric_dim:
        raise DataFormatError(
            f"{path}: expected {config.output_dim * metric_dim} metric weights, got {w.size}")
    return (embedder_mod.EmbedderParams(config, flat, layout),
            metric_mod.MetricParams(w.reshape(config.output_dim, metric_dim)))


def _write_rows(path, header: str, rows) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _read_rows(path, header: str, types):
    try:
        with open(path, "r", encoding="ascii") as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError:
        raise DataFormatError(f"file not found: {path}")
    if not lines or lines[0] != header:
        raise DataFormatError(f"{path}: expected header {header!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(types):
            raise DataFormatError(f"{path}: line {lineno}: expected {len(types)} fields")
        try:
            rows.append(tuple(t(p) for t, p in zip(types, parts)))
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: {exc}")
    return rows


def write_loss_history(path, history) -> None:
    _write_rows(path, "step,train_loss,val_loss",
                [(int(s), float(t), float(v)) for s, t, v in history])


def read_loss_history(path) -> list[tuple[int, float, float]]:
    return _read_rows(path, "step,train_loss,val_loss", (int, float, float))


def write_cmc(path, rates) -> None:
    _write_rows(path, "rank,rate",
                [(r + 1, float(rate)) for r, rate in enumerate(rates)])


def read_cmc(path) -> np.ndarray:
    rows = _read_rows(path, "rank,rate", (int, float))
    return np.array([rate for _, rate in rows])


def write_spectrum(path, eigenvalues) -> None:
    """One eigenvalue per line, descending."""
    with open(path, "w", encoding="ascii") as fh:
        for v in eigenvalues:
            fh.write(repr(float(v)) + "\n")


def read_spectrum(path) -> np.ndarray:
    try:
        with open(path, "r", encoding="ascii") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except FileNotFoundError:
        raise DataFormatError(f"file not found: {path}")
    try:
        return np.array([float(ln) for ln in lines])
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}")


def write_mine_trace(path, rows) -> None:
    """One line per mined batch: anchor id, chosen distances, fallback flag."""
    _write_rows(path, "anchor_identity,positive_distance,negative_distance,fallback",
                [(int(a), float(p), float(n), int(f)) for a, p, n, f in rows])


def read_mine_trace(path) -> list[tuple[int, float, float, bool]]:
    rows = _read_rows(path, "anchor_identity,positive_distance,negative_distance,fallback",
                      (int, float, float, int))
    return [(a, p, n, bool(f)) for a, p, n, f in rows]


def write_ablation_table(path, rows) -> None:
    """Comparison table: one row per arm in the configured order."""
    _write_rows(path, "arm,rank1_mean,rank1_std",
                [(str(arm), float(m), float(s)) for arm, m, s in rows])


def read_ablation_table(path) -> list[tuple[str, float, float]]:
    return _read_rows(path, "arm,rank1_mean,rank1_std", (str, float, float))
