"""Experiment configuration, run orchestration, and manifests.

An experiment is one YAML file with dataset / embedder / metric / training /
evaluation sections (grammar documented in the README). Every run writes a
manifest: the fully resolved config echoed back together with provenance
(package version, kernel engine, command). A manifest is itself a valid
config file, so re-running it reproduces the run's numeric artifacts bitwise.
"""

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import _kernels
from . import evaluation as evaluation_mod
from . import io as io_mod
from . import metric as metric_mod
from . import plots
from . import trainer as trainer_mod
from .data import (Dataset, ProtocolSplit, SyntheticConfig, generate_synthetic,
                   load_delimited, split_protocol, write_delimited)
from .embedder import EmbedderConfig, EmbedderParams, init as embedder_init
from .errors import ConfigError, DataFormatError
from .mining import build_minibatch, mine
from .trainer import MINING_MODES, TrainConfig

_REQUIRED = object()


def _get(section: dict, key: str, typ, path: str, default=_REQUIRED):
    if key not in section:
        if default is _REQUIRED:
            raise ConfigError(f"missing required field '{path}.{key}'")
        return default
    value = section[key]
    try:
        if typ is bool:
            if not isinstance(value, bool):
                raise ValueError("expected true/false")
            return value
        return typ(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{path}.{key}': {exc}")


def _section(doc: dict, name: str, required: bool = True) -> dict:
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing required section '{name}'")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    return sec


@dataclass
class DatasetSection:
    synthetic: SyntheticConfig | None
    path: str | None
    split_fractions: tuple[float, float, float]
    split_seed: int


@dataclass
class EvaluationSection:
    gallery_draws: int
    ranks: tuple[int, ...]
    seed: int


@dataclass
class AblationSection:
    seeds: int
    arms: tuple[str, ...]
    lambdas: tuple[float, ...]


@dataclass
class ExperimentConfig:
    dataset: DatasetSection
    embedder_section: dict
    metric_dim: int | None
    training: TrainConfig
    evaluation: EvaluationSection
    ablation: AblationSection
    output_dir: str | None

    def embedder_config(self, input_dim: int) -> EmbedderConfig:
        sec, path = self.embedder_section, "embedder"
        return EmbedderConfig(
            input_dim=input_dim,
            num_branches=_get(sec, "num_branches", int, path, 3),
            overlap_fraction=_get(sec, "overlap_fraction", float, path, 0.0),
            branch_hidden_dims=tuple(_get(sec, "branch_hidden_dims", list, path, [])),
            joint_hidden_dim=_get(sec, "joint_hidden_dim", int, path),
            output_dim=_get(sec, "output_dim", int, path),
            tied_branches=_get(sec, "tied_branches", bool, path, False),
            seed=_get(sec, "seed", int, path, 0),
        )

    def metric_config(self, output_dim: int) -> metric_mod.MetricConfig:
        dim = self.metric_dim if self.metric_dim is not None else output_dim
        return metric_mod.MetricConfig(metric_dim=dim, lam=self.training.lam,
                                       margin=self.training.margin)

    def to_dict(self) -> dict:
        """Canonical config dict with all defaults materialized."""
        ds: dict = {
            "split_fractions": list(self.dataset.split_fractions),
            "split_seed": self.dataset.split_seed,
        }
        if self.dataset.synthetic is not None:
            ds["synthetic"] = dataclasses.asdict(self.dataset.synthetic)
        if self.dataset.path is not None:
            ds["path"] = self.dataset.path
        doc = {
            "dataset": ds,
            "embedder": dict(self.embedder_section),
            "metric": {} if self.metric_dim is None else {"metric_dim": self.metric_dim},
            "training": {
                "learning_rate": self.training.learning_rate,
                "steps": self.training.steps,
                "k": self.training.k,
                "margin": self.training.margin,
                "lambda": self.training.lam,
                "mining_mode": self.training.mining_mode,
                "augment_magnitude": self.training.augment_magnitude,
                "seed": self.training.seed,
                "record_every": self.training.record_every,
                "val_anchors": self.training.val_anchors,
            },
            "evaluation": {
                "gallery_draws": self.evaluation.gallery_draws,
                "ranks": list(self.evaluation.ranks),
                "seed": self.evaluation.seed,
            },
            "ablation": {
                "seeds": self.ablation.seeds,
                "arms": list(self.ablation.arms),
                "lambdas": list(self.ablation.lambdas),
            },
        }
        if self.output_dir is not None:
            doc["output_dir"] = self.output_dir
        return doc


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping of sections")
    if "config" in doc:  # run manifest: the echoed config is the config
        doc = doc["config"]
        if not isinstance(doc, dict):
            raise ConfigError("manifest 'config' entry must be a mapping")

    ds = _section(doc, "dataset")
    synthetic = None
    if "synthetic" in ds:
        syn = ds["synthetic"]
        if not isinstance(syn, dict):
            raise ConfigError("section 'dataset.synthetic' must be a mapping")
        p = "dataset.synthetic"
        synthetic = SyntheticConfig(
            num_identities=_get(syn, "num_identities", int, p),
            samples_per_view=_get(syn, "samples_per_view", int, p),
            input_dim=_get(syn, "input_dim", int, p),
            manifold_curvature=_get(syn, "manifold_curvature", float, p, 0.0),
            intra_class_spread=_get(syn, "intra_class_spread", float, p, 0.0),
            view_offset_magnitude=_get(syn, "view_offset_magnitude", float, p, 0.0),
            seed=_get(syn, "seed", int, p, 0),
        )
        synthetic.validate()
    path = _get(ds, "path", str, "dataset", None)
    if synthetic is None and path is None:
        raise ConfigError("dataset section needs either 'synthetic' or 'path'")
    fractions = _get(ds, "split_fractions", list, "dataset", [0.6, 0.2, 0.2])
    if len(fractions) != 3:
        raise ConfigError("field 'dataset.split_fractions': expected three fractions")
    dataset = DatasetSection(synthetic, path, tuple(float(f) for f in fractions),
                             _get(ds, "split_seed", int, "dataset", 0))

    emb = _section(doc, "embedder")
    _get(emb, "joint_hidden_dim", int, "embedder")  # fail fast on the required keys
    _get(emb, "output_dim", int, "embedder")

    met = _section(doc, "metric", required=False)
    metric_dim = _get(met, "metric_dim", int, "metric", None)

    tr = _section(doc, "training")
    training = TrainConfig(
        learning_rate=_get(tr, "learning_rate", float, "training"),
        steps=_get(tr, "steps", int, "training"),
        k=_get(tr, "k", int, "training", 8),
        margin=_get(tr, "margin", float, "training", 2.0),
        lam=_get(tr, "lambda", float, "training", 1e-2),
        mining_mode=_get(tr, "mining_mode", str, "training", MINING_MODES[0]),
        augment_magnitude=_get(tr, "augment_magnitude", float, "training", 0.0),
        seed=_get(tr, "seed", int, "training", 0),
        record_every=_get(tr, "record_every", int, "training", 50),
        val_anchors=_get(tr, "val_anchors", int, "training", 32),
    )
    training.validate()

    ev = _section(doc, "evaluation", required=False)
    evaluation = EvaluationSection(
        gallery_draws=_get(ev, "gallery_draws", int, "evaluation", 10),
        ranks=tuple(int(r) for r in _get(ev, "ranks", list, "evaluation", [1, 5, 10])),
        seed=_get(ev, "seed", int, "evaluation", 0),
    )

    ab = _section(doc, "ablation", required=False)
    arms = tuple(_get(ab, "arms", list, "ablation", list(MINING_MODES)))
    for arm in arms:
        if arm not in MINING_MODES:
            raise ConfigError(f"field 'ablation.arms': unknown mining mode {arm!r}")
    ablation = AblationSection(
        seeds=_get(ab, "seeds", int, "ablation", 5),
        arms=arms,
        lambdas=tuple(float(v) for v in _get(ab, "lambdas", list, "ablation", [])),
    )

    return ExperimentConfig(dataset, dict(emb), metric_dim, training, evaluation,
                            ablation, _get(doc, "output_dir", str, "", None))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}")
    return parse_config(doc)


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.dataset.synthetic is not None:
        return generate_synthetic(cfg.dataset.synthetic)
    return load_delimited(cfg.dataset.path)


def build_split(cfg: ExperimentConfig, dataset: Dataset) -> ProtocolSplit:
    return split_protocol(dataset, cfg.dataset.split_fractions, cfg.dataset.split_seed)


def write_manifest(path, cfg: ExperimentConfig, command: str) -> None:
    doc = {
        "config": cfg.to_dict(),
        "provenance": {
            "command": command,
            "engine": _kernels.engine_name(),
            "package_version": __version__,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True)


def run_train(cfg: ExperimentConfig, out_dir) -> trainer_mod.TrainState:
    """Train per config; writes checkpoint, loss history, and manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset(cfg)
    split = build_split(cfg, dataset)
    ecfg = cfg.embedder_config(dataset.input_dim)
    mcfg = cfg.metric_config(ecfg.output_dim)
    state = trainer_mod.train(cfg.training, split, ecfg, mcfg)
    io_mod.write_checkpoint(out / "checkpoint.json", state.embedder_params,
                            state.metric_params)
    io_mod.write_loss_history(out / "loss_history.csv", state.loss_history)
    if state.loss_history:
        steps = [h[0] for h in state.loss_history]
        plots.write_line_plot(
            out / "loss_history.svg",
            [("train", steps, [h[1] for h in state.loss_history]),
             ("validation", steps, [h[2] for h in state.loss_history])],
            title="loss", xlabel="step", ylabel="loss")
    write_manifest(out / "manifest.yaml", cfg, "train")
    return state


def _load_params(cfg: ExperimentConfig, checkpoint_path, dataset: Dataset
                 ) -> tuple[EmbedderParams, metric_mod.MetricParams]:
    emb_params, met_params = io_mod.read_checkpoint(checkpoint_path)
    if emb_params.config.input_dim != dataset.input_dim:
        raise DataFormatError(
            f"checkpoint expects input dimension {emb_params.config.input_dim} "
            f"but the configured dataset has {dataset.input_dim}")
    return emb_params, met_params


def run_eval(cfg: ExperimentConfig, checkpoint_path, out_dir) -> dict:
    """CMC on the test split; emits cmc.csv, cmc.svg, and rank statistics."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset(cfg)
    split = build_split(cfg, dataset)
    emb_params, met_params = _load_params(cfg, checkpoint_path, dataset)
    curve, per_draw = evaluation_mod.averaged_cmc(
        emb_params, met_params, split.test,
        cfg.evaluation.gallery_draws, cfg.evaluation.seed)
    io_mod.write_cmc(out / "cmc.csv", curve.rates)
    ranks = np.arange(1, len(curve) + 1)
    plots.write_line_plot(out / "cmc.svg", [("cmc", ranks.tolist(), curve.rates.tolist())],
                          title="cumulative matching characteristic",
                          xlabel="rank", ylabel="identification rate")
    stats = {}
    for k in cfg.evaluation.ranks:
        if 1 <= k <= len(curve):
            col = per_draw[:, k - 1]
            stats[k] = (float(col.mean()), float(col.std()))
    return stats


def run_spectrum(checkpoint_path, out_dir) -> np.ndarray:
    """Eigenvalues of M = W W^T from a checkpoint, plus plot."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, met_params = io_mod.read_checkpoint(checkpoint_path)
    values = metric_mod.spectrum(met_params)
    io_mod.write_spectrum(out / "spectrum.csv", values)
    plots.write_line_plot(
        out / "spectrum.svg",
        [("eigenvalues", list(range(1, len(values) + 1)), values.tolist())],
        title="spectrum of the learned metric matrix",
        xlabel="index", ylabel="eigenvalue")
    return values


def _arm_rank1(cfg: ExperimentConfig, split: ProtocolSplit, ecfg: EmbedderConfig,
               mining_mode: str, lam: float, seed: int) -> tuple[float, np.ndarray]:
    tcfg = dataclasses.replace(cfg.training, mining_mode=mining_mode,
                               lam=lam, seed=seed)
    mcfg = metric_mod.MetricConfig(
        metric_dim=cfg.metric_dim if cfg.metric_dim is not None else ecfg.output_dim,
        lam=lam, margin=tcfg.margin)
    state = trainer_mod.train(tcfg, split, ecfg, mcfg)
    curve, per_draw = evaluation_mod.averaged_cmc(
        state.embedder_params, state.metric_params, split.validation,
        cfg.evaluation.gallery_draws, cfg.evaluation.seed)
    return float(per_draw[:, 0].mean()), curve.rates


def run_ablation(cfg: ExperimentConfig, out_dir) -> list[tuple[str, float, float]]:
    """Run the mining arms (and optional lambda sweep) with shared seeds.

    Rank-1 is measured on the validation identities, averaged over gallery
    draws and over `ablation.seeds` seeds derived from the training seed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset(cfg)
    split = build_split(cfg, dataset)
    ecfg = cfg.embedder_config(dataset.input_dim)
    seeds = [cfg.training.seed + i for i in range(cfg.ablation.seeds)]

    rows = []
    overlay = []
    for arm in cfg.ablation.arms:
        rank1s, curves = [], []
        for seed in seeds:
            r1, rates = _arm_rank1(cfg, split, ecfg, arm, cfg.training.lam, seed)
            rank1s.append(r1)
            curves.append(rates)
        mean_curve = np.mean(np.stack(curves), axis=0)
        io_mod.write_cmc(out / f"cmc_{arm}.csv", mean_curve)
        overlay.append((arm, list(range(1, len(mean_curve) + 1)), mean_curve.tolist()))
        rows.append((arm, float(np.mean(rank1s)), float(np.std(rank1s))))
    for lam in cfg.ablation.lambdas:
        rank1s = []
        for seed in seeds:
            r1, _ = _arm_rank1(cfg, split, ecfg, cfg.training.mining_mode, lam, seed)
            rank1s.append(r1)
        rows.append((f"lambda={lam:g}", float(np.mean(rank1s)), float(np.std(rank1s))))

    io_mod.write_ablation_table(out / "ablation_table.csv", rows)
    plots.write_line_plot(out / "cmc_arms.svg", overlay,
                          title="mining ablation", xlabel="rank",
                          ylabel="identification rate")
    write_manifest(out / "manifest.yaml", cfg, "ablation")
    return rows


def run_mine_debug(cfg: ExperimentConfig, checkpoint_path, out_path,
                   num_batches: int) -> list:
    """Audit trace of the miner on the train split."""
    dataset = build_dataset(cfg)
    split = build_split(cfg, dataset)
    if checkpoint_path is not None:
        emb_params, met_params = _load_params(cfg, checkpoint_path, dataset)
    else:
        ecfg = cfg.embedder_config(dataset.input_dim)
        emb_params = embedder_init(ecfg)
        met_params = metric_mod.init(
            ecfg.output_dim,
            cfg.metric_dim if cfg.metric_dim is not None else ecfg.output_dim,
            np.random.default_rng(cfg.training.seed))
    rng = np.random.default_rng(cfg.training.seed)
    usable = trainer_mod.usable_anchor_indices(split.train)
    rows = []
    for _ in range(num_batches):
        anchor = split.train[int(usable[rng.integers(len(usable))])]
        batch = build_minibatch(split.train, anchor, cfg.training.k, rng)
        result = mine(emb_params, met_params, batch)
        rows.append((anchor.identity, result.positive_distance,
                     result.negative_distance, result.fallback_used))
    io_mod.write_mine_trace(out_path, rows)
    return rows


def run_gen_data(cfg: ExperimentConfig, out_path) -> Dataset:
    """Write the configured synthetic dataset as delimited text."""
    if cfg.dataset.synthetic is None:
        raise ConfigError("gen-data needs a dataset.synthetic section")
    dataset = generate_synthetic(cfg.dataset.synthetic)
    write_delimited(dataset, out_path)
    return dataset
