"""Contrastive training with mining strategy selection.

One step draws an anchor, builds a mini-batch from the opposite view, picks a
positive/negative pair according to the mining mode, and takes a vanilla SGD
step on the loss

    d(anchor, positive) + [margin - d(anchor, negative)]_+
    + (lambda/2) * ||W W^T - I||_F^2

with exact gradients chained through the metric layer and the embedder.
The three mining modes are the ablation arms: full moderate-positive plus
hardest-negative mining, hardest-negative only (random positive), and no
mining (random positive and negative).
"""

from dataclasses import dataclass, field

import numpy as np

from . import embedder as embedder_mod
from . import metric as metric_mod
from .data import Dataset, ProtocolSplit, augment
from .errors import ConfigError, DivergenceError
from .mining import MiniBatch, build_minibatch, mine, mine_hardest_negative

MINING_MODES = ("moderate_plus_hard_negative", "hard_negative_only", "none")

# one fixed seed for every validation-loss estimate, so curves from different
# runs of the same config are comparable point by point
EVAL_SEED = 90210


@dataclass
class TrainConfig:
    learning_rate: float
    steps: int
    k: int = 8
    margin: float = 2.0
    lam: float = 1e-2
    mining_mode: str = "moderate_plus_hard_negative"
    augment_magnitude: float = 0.0
    seed: int = 0
    record_every: int = 50
    val_anchors: int = 32

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.steps < 0 or self.k < 1 or self.record_every < 1 or self.val_anchors < 1:
            raise ConfigError("steps, k, record_every, val_anchors out of range")
        if self.margin <= 0 or self.lam < 0 or self.augment_magnitude < 0:
            raise ConfigError("margin must be positive; lambda and augment_magnitude nonnegative")
        if self.mining_mode not in MINING_MODES:
            raise ConfigError(
                f"mining_mode must be one of {MINING_MODES}, got {self.mining_mode!r}")


@dataclass
class TrainState:
    embedder_params: embedder_mod.EmbedderParams
    metric_params: metric_mod.MetricParams
    step: int = 0
    loss_history: list = field(default_factory=list)  # (step, train_loss, val_loss)


def contrastive_loss(d_pos: float, d_neg: float, margin: float) -> float:
    """d_pos + [margin - d_neg]_+"""
    if d_pos < 0 or d_neg < 0:
        raise ValueError("distances must be nonnegative")
    if margin <= 0:
        raise ValueError(f"margin must be > 0, got {margin}")
    return d_pos + max(0.0, margin - d_neg)


def total_loss(metric_params: metric_mod.MetricParams, d_pos: float,
               d_neg: float, margin: float, lam: float) -> float:
    """Contrastive loss plus the metric weight-constraint penalty."""
    return contrastive_loss(d_pos, d_neg, margin) + metric_mod.regularizer(metric_params, lam)


def usable_anchor_indices(dataset: Dataset) -> np.ndarray:
    """Indices of samples whose identity has at least one opposite-view sample."""
    usable = []
    for view, opposite in ((1, 2), (2, 1)):
        ids_opp = set(dataset.identities[dataset.views == opposite].tolist())
        for i in np.nonzero(dataset.views == view)[0]:
            if int(dataset.identities[i]) in ids_opp:
                usable.append(int(i))
    if not usable:
        raise ConfigError("dataset has no anchor with an opposite-view positive")
    return np.array(sorted(usable), dtype=np.int64)


def _select_pair(state: TrainState, batch: MiniBatch, mode: str,
                 rng: np.random.Generator) -> tuple[int, int]:
    """Apply the mining mode; returns (positive index, negative index)."""
    if mode == "moderate_plus_hard_negative":
        result = mine(state.embedder_params, state.metric_params, batch)
        return result.moderate_positive_index, result.hardest_negative_index
    if mode == "hard_negative_only":
        anchor_emb, _ = embedder_mod.forward(state.embedder_params, batch.anchor.features)
        neg_embs = np.stack([embedder_mod.forward(state.embedder_params, n.features)[0]
                             for n in batch.negatives])
        d_neg = metric_mod.distances_to(state.metric_params, anchor_emb, neg_embs)
        return int(rng.integers(batch.k)), mine_hardest_negative(d_neg)
    # no mining: uniformly random positive and negative
    return int(rng.integers(batch.k)), int(rng.integers(batch.k))


def _batch_loss_and_grads(state: TrainState, batch: MiniBatch, pos_i: int,
                          neg_i: int, margin: float, lam: float):
    """Loss and exact gradients for one (anchor, positive, negative) triple."""
    emb = state.embedder_params
    met = state.metric_params
    anchor_emb, anchor_tape = embedder_mod.forward(emb, batch.anchor.features)
    pos_emb, pos_tape = embedder_mod.forward(emb, batch.positives[pos_i].features)
    neg_emb, neg_tape = embedder_mod.forward(emb, batch.negatives[neg_i].features)

    d_pos = metric_mod.distance(met, anchor_emb, pos_emb)
    d_neg = metric_mod.distance(met, anchor_emb, neg_emb)
    loss = total_loss(met, d_pos, d_neg, margin, lam)

    grad_w = metric_mod.regularizer_grad(met, lam)
    grad_anchor = np.zeros(emb.config.output_dim)
    grad_flat = np.zeros(emb.layout.size)

    # positive-pair term; zero subgradient when the pair has collapsed
    if d_pos >= metric_mod.ZERO_DISTANCE_EPS:
        gw, gx1, gx2 = metric_mod.distance_grads(met, anchor_emb, pos_emb)
        grad_w += gw
        grad_anchor += gx1
        g, _ = embedder_mod.backward(emb, pos_tape, gx2)
        grad_flat += g
    # hinge term contributes only while active
    if margin - d_neg > 0 and d_neg >= metric_mod.ZERO_DISTANCE_EPS:
        gw, gx1, gx2 = metric_mod.distance_grads(met, anchor_emb, neg_emb)
        grad_w -= gw
        grad_anchor -= gx1
        g, _ = embedder_mod.backward(emb, neg_tape, -gx2)
        grad_flat += g
    g, _ = embedder_mod.backward(emb, anchor_tape, grad_anchor)
    grad_flat += g
    return loss, grad_flat, grad_w


def train_step(state: TrainState, dataset: Dataset, config: TrainConfig,
               rng: np.random.Generator,
               usable: np.ndarray | None = None) -> float:
    """One online-mined SGD step; returns the batch loss before the update."""
    if usable is None:
        usable = usable_anchor_indices(dataset)
    anchor = dataset[int(usable[rng.integers(len(usable))])]
    batch = build_minibatch(dataset, anchor, config.k, rng)
    if config.augment_magnitude > 0:
        mag = config.augment_magnitude
        batch = MiniBatch(augment(batch.anchor, mag, rng),
                          [augment(p, mag, rng) for p in batch.positives],
                          [augment(n, mag, rng) for n in batch.negatives],
                          config.k)
    pos_i, neg_i = _select_pair(state, batch, config.mining_mode, rng)
    loss, grad_flat, grad_w = _batch_loss_and_grads(
        state, batch, pos_i, neg_i, config.margin, config.lam)

    state.embedder_params.flat -= config.learning_rate * grad_flat
    state.metric_params.w -= config.learning_rate * grad_w
    state.step += 1
    _check_finite(state)
    return loss


# beyond this magnitude the next W W^T would overflow float64; treat as diverged
_PARAM_MAGNITUDE_CAP = 1e150


def _check_finite(state: TrainState) -> None:
    for arr in (state.embedder_params.flat, state.metric_params.w):
        if not np.all(np.isfinite(arr)) or np.max(np.abs(arr)) > _PARAM_MAGNITUDE_CAP:
            raise DivergenceError(state.step)


def evaluate_loss(state: TrainState, dataset: Dataset, config: TrainConfig,
                  seed: int = EVAL_SEED) -> float:
    """Mean mined loss over a fixed, seeded set of anchors (no augmentation)."""
    rng = np.random.default_rng(seed)
    usable = usable_anchor_indices(dataset)
    losses = []
    for _ in range(config.val_anchors):
        anchor = dataset[int(usable[rng.integers(len(usable))])]
        batch = build_minibatch(dataset, anchor, config.k, rng)
        pos_i, neg_i = _select_pair(state, batch, config.mining_mode, rng)
        anchor_emb, _ = embedder_mod.forward(state.embedder_params, batch.anchor.features)
        pos_emb, _ = embedder_mod.forward(state.embedder_params, batch.positives[pos_i].features)
        neg_emb, _ = embedder_mod.forward(state.embedder_params, batch.negatives[neg_i].features)
        d_pos = metric_mod.distance(state.metric_params, anchor_emb, pos_emb)
        d_neg = metric_mod.distance(state.metric_params, anchor_emb, neg_emb)
        losses.append(total_loss(state.metric_params, d_pos, d_neg,
                                 config.margin, config.lam))
    return float(np.mean(losses))


def train(config: TrainConfig, split: ProtocolSplit,
          embedder_config: embedder_mod.EmbedderConfig,
          metric_config: metric_mod.MetricConfig) -> TrainState:
    """Run the full training loop; deterministic for a fixed config.

    Records (step, mean train loss over the window, validation loss) every
    `record_every` steps and at the final step. The embedder is seeded by its
    own config; the metric init noise draws from the training seed.
    """
    config.validate()
    metric_config.validate()
    rng = np.random.default_rng(config.seed)
    emb_params = embedder_mod.init(embedder_config)
    met_params = metric_mod.init(embedder_config.output_dim,
                                 metric_config.metric_dim, rng)
    state = TrainState(emb_params, met_params)

    usable = usable_anchor_indices(split.train)
    window: list[float] = []
    for step in range(1, config.steps + 1):
        window.append(train_step(state, split.train, config, rng, usable))
        if step % config.record_every == 0 or step == config.steps:
            val = evaluate_loss(state, split.validation, config)
            state.loss_history.append((step, float(np.mean(window)), val))
            window = []
    return state
