"""Mini-batch construction and moderate positive mining.

A mini-batch is one anchor plus k positive and k negative candidates, all
drawn from the opposite camera view. Mining embeds every candidate with the
current network, then:

  1. the hardest negative is the candidate at minimum learned distance;
  2. positives no farther than the hardest negative are eligible;
  3. the moderate positive is the farthest eligible positive, falling back
     to the closest positive when none is eligible.

Ties break toward the lowest index so results are deterministic.
"""

from dataclasses import dataclass

import numpy as np

from . import embedder as embedder_mod
from . import metric as metric_mod
from .data import Dataset, Sample
from .errors import UnusableAnchorError


@dataclass
class MiniBatch:
    anchor: Sample
    positives: list[Sample]
    negatives: list[Sample]
    k: int

    def __post_init__(self):
        if self.k < 1 or len(self.positives) != self.k or len(self.negatives) != self.k:
            raise ValueError(
                f"need k={self.k} positives and negatives, got "
                f"{len(self.positives)} and {len(self.negatives)}")
        for p in self.positives:
            if p.identity != self.anchor.identity:
                raise ValueError("positive sample identity differs from anchor")
        for n in self.negatives:
            if n.identity == self.anchor.identity:
                raise ValueError("negative sample shares the anchor's identity")


@dataclass
class MiningResult:
    moderate_positive_index: int
    hardest_negative_index: int
    positive_distance: float
    negative_distance: float
    fallback_used: bool


def build_minibatch(dataset: Dataset, anchor: Sample, k: int,
                    rng: np.random.Generator) -> MiniBatch:
    """Draw k positives and k negatives from the view opposite the anchor.

    Positives share the anchor's identity, negatives are sampled uniformly
    from all other identities' opposite-view samples. Pools smaller than k
    are sampled with replacement.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    opposite = 2 if anchor.view == 1 else 1
    pos_pool = dataset.indices_where(identity=anchor.identity, view=opposite)
    if len(pos_pool) == 0:
        raise UnusableAnchorError(
            f"identity {anchor.identity} has no sample in view {opposite}")
    neg_pool = dataset.indices_where(exclude_identity=anchor.identity, view=opposite)
    if len(neg_pool) == 0:
        raise UnusableAnchorError(
            f"no view-{opposite} samples outside identity {anchor.identity}")

    pos_idx = rng.choice(pos_pool, size=k, replace=len(pos_pool) < k)
    neg_idx = rng.choice(neg_pool, size=k, replace=len(neg_pool) < k)
    return MiniBatch(anchor,
                     [dataset[int(i)] for i in pos_idx],
                     [dataset[int(i)] for i in neg_idx], k)


def _check_distances(distances) -> np.ndarray:
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 1 or d.size == 0:
        raise ValueError("expected a nonempty 1-d list of distances")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ValueError("distances must be finite and nonnegative")
    return d


def mine_hardest_negative(distances_to_negatives) -> int:
    """Index of the minimum distance; ties break to the lowest index."""
    d = _check_distances(distances_to_negatives)
    return int(np.argmin(d))


def mine_moderate_positive(distances_to_positives,
                           hardest_negative_distance: float) -> tuple[int, bool]:
    """Farthest positive within the hardest-negative radius.

    Returns (index, fallback_used). When no positive lies within the radius,
    the closest positive is returned with fallback_used = True.
    """
    d = _check_distances(distances_to_positives)
    eligible = d <= hardest_negative_distance
    if np.any(eligible):
        masked = np.where(eligible, d, -np.inf)
        return int(np.argmax(masked)), False
    return int(np.argmin(d)), True


def mine(embedder_params: embedder_mod.EmbedderParams,
         metric_params: metric_mod.MetricParams,
         batch: MiniBatch) -> MiningResult:
    """Embed the batch with the current network state and run the miner."""
    anchor_emb, _ = embedder_mod.forward(embedder_params, batch.anchor.features)
    pos_embs = np.stack([embedder_mod.forward(embedder_params, p.features)[0]
                         for p in batch.positives])
    neg_embs = np.stack([embedder_mod.forward(embedder_params, n.features)[0]
                         for n in batch.negatives])
    d_pos = metric_mod.distances_to(metric_params, anchor_emb, pos_embs)
    d_neg = metric_mod.distances_to(metric_params, anchor_emb, neg_embs)

    hardest = mine_hardest_negative(d_neg)
    moderate, fallback = mine_moderate_positive(d_pos, float(d_neg[hardest]))
    return MiningResult(moderate, hardest,
                        float(d_pos[moderate]), float(d_neg[hardest]), fallback)
