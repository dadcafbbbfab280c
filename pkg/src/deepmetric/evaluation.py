"""One-shot gallery/probe evaluation and CMC curves.

The gallery holds exactly one view-2 sample per identity (seeded choice);
every view-1 sample is a probe. For each probe the gallery is ranked by
ascending learned distance, distance ties breaking by gallery index, and the
rate at rank r is the fraction of probes whose true-identity entry appears
within the top r.
"""

from dataclasses import dataclass

import numpy as np

from . import embedder as embedder_mod
from . import metric as metric_mod
from .data import Dataset, Sample

GALLERY_VIEW = 2
PROBE_VIEW = 1


@dataclass
class CmcCurve:
    """Identification rate per rank (1-indexed externally)."""
    rates: np.ndarray
    num_probes: int

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.rates)


def rank_k(curve: CmcCurve, k: int) -> float:
    """Identification rate at rank k (1-indexed)."""
    if not 1 <= k <= len(curve):
        raise ValueError(f"rank {k} out of range 1..{len(curve)}")
    return float(curve.rates[k - 1])


def build_one_shot(test: Dataset, rng: np.random.Generator
                   ) -> tuple[list[Sample], list[Sample]]:
    """One seeded gallery sample per identity (view 2); all view-1 probes."""
    gallery = []
    for identity in np.unique(test.identities):
        g_idx = test.indices_where(identity=int(identity), view=GALLERY_VIEW)
        p_idx = test.indices_where(identity=int(identity), view=PROBE_VIEW)
        if len(g_idx) == 0 or len(p_idx) == 0:
            missing = GALLERY_VIEW if len(g_idx) == 0 else PROBE_VIEW
            raise ValueError(f"identity {int(identity)} has no view-{missing} sample")
        gallery.append(test[int(g_idx[rng.integers(len(g_idx))])])
    probes = [test[int(i)] for i in test.indices_where(view=PROBE_VIEW)]
    return gallery, probes


def cmc(embedder_params: embedder_mod.EmbedderParams,
        metric_params: metric_mod.MetricParams,
        gallery: list[Sample], probes: list[Sample]) -> CmcCurve:
    """CMC over the learned distance; ties break by gallery index."""
    if not gallery or not probes:
        raise ValueError("gallery and probes must be nonempty")
    g_embs = np.stack([embedder_mod.forward(embedder_params, s.features)[0]
                       for s in gallery])
    g_ids = np.array([s.identity for s in gallery])

    n_ranks = len(gallery)
    hits = np.zeros(n_ranks)
    for probe in probes:
        p_emb, _ = embedder_mod.forward(embedder_params, probe.features)
        d = metric_mod.distances_to(metric_params, p_emb, g_embs)
        true_idx = np.nonzero(g_ids == probe.identity)[0]
        if len(true_idx) == 0:
            continue  # probe identity absent from gallery: never matched
        # position of entry j under (distance, gallery index) ordering
        positions = [int(np.sum(d < d[j]) + np.sum(d[:j] == d[j])) + 1
                     for j in true_idx]
        best = min(positions)
        hits[best - 1:] += 1.0
    return CmcCurve(hits / len(probes), len(probes))


def averaged_cmc(embedder_params: embedder_mod.EmbedderParams,
                 metric_params: metric_mod.MetricParams,
                 test: Dataset, draws: int, seed: int
                 ) -> tuple[CmcCurve, np.ndarray]:
    """Mean CMC over seeded gallery draws.

    Returns (mean curve, per-draw rate matrix of shape (draws, num_ranks)),
    the latter for rank-k mean/std reporting.
    """
    if draws < 1:
        raise ValueError(f"draws must be >= 1, got {draws}")
    rng = np.random.default_rng(seed)
    curves = []
    for _ in range(draws):
        gallery, probes = build_one_shot(test, rng)
        curves.append(cmc(embedder_params, metric_params, gallery, probes))
    rates = np.stack([c.rates for c in curves])
    return CmcCurve(rates.mean(axis=0), curves[0].num_probes), rates
