"""Deep metric learning engine.

Trains a branched embedding network and a weight-constrained Mahalanobis
metric layer with moderate positive mining, and evaluates with one-shot CMC
curves. See the README for the experiment-file grammar and CLI usage.
"""

__version__ = "0.1.0"

from ._kernels import NUMBA_ENABLED, engine_name
from .data import (Dataset, ProtocolSplit, Sample, SyntheticConfig, augment,
                   generate_synthetic, load_delimited, split_protocol,
                   write_delimited)
from .embedder import (EmbedderConfig, EmbedderParams, backward,
                       count_parameters, forward, init as init_embedder,
                       parameter_matched_tied_config, split_segments)
from .evaluation import CmcCurve, averaged_cmc, build_one_shot, cmc, rank_k
from .metric import (MetricConfig, MetricParams, distance, distance_grads,
                     init as init_metric, metric_matrix, regularizer,
                     regularizer_grad, spectrum)
from .mining import (MiniBatch, MiningResult, build_minibatch, mine,
                     mine_hardest_negative, mine_moderate_positive)
from .trainer import (MINING_MODES, TrainConfig, TrainState, contrastive_loss,
                      total_loss, train, train_step)

__all__ = [
    "NUMBA_ENABLED", "engine_name", "__version__",
    "Dataset", "ProtocolSplit", "Sample", "SyntheticConfig", "augment",
    "generate_synthetic", "load_delimited", "split_protocol", "write_delimited",
    "EmbedderConfig", "EmbedderParams", "backward", "count_parameters",
    "forward", "init_embedder", "parameter_matched_tied_config", "split_segments",
    "CmcCurve", "averaged_cmc", "build_one_shot", "cmc", "rank_k",
    "MetricConfig", "MetricParams", "distance", "distance_grads", "init_metric",
    "metric_matrix", "regularizer", "regularizer_grad", "spectrum",
    "MiniBatch", "MiningResult", "build_minibatch", "mine",
    "mine_hardest_negative", "mine_moderate_positive",
    "MINING_MODES", "TrainConfig", "TrainState", "contrastive_loss",
    "total_loss", "train", "train_step",
]
