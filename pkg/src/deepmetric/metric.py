"""The learned Mahalanobis metric layer.

Distance between embeddings x1, x2 is ||W^T (x1 - x2)||_2, the factorized
form of sqrt((x1 - x2)^T M (x1 - x2)) with M = W W^T, which is symmetric PSD
by construction. The layer is a zero-bias linear map: the bias is fixed at
zero (and never stored) so the distance stays symmetric. Training pulls M
toward the identity through the penalty (lambda/2) * ||W W^T - I||_F^2; its
gradient w.r.t. W is lambda * (W W^T - I) W.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import ShapeError, ZeroDistanceError

ZERO_DISTANCE_EPS = 1e-12


@dataclass
class MetricConfig:
    metric_dim: int
    lam: float = 1e-2
    margin: float = 2.0

    def validate(self) -> None:
        if self.metric_dim < 1:
            raise ValueError(f"metric_dim must be >= 1, got {self.metric_dim}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.margin <= 0:
            raise ValueError(f"margin must be > 0, got {self.margin}")


@dataclass
class MetricParams:
    """The weight matrix W, shaped (embedding_dim, metric_dim)."""
    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 2 or not np.all(np.isfinite(self.w)):
            raise ValueError("w must be a finite 2-d matrix")

    @property
    def embedding_dim(self) -> int:
        return self.w.shape[0]

    def copy(self) -> "MetricParams":
        return MetricParams(self.w.copy())


def init(embedding_dim: int, metric_dim: int,
         rng: np.random.Generator) -> MetricParams:
    """Identity (rectangular if needed) plus small zero-mean noise.

    Training therefore starts near the Euclidean metric, consistent with the
    constraint's pull toward the identity.
    """
    w = np.eye(embedding_dim, metric_dim)
    w += rng.normal(0.0, 1e-2, size=w.shape)
    return MetricParams(w)


def _check_dims(params: MetricParams, x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.embedding_dim,):
        raise ShapeError(
            f"{name} has shape {x.shape}, expected ({params.embedding_dim},)")
    return x


def distance(params: MetricParams, x1, x2) -> float:
    """||W^T (x1 - x2)||_2, nonnegative and symmetric in its arguments."""
    x1 = _check_dims(params, x1, "x1")
    x2 = _check_dims(params, x2, "x2")
    u = (x1 - x2) @ params.w
    return float(np.sqrt(u @ u))


def distances_to(params: MetricParams, anchor, candidates) -> np.ndarray:
    """Distances from one embedding to each row of `candidates`."""
    anchor = _check_dims(params, anchor, "anchor")
    candidates = np.asarray(candidates, dtype=np.float64)
    if candidates.ndim != 2 or candidates.shape[1] != params.embedding_dim:
        raise ShapeError(
            f"candidates have shape {candidates.shape}, expected (n, {params.embedding_dim})")
    u = (candidates - anchor) @ params.w
    return np.sqrt(np.sum(u * u, axis=1))


def metric_matrix(params: MetricParams) -> np.ndarray:
    """M = W W^T."""
    return params.w @ params.w.T


def regularizer(params: MetricParams, lam: float) -> float:
    """(lambda / 2) * ||W W^T - I||_F^2.

    Computed directly (not through the validating core op) so a diverging W
    yields an infinite penalty for the trainer to detect, not an exception.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    d = metric_matrix(params) - np.eye(params.embedding_dim)
    return 0.5 * lam * float(np.sum(d * d))


def regularizer_grad(params: MetricParams, lam: float) -> np.ndarray:
    """Exact gradient of `regularizer`: 2 * lambda * (W W^T - I) W.

    The factor 2 comes from W appearing on both sides of W W^T; central
    finite differences of the penalty confirm it.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    m = metric_matrix(params)
    return 2.0 * lam * (m - np.eye(params.embedding_dim)) @ params.w


def distance_grads(params: MetricParams, x1, x2):
    """Gradients of the distance w.r.t. W, x1, and x2.

    With u = W^T (x1 - x2) and d = ||u||:
      grad_x1 = W u / d, grad_x2 = -grad_x1, grad_w = (x1 - x2) u^T / d.
    Undefined at d = 0; callers treat that as a zero subgradient and skip.
    """
    x1 = _check_dims(params, x1, "x1")
    x2 = _check_dims(params, x2, "x2")
    diff = x1 - x2
    u = diff @ params.w
    d = float(np.sqrt(u @ u))
    if d < ZERO_DISTANCE_EPS:
        raise ZeroDistanceError(
            f"distance {d!r} is below {ZERO_DISTANCE_EPS}; gradient undefined")
    grad_x1 = params.w @ (u / d)
    grad_w = np.outer(diff, u / d)
    return grad_w, grad_x1, -grad_x1


def spectrum(params: MetricParams, tol: float = 1e-10) -> np.ndarray:
    """Eigenvalues of M = W W^T, descending, clamped at zero.

    Values below -tol indicate an eigensolver failure and are rejected.
    """
    vals = linalg.symmetric_eigenvalues(metric_matrix(params))
    if vals.size and vals[-1] < -tol:
        raise ArithmeticError(
            f"spectrum of W W^T has eigenvalue {vals[-1]!r} below -{tol}")
    return np.maximum(vals, 0.0)
