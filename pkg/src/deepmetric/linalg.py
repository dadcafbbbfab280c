"""Dense linear algebra and numerical verification utilities.

Matrices are 2-d float64 numpy arrays, vectors 1-d. Everything here is a pure
function of its inputs. The eigensolver is a cyclic Jacobi iteration (see
``_kernels.jacobi_sweeps``): every spectrum query in this package is on a
small symmetric PSD matrix, where Jacobi is simple and robustly accurate.
"""

from typing import Callable

import numpy as np

from . import _kernels
from .errors import ConvergenceError, ShapeError

DEFAULT_TOL = 1e-9
MAX_JACOBI_SWEEPS = 100


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-d float64 array, requiring finite entries."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_vector(a, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-d float64 array, requiring finite entries."""
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"{name} must be 1-dimensional, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}: "
            f"inner dimensions {a.shape[1]} and {b.shape[0]} differ"
        )
    return a @ b


def frobenius_sq_dist_to_identity(m) -> float:
    """Squared Frobenius distance from a square matrix to the identity."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {m.shape}")
    d = m - np.eye(m.shape[0])
    return float(np.sum(d * d))


def _check_symmetric(m: np.ndarray, tol: float) -> None:
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 0.0)
    if asym > tol * scale:
        raise ShapeError(
            f"matrix is asymmetric beyond tolerance: max |a - a^T| = {asym:.3e}"
        )


def jacobi_eigh(m, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues descending, eigenvectors as matching columns).
    Raises ConvergenceError if the off-diagonal norm has not dropped below
    tol * ||m||_F after MAX_JACOBI_SWEEPS sweeps.
    """
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {m.shape}")
    _check_symmetric(m, tol)
    a = 0.5 * (m + m.T)  # exact symmetrization before iterating
    v = np.eye(m.shape[0])
    off, _, converged = _kernels.jacobi_sweeps(a, v, tol, MAX_JACOBI_SWEEPS)
    if not converged:
        raise ConvergenceError(
            f"Jacobi eigensolver did not converge in {MAX_JACOBI_SWEEPS} sweeps: "
            f"off-diagonal residual {off:.3e}"
        )
    vals = np.diagonal(a).copy()
    order = np.argsort(-vals, kind="stable")
    return vals[order], v[:, order]


def symmetric_eigenvalues(m, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, in descending order."""
    vals, _ = jacobi_eigh(m, tol)
    return vals


def finite_difference_gradient(f: Callable[[np.ndarray], float], at,
                               step: float) -> np.ndarray:
    """Central-difference gradient of a scalar function of a matrix.

    Entry (i, j) is (f(at + step*E_ij) - f(at - step*E_ij)) / (2*step).
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    at = as_matrix(at, "evaluation point")
    grad = np.zeros_like(at)
    work = at.copy()
    for i in range(at.shape[0]):
        for j in range(at.shape[1]):
            orig = work[i, j]
            work[i, j] = orig + step
            fp = float(f(work))
            work[i, j] = orig - step
            fm = float(f(work))
            work[i, j] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise ValueError(
                    f"function value is non-finite when perturbing entry ({i}, {j})"
                )
            grad[i, j] = (fp - fm) / (2.0 * step)
    return grad
