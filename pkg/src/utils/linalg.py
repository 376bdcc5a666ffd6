# src/utils/linalg.py
"""Small dense-matrix helpers shared across modules."""
from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from src.utils.errors import NotSymmetricError, ShapeError


def dagger(M: NDArray) -> NDArray:
    return np.conj(M).T


def commutator(A: NDArray, B: NDArray) -> NDArray:
    return A @ B - B @ A


def symmetrize(M: NDArray) -> NDArray:
    return 0.5 * (M + M.T)


def antisymmetrize(M: NDArray) -> NDArray:
    return 0.5 * (M - M.T)


def hermitize(M: NDArray) -> NDArray:
    return 0.5 * (M + dagger(M))


def max_abs(M) -> float:
    M = np.asarray(M)
    return float(np.max(np.abs(M))) if M.size else 0.0


def as_square(M, what: str, dim: int | None = None) -> NDArray[np.float64]:
    """Coerce ``M`` to a real square float array, optionally of side ``dim``."""
    arr = np.asarray(M, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{what} must be a square matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ShapeError(f"{what} must be {dim}x{dim}, got {arr.shape[0]}x{arr.shape[1]}")
    if arr.shape[0] % 2:
        raise ShapeError(f"{what} must have even dimension 2n, got {arr.shape[0]}")
    return arr


def checked_symmetric(M, what: str, tol: float = 1e-12, dim: int | None = None) -> NDArray[np.float64]:
    """Return the symmetrized matrix, rejecting inputs whose asymmetry exceeds ``tol`` relative to ``|M|``."""
    arr = as_square(M, what, dim)
    defect = max_abs(arr - arr.T)
    if defect > tol * max(1.0, max_abs(arr)):
        raise NotSymmetricError(what, defect)
    return symmetrize(arr)


def mode_count(M: NDArray) -> int:
    return M.shape[0] // 2
