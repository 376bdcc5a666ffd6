# src/symplectic/core.py
"""Symplectic linear algebra in block order x = (q_1..q_n, p_1..p_n).

Every matrix in the package uses this ordering; J = [[0, I], [-I, 0]].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import eigh, expm, qr

from src.utils.errors import NotPositiveDefiniteError, PureStateBoundaryError, ShapeError
from src.utils.linalg import as_square, checked_symmetric, max_abs, mode_count

logger = logging.getLogger(__name__)

PD_RELATIVE_TOL = 1e-12
DEGENERATE_REL_TOL = 1e-10


@dataclass(frozen=True)
class SymplecticForm:
    n: int
    J: NDArray[np.float64]


@dataclass(frozen=True)
class WilliamsonDecomposition:
    """S V S^T = diag(spectrum) (+) diag(spectrum), spectrum ascending."""

    S: NDArray[np.float64]
    spectrum: NDArray[np.float64]

    @property
    def n(self) -> int:
        return self.spectrum.size

    @property
    def S_inv(self) -> NDArray[np.float64]:
        return symplectic_inverse(self.S)

    @property
    def normal_form(self) -> NDArray[np.float64]:
        return np.diag(np.concatenate([self.spectrum, self.spectrum]))


@dataclass(frozen=True)
class CanonicalDiagonal:
    """Block diagonal (i*values) (+) (-i*values) of a diagonalized Hamiltonian-type matrix."""

    values: NDArray[np.float64]

    def as_matrix(self) -> NDArray[np.complex128]:
        return np.diag(np.concatenate([1j * self.values, -1j * self.values]))


def standard_form(n: int) -> SymplecticForm:
    if int(n) != n or n < 1:
        raise ShapeError(f"mode count must be a positive integer, got {n!r}")
    n = int(n)
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return SymplecticForm(n=n, J=np.block([[zero, eye], [-eye, zero]]))


def sympmat(n: int) -> NDArray[np.float64]:
    return standard_form(n).J


def symplectic_defect(S) -> float:
    S = as_square(S, "S")
    J = sympmat(mode_count(S))
    return max_abs(S @ J @ S.T - J)


def is_symplectic(S, tol: float = 1e-10) -> bool:
    return symplectic_defect(S) <= tol


def symplectic_inverse(S: NDArray) -> NDArray:
    """S^{-1} = J^T S^T J, exact for symplectic S."""
    J = sympmat(mode_count(S))
    return J.T @ S.T @ J


def check_positive_definite(M, what: str, rel_tol: float = PD_RELATIVE_TOL, dim: Optional[int] = None):
    """Symmetrize M and return (M, eigenvalues, eigenvectors); reject if not positive definite."""
    M = checked_symmetric(M, what, dim=dim)
    vals, vecs = eigh(M)
    scale = max(1.0, float(np.linalg.norm(M, 2)))
    if vals[0] <= rel_tol * scale:
        raise NotPositiveDefiniteError(what, vals[0])
    return M, vals, vecs


def _degenerate_clusters(values: NDArray[np.float64], rel_tol: float) -> List[NDArray[np.int64]]:
    """Group indices of an ascending array whose neighbours differ by at most rel_tol * max(1, max value)."""
    gap = rel_tol * max(1.0, float(values[-1]))
    clusters, start = [], 0
    for i in range(1, values.size + 1):
        if i == values.size or values[i] - values[i - 1] > gap:
            clusters.append(np.arange(start, i))
            start = i
    return clusters


def _fix_phases(cols: NDArray[np.complex128]) -> NDArray[np.complex128]:
    """Rotate each column so its first entry of (near) maximal modulus is real positive."""
    out = cols.copy()
    for j in range(out.shape[1]):
        mag = np.abs(out[:, j])
        k = int(np.argmax(mag >= (1.0 - 1e-8) * mag.max()))
        out[:, j] *= np.conj(out[k, j]) / mag[k]
    return out


def williamson(V, tol: float = PD_RELATIVE_TOL) -> WilliamsonDecomposition:
    """Williamson normal form of a real symmetric positive-definite matrix.

    VJ is similar to V^{1/2} J V^{1/2}, so its eigenvectors with eigenvalue +ik
    are y = V^{1/2} x where x runs over the eigenvectors of the Hermitian matrix
    i V^{1/2} J V^{1/2} with eigenvalue -k; the conjugates carry -ik. Scaling
    each y to y^dag V^{-1} y = 2/k makes P = [Re Y, Im Y] symplectic with
    V = P (k (+) k) P^T, hence S = P^{-1}.

    Degenerate k get a basis that does not depend on the eigensolver: the
    cluster projector is factored by a QR with column pivoting.

    Raises:
        NotSymmetricError, NotPositiveDefiniteError, ShapeError
    """
    V, vals, vecs = check_positive_definite(V, "covariance matrix", rel_tol=tol)
    n = mode_count(V)
    J = sympmat(n)

    root = vecs @ np.diag(np.sqrt(vals)) @ vecs.T
    H = 1j * (root @ J @ root)
    mu, X = eigh(0.5 * (H + H.conj().T))
    # 前 n 个特征值为 -k，翻转后 k 升序
    kappa = -mu[:n][::-1]
    X = X[:, :n][:, ::-1]

    Y = np.empty((2 * n, n), dtype=complex)
    for idx in _degenerate_clusters(kappa, DEGENERATE_REL_TOL):
        Xc = X[:, idx]
        Qc, _, _ = qr(Xc @ Xc.conj().T, pivoting=True)
        basis = _fix_phases(Qc[:, : idx.size])
        Y[:, idx] = (root @ basis) * np.sqrt(2.0 / kappa[idx])
        if idx.size > 1:
            logger.debug(f"degenerate symplectic eigenvalue {kappa[idx[0]]:.12g} (multiplicity {idx.size})")

    P = np.hstack([Y.real, Y.imag])
    S = symplectic_inverse(P)
    return WilliamsonDecomposition(S=S, spectrum=kappa)


def symplectic_eigenvalues(V) -> NDArray[np.float64]:
    """Symplectic spectrum only, from the eigenvalues of iJV (ascending)."""
    V = checked_symmetric(V, "covariance matrix")
    n = mode_count(V)
    ev = np.linalg.eigvals(1j * sympmat(n) @ V).real
    return np.sort(np.abs(ev))[::2]


def q_matrix(n: int) -> NDArray[np.complex128]:
    """Q = (1/sqrt 2)[[I, -iI], [-iI, I]]; unitary, symmetric, Q^T J Q = J."""
    eye = np.eye(n)
    return np.block([[eye, -1j * eye], [-1j * eye, eye]]) / np.sqrt(2.0)


def lemma2_diagonalize(O, right: bool = False, tol: float = PD_RELATIVE_TOL):
    """Diagonalize OJ (or JO with ``right=True``) for symmetric positive-definite O.

    Returns ``(M, diag)`` with M (OJ) M^{-1} = diag.as_matrix() = (i o) (+) (-i o),
    M = Q S where S is the Williamson matrix of O. For JO the transform is Q S^{-T}.
    """
    dec = williamson(O, tol=tol)
    Q = q_matrix(dec.n)
    # JO 与 OJ 互为转置共轭，右作用时换成 S^{-T}
    S = dec.S_inv.T if right else dec.S
    return Q @ S, CanonicalDiagonal(values=dec.spectrum)


def lemma2_inverse(M: NDArray[np.complex128]) -> NDArray[np.complex128]:
    """Inverse of M = Q S using Q^{-1} = Q^dagger and the symplectic inverse of S."""
    n = M.shape[0] // 2
    Q = q_matrix(n)
    S = (Q.conj().T @ M).real
    return symplectic_inverse(S) @ Q.conj().T


def hamiltonian_flow(B, t: float) -> NDArray[np.float64]:
    """exp(J B t).

    Positive-definite B goes through its symplectic diagonalization,
    exp(JBt) = (QS)^{-1} diag(e^{iwt}, e^{-iwt}) (QS) with S = S_B^{-T};
    anything else falls back to scipy's scaling-and-squaring expm.
    """
    B = checked_symmetric(B, "Hamiltonian matrix")
    n = mode_count(B)
    J = sympmat(n)
    if t == 0:
        return np.eye(2 * n)
    try:
        dec = williamson(B)
    except NotPositiveDefiniteError:
        logger.debug("hamiltonian_flow: B not positive definite, using expm")
        return expm(J @ B * t)
    S_th = dec.S_inv.T
    M = q_matrix(n) @ S_th
    phase = np.exp(1j * dec.spectrum * t)
    diag = np.concatenate([phase, phase.conj()])
    flow = lemma2_inverse(M) @ (diag[:, None] * M)
    return flow.real  # 虚部只剩舍入误差


def g_function(x, margin: float = 0.0):
    """g(x) = 2 arcoth(2x) for x > 1/2.

    Raises PureStateBoundaryError when x <= 1/2 + margin.
    """
    arr = np.asarray(x, dtype=float)
    bad = arr <= 0.5 + margin
    if np.any(bad):
        raise PureStateBoundaryError(float(np.min(arr)), margin)
    # 2 arcoth(2x) = log((2x + 1) / (2x - 1))
    out = np.log1p(2.0 / (2.0 * arr - 1.0))
    return float(out) if out.ndim == 0 else out


def random_symplectic(n: int, rng: np.random.Generator, scale: float = 0.5) -> NDArray[np.float64]:
    """Random symplectic matrix exp(J H) with H symmetric, entries ~ N(0, scale^2)."""
    H = rng.normal(scale=scale, size=(2 * n, 2 * n))
    H = 0.5 * (H + H.T)
    return expm(sympmat(n) @ H)  # JH 属于辛李代数
