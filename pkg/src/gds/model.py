# src/gds/model.py
"""Gaussian dynamical semigroup: effective Hamiltonian, Lindblad vectors and the
matrices derived from them.

Conventions: covariances are dimensionless, V = (1/2hbar)<{dx, dx^T}>, so the
vacuum has V = I/2 and physical second moments are hbar*V.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import cho_factor, cho_solve, eigvalsh, svdvals

from src.symplectic.core import g_function, sympmat, williamson
from src.utils.errors import NotBonaFideError, NotPositiveDefiniteError, ShapeError
from src.utils.linalg import antisymmetrize, checked_symmetric, hermitize, mode_count, symmetrize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GdsSpec:
    """H_eff = 1/2 x^T B' x + x^T J xi', Lindblad operators L_k = l_k^T J x."""

    B_prime: NDArray[np.float64]
    xi_prime: NDArray[np.float64]
    lindblad_vectors: NDArray[np.complex128]
    hbar: float = 1.0

    def __post_init__(self):
        B = checked_symmetric(self.B_prime, "B'")
        dim = B.shape[0]
        xi = np.asarray(self.xi_prime, dtype=float).reshape(-1)
        if xi.size != dim:
            raise ShapeError(f"xi' must have length {dim}, got {xi.size}")
        vecs = np.asarray(self.lindblad_vectors, dtype=complex)
        if vecs.size == 0:  # 无耗散：空的 (0, 2n) 数组
            vecs = np.zeros((0, dim), dtype=complex)
        vecs = np.atleast_2d(vecs)
        if vecs.shape[1] != dim:
            raise ShapeError(f"Lindblad vectors must have length {dim}, got {vecs.shape[1]}")
        if not self.hbar > 0:
            raise ShapeError(f"hbar must be positive, got {self.hbar}")
        object.__setattr__(self, "B_prime", B)
        object.__setattr__(self, "xi_prime", xi)
        object.__setattr__(self, "lindblad_vectors", vecs)

    @property
    def n(self) -> int:
        return mode_count(self.B_prime)

    @classmethod
    def unitary(cls, B_prime, xi_prime=None, hbar: float = 1.0) -> "GdsSpec":
        B_prime = np.asarray(B_prime, dtype=float)
        xi = np.zeros(B_prime.shape[0]) if xi_prime is None else xi_prime
        return cls(B_prime=B_prime, xi_prime=xi, lindblad_vectors=np.zeros((0, B_prime.shape[0])), hbar=hbar)


@dataclass(frozen=True)
class NoiseMatrices:
    """Gamma = sum_k l_k l_k^dagger, D = hbar Re Gamma, C = Im Gamma."""

    Gamma: NDArray[np.complex128]
    D: NDArray[np.float64]
    C: NDArray[np.float64]
    hbar: float = 1.0

    @property
    def n(self) -> int:
        return mode_count(self.D)


@dataclass(frozen=True)
class GaussianState:
    mean: NDArray[np.float64]
    V: NDArray[np.float64]
    hbar: float = 1.0

    def __post_init__(self):
        V = checked_symmetric(self.V, "covariance matrix")
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        if mean.size != V.shape[0]:
            raise ShapeError(f"mean must have length {V.shape[0]}, got {mean.size}")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "mean", mean)

    @property
    def n(self) -> int:
        return mode_count(self.V)

    def is_bona_fide(self, tol: float = 1e-10) -> bool:
        return bona_fide_margin(self.V) >= -tol

    @classmethod
    def vacuum(cls, n: int, hbar: float = 1.0) -> "GaussianState":
        return cls(mean=np.zeros(2 * n), V=0.5 * np.eye(2 * n), hbar=hbar)


@dataclass(frozen=True)
class DriftMatrix:
    """A = J B' - C J, kept together with its two constituents."""

    hamiltonian_part: NDArray[np.float64]
    dissipative_part: NDArray[np.float64]
    A: NDArray[np.float64] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "A", self.hamiltonian_part - self.dissipative_part)


@dataclass(frozen=True)
class FluctuationDissipationReport:
    passed: bool
    min_eigenvalue: float
    tol: float


@dataclass(frozen=True)
class Lemma1Report:
    det_C: float
    min_singular_C: float
    min_eig_D: float
    min_eig_Gamma: float
    C_invertible: bool
    consistent: bool
    notes: tuple = ()


def bona_fide_margin(V) -> float:
    """Smallest eigenvalue of V + (i/2)J; nonnegative for physical states."""
    V = checked_symmetric(V, "covariance matrix")
    # 厄米矩阵，eigvalsh 升序
    return float(eigvalsh(V + 0.5j * sympmat(mode_count(V)))[0])


def require_bona_fide(V, what: str = "covariance matrix", tol: float = 1e-10) -> NDArray[np.float64]:
    """Return V as a symmetric array, or raise NotBonaFideError.

    The tolerance is relative to max(1, max |V_ij|).
    """
    V = checked_symmetric(V, what)
    margin = bona_fide_margin(V)
    if margin < -tol * max(1.0, float(np.abs(V).max(initial=0.0))):
        raise NotBonaFideError(what, margin)
    return V


def decoherence_matrix(lindblad_vectors: Sequence, n: Optional[int] = None, hbar: float = 1.0) -> NoiseMatrices:
    vecs = [np.asarray(v, dtype=complex).reshape(-1) for v in lindblad_vectors]
    if not vecs and n is None:
        raise ShapeError("mode count is required for an empty Lindblad list")
    dim = 2 * n if n is not None else vecs[0].size
    if dim % 2:
        raise ShapeError(f"Lindblad vectors must have even length, got {dim}")
    for k, v in enumerate(vecs):
        if v.size != dim:
            raise ShapeError(f"Lindblad vector {k} has length {v.size}, expected {dim}")
    Gamma = np.zeros((dim, dim), dtype=complex)
    for v in vecs:
        Gamma += np.outer(v, v.conj())
    Gamma = hermitize(Gamma)
    # Gamma 厄米：实部对称，虚部反对称
    D = symmetrize(hbar * Gamma.real)
    C = antisymmetrize(Gamma.imag)
    return NoiseMatrices(Gamma=Gamma, D=D, C=C, hbar=hbar)


def noise_from_matrices(D, C, hbar: float = 1.0) -> NoiseMatrices:
    """Wrap explicit (D, C); Gamma = D/hbar + iC."""
    D = checked_symmetric(D, "D")
    C = np.asarray(C, dtype=float)
    if C.shape != D.shape:
        raise ShapeError(f"C must have shape {D.shape}, got {C.shape}")
    C = antisymmetrize(C)
    return NoiseMatrices(Gamma=D / hbar + 1j * C, D=D, C=C, hbar=hbar)


def fluctuation_dissipation_check(noise: NoiseMatrices, tol: Optional[float] = None) -> FluctuationDissipationReport:
    """D + i hbar C >= 0."""
    H = hermitize(noise.D + 1j * noise.hbar * noise.C)
    min_eig = float(eigvalsh(H)[0])
    if tol is None:
        tol = 1e-12 * max(1.0, float(np.linalg.norm(H, 2)))
    return FluctuationDissipationReport(passed=min_eig >= -tol, min_eigenvalue=min_eig, tol=tol)


def lemma1_check(noise: NoiseMatrices, tol: float = 1e-12) -> Lemma1Report:
    """If C is invertible then D > 0 and Gamma > 0.

    Invertibility is judged on the singular values of C relative to its norm,
    so the verdict does not depend on the overall coupling scale.
    """
    det_C = float(np.linalg.det(noise.C))
    min_D = float(eigvalsh(noise.D)[0])
    min_G = float(eigvalsh(hermitize(noise.Gamma))[0])
    sv = svdvals(noise.C)
    # 奇异值降序排列，sv[0] 即谱范数
    min_sv = float(sv[-1])
    c_inv = bool(sv[0] > 0.0 and min_sv > tol * sv[0])
    notes = []
    if not c_inv:
        notes.append("C singular")
    if np.allclose(noise.Gamma, 0.0, atol=tol):
        notes.append("Gamma = 0")
    scale = max(float(np.abs(noise.D).max(initial=0.0)), float(np.abs(noise.Gamma).max(initial=0.0)))
    consistent = (not c_inv) or (min_D > tol * scale and min_G > tol * scale)
    if not consistent:
        logger.warning(f"C invertible but D or Gamma not positive definite (min eig D {min_D:.3e}, Gamma {min_G:.3e})")
    return Lemma1Report(
        det_C=det_C,
        min_singular_C=min_sv,
        min_eig_D=min_D,
        min_eig_Gamma=min_G,
        C_invertible=c_inv,
        consistent=consistent,
        notes=tuple(notes),
    )


def drift_matrix(spec: GdsSpec, noise: NoiseMatrices) -> DriftMatrix:
    if noise.D.shape != spec.B_prime.shape:
        raise ShapeError(f"noise matrices are {noise.D.shape}, B' is {spec.B_prime.shape}")
    J = sympmat(spec.n)
    return DriftMatrix(hamiltonian_part=J @ spec.B_prime, dissipative_part=noise.C @ J)


def u_matrix(V, margin: float = 1e-9) -> NDArray[np.float64]:
    """U = 2iJ arcoth(2iVJ) via Williamson: S^T (g(k) (+) g(k)) S with S V S^T = k (+) k."""
    dec = williamson(V)
    g = g_function(dec.spectrum, margin=margin)
    g = np.atleast_1d(g)  # 单模时 g_function 返回标量
    return symmetrize(dec.S.T @ np.diag(np.concatenate([g, g])) @ dec.S)


def _cov_factor(state: GaussianState):
    try:
        return cho_factor(state.hbar * state.V, lower=True)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("covariance matrix", float(eigvalsh(state.V)[0])) from None


def wigner_eval(state: GaussianState, x) -> NDArray[np.float64] | float:
    """Gaussian Wigner function with covariance hbar*V; ``x`` may carry leading batch axes."""
    x = np.asarray(x, dtype=float)
    dim = state.V.shape[0]
    if x.shape[-1] != dim:
        raise ShapeError(f"phase-space point must have length {dim}, got {x.shape[-1]}")
    factor = _cov_factor(state)
    d = (x - state.mean).reshape(-1, dim)
    # 逐点二次型 d^T (hbar V)^{-1} d
    quad = np.einsum("ij,ji->i", d, cho_solve(factor, d.T))
    log_det = 2.0 * np.sum(np.log(np.diag(factor[0])))
    log_norm = -0.5 * dim * np.log(2.0 * np.pi) - 0.5 * log_det
    out = np.exp(log_norm - 0.5 * quad).reshape(x.shape[:-1])
    return float(out) if out.ndim == 0 else out


def nu_current(state: GaussianState, noise: NoiseMatrices, x) -> NDArray[np.float64]:
    """Non-unitary probability current [(1/2hbar) D V^{-1}(x - m) - C J x] W(x)."""
    x = np.asarray(x, dtype=float)
    J = sympmat(state.n)
    # (hbar V)^{-1} is factored, hence 1/2 instead of 1/2hbar
    drift = 0.5 * noise.D @ cho_solve(_cov_factor(state), x - state.mean) - noise.C @ J @ x
    return drift * wigner_eval(state, x)


def u_current(state: GaussianState, spec: GdsSpec, x) -> NDArray[np.float64]:
    """Unitary probability current (J B' x - xi') W(x)."""
    x = np.asarray(x, dtype=float)
    J = sympmat(state.n)
    return (J @ spec.B_prime @ x - spec.xi_prime) * wigner_eval(state, x)
