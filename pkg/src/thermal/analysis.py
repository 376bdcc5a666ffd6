# src/thermal/analysis.py
"""Thermal states of positive-elliptic quadratic Hamiltonians and the
commutation test deciding whether a GDS relaxes to one.

For B > 0 with symplectic diagonalization B = S^T (w (+) w) S, the Gibbs
state exp(-beta H)/Z has covariance V = S^{-1}(k (+) k)S^{-T}, k = coth(hbar beta w / 2)/2.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import quad_vec
from scipy.linalg import LinAlgError, expm, solve

from src.gds.dynamics import spectral_abscissa
from src.gds.model import NoiseMatrices
from src.symplectic.core import (
    check_positive_definite,
    g_function,
    q_matrix,
    symplectic_inverse,
    sympmat,
    williamson,
)
from src.utils.errors import AuditFailedError, NotHurwitzError, ShapeError
from src.utils.linalg import checked_symmetric, commutator, max_abs, mode_count, symmetrize

logger = logging.getLogger(__name__)

AUDIT_TOL = 1e-9


@dataclass(frozen=True)
class ThermalSpec:
    B: NDArray[np.float64]
    beta: float
    hbar: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ShapeError(f"beta must be positive and finite, got {self.beta}")
        if not self.hbar > 0:
            raise ShapeError(f"hbar must be positive, got {self.hbar}")
        B, _, _ = check_positive_definite(self.B, "B")
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return mode_count(self.B)


@dataclass(frozen=True)
class ThermalProfile:
    """S_th symplectic with B = S_th^T (w (+) w) S_th; V_th = S_th^{-1} (k (+) k) S_th^{-T}."""

    S_th: NDArray[np.float64]
    w: NDArray[np.float64]
    k: NDArray[np.float64]
    V_th: NDArray[np.float64]

    @property
    def S_th_inv(self) -> NDArray[np.float64]:
        return symplectic_inverse(self.S_th)


@dataclass(frozen=True)
class ThermalAuditReport:
    comm_D_C: float
    comm_V_D: float
    comm_V_C: float
    lyapunov_residual: float
    closed_form_residual: Optional[float]
    tol: float
    verdict: bool = field(init=False)
    notes: tuple = ()

    def __post_init__(self):
        checks = [self.comm_D_C, self.comm_V_D, self.comm_V_C, self.lyapunov_residual]
        if self.closed_form_residual is not None:
            checks.append(self.closed_form_residual)
        object.__setattr__(self, "verdict", bool(max(checks) <= self.tol))

    @property
    def max_residual(self) -> float:
        vals = [self.comm_D_C, self.comm_V_D, self.comm_V_C, self.lyapunov_residual]
        if self.closed_form_residual is not None:
            vals.append(self.closed_form_residual)
        return float(max(vals))


@dataclass(frozen=True)
class SpectraRelation:
    d: NDArray[np.float64]
    jc: NDArray[np.float64]
    ratio: NDArray[np.float64]
    expected: NDArray[np.float64]

    @property
    def max_defect(self) -> float:
        return max_abs(self.ratio - self.expected)


def thermal_occupation_k(w, beta: float, hbar: float = 1.0) -> NDArray[np.float64]:
    """k = coth(hbar beta w / 2) / 2, computed as 1/2 + nbar."""
    x = hbar * beta * np.asarray(w, dtype=float)
    return 0.5 + 1.0 / np.expm1(x)  # k = 1/2 + nbar


def thermal_covariance(spec: ThermalSpec) -> ThermalProfile:
    dec = williamson(spec.B)
    S_th = dec.S_inv.T
    w = dec.spectrum
    k = thermal_occupation_k(w, spec.beta, spec.hbar)
    S_inv = dec.S.T
    V = symmetrize(S_inv @ np.diag(np.concatenate([k, k])) @ S_inv.T)
    if np.any(np.diff(w) < 1e-8 * w[-1]):
        logger.warning(f"degenerate eigenfrequencies {w}; S_th uses the pivoted-QR basis of each block")
    return ThermalProfile(S_th=S_th, w=w, k=k, V_th=V)


def hessian_scaled_from_cov(V_th, margin: float = 1e-9):
    """Recover (S_th, hbar*beta*B) from a thermal covariance.

    hbar beta B = S^T (g(k) (+) g(k)) S with S V S^T = k (+) k; only the product
    is identifiable. Raises PureStateBoundaryError for k <= 1/2 + margin.
    """
    dec = williamson(V_th)
    g = np.atleast_1d(g_function(dec.spectrum, margin=margin))
    scaled = symmetrize(dec.S.T @ np.diag(np.concatenate([g, g])) @ dec.S)
    return dec.S, scaled


def _operand_scale(*mats) -> float:
    return max(1.0, *(max_abs(M) for M in mats))


def theorem1_audit(
    noise: NoiseMatrices,
    thermal: Union[ThermalSpec, NDArray[np.float64]],
    tol: float = AUDIT_TOL,
) -> ThermalAuditReport:
    """Check that JV, JD and JC commute and that V solves C J V + V J C = D/hbar.

    ``thermal`` is either a ThermalSpec or an explicit covariance. The closed
    form JV = (1/2hbar) JD (JC)^{-1} is checked only when JC is invertible.
    """
    hbar = noise.hbar
    V = thermal_covariance(thermal).V_th if isinstance(thermal, ThermalSpec) else checked_symmetric(thermal, "V")
    if V.shape != noise.D.shape:
        raise ShapeError(f"covariance is {V.shape}, noise matrices are {noise.D.shape}")
    J = sympmat(mode_count(V))
    JV, JD, JC = J @ V, J @ noise.D, J @ noise.C
    scale = _operand_scale(JV, JD, JC)
    tol_abs = tol * scale

    comm_dc = max_abs(commutator(JD, JC))
    comm_vd = max_abs(commutator(JV, JD))
    comm_vc = max_abs(commutator(JV, JC))
    CJ = noise.C @ J
    # 对称 Lyapunov 形式，JC 奇异时也成立
    lyap = max_abs(CJ @ V + V @ J @ noise.C - noise.D / hbar)

    closed = None
    notes = []
    cond = np.linalg.cond(JC) if JC.size else np.inf
    if np.isfinite(cond) and cond < 1e12:
        # X = JD (JC)^{-1} solved as (JC)^T X^T = (JD)^T
        X = solve(JC.T, JD.T).T
        closed = max_abs(JV - X / (2.0 * hbar))
    else:
        notes.append("closed-form covariance inapplicable: JC is singular")

    report = ThermalAuditReport(
        comm_D_C=comm_dc,
        comm_V_D=comm_vd,
        comm_V_C=comm_vc,
        lyapunov_residual=lyap,
        closed_form_residual=closed,
        tol=tol_abs,
        notes=tuple(notes),
    )
    logger.debug(f"theorem1_audit: verdict {report.verdict}, max residual {report.max_residual:.3e}")
    return report


def closed_form_covariance(noise: NoiseMatrices) -> NDArray[np.float64]:
    """V = (1/2hbar) D (JC)^{-1}, via a linear solve."""
    J = sympmat(noise.n)
    JC = J @ noise.C
    try:
        X = solve(JC.T, noise.D.T).T
    except LinAlgError as exc:
        raise AuditFailedError(f"JC is singular: {exc}") from exc
    return symmetrize(X / (2.0 * noise.hbar))


def thermal_covariance_integral(noise: NoiseMatrices, horizon_factor: float = 60.0) -> NDArray[np.float64]:
    """int_0^T e^{-CJt} (D/hbar) e^{-JCt} dt with T = horizon_factor / |abscissa(-CJ)|."""
    J = sympmat(noise.n)
    A = -noise.C @ J
    abscissa = spectral_abscissa(A)
    if abscissa >= 0:
        raise NotHurwitzError(abscissa)
    T = horizon_factor / abs(abscissa)
    Q = noise.D / noise.hbar

    def integrand(t):
        E = expm(A * t)
        return E @ Q @ E.T

    V, err = quad_vec(integrand, 0.0, T, epsabs=1e-12, epsrel=1e-11, limit=2000)
    logger.debug(f"thermal_covariance_integral: T = {T:.3g}, error estimate {err:.3e}")
    return symmetrize(V)


def spectra_relation(noise: NoiseMatrices, spec: ThermalSpec, tol: float = AUDIT_TOL) -> SpectraRelation:
    """Per-mode d / jc from the (Q S_th^{-T}) similarity; equals coth(hbar beta w / 2).

    Raises AuditFailedError when the commutation audit does not pass.
    """
    report = theorem1_audit(noise, spec, tol=tol)
    if not report.verdict:
        raise AuditFailedError(f"thermal audit failed (max residual {report.max_residual:.3e})")
    profile = thermal_covariance(spec)
    n = spec.n
    J = sympmat(n)
    Q = q_matrix(n)
    M = Q @ profile.S_th_inv.T
    M_inv = profile.S_th.T @ Q.conj().T
    JD_d = M @ (J @ noise.D) @ M_inv
    JC_d = M @ (J @ noise.C) @ M_inv
    # 只取前 n 个对角元，后 n 个是其共轭
    d = np.diag(JD_d)[:n].imag / spec.hbar
    jc = np.diag(JC_d)[:n].real
    return SpectraRelation(d=d, jc=jc, ratio=d / jc, expected=2.0 * profile.k)


def commuting_heff(spec: ThermalSpec, lam) -> NDArray[np.float64]:
    """B' = S_th^T (lam (+) lam) S_th, so that [JB, JB'] = 0."""
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.size != spec.n:
        raise ShapeError(f"lambda must have {spec.n} entries, got {lam.size}")
    S_th = thermal_covariance(spec).S_th
    return symmetrize(S_th.T @ np.diag(np.concatenate([lam, lam])) @ S_th)


def heff_commutes(B, B_prime, tol: float = AUDIT_TOL) -> tuple:
    """(passed, |[JB, JB']|) for any candidate B', including degenerate-frequency families."""
    B = checked_symmetric(B, "B")
    B_prime = checked_symmetric(B_prime, "B'", dim=B.shape[0])
    J = sympmat(mode_count(B))
    norm = max_abs(commutator(J @ B, J @ B_prime))
    return norm <= tol * _operand_scale(B, B_prime), norm
