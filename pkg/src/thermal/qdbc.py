# src/thermal/qdbc.py
"""Detailed-balance-compliant noise for a target Gibbs state.

Given (B, beta) and per-mode couplings gbar, every GDS built here relaxes to
exp(-beta H)/Z whatever the couplings; the couplings only set the rates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Literal, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from src.gds.dynamics import spectral_abscissa
from src.gds.model import NoiseMatrices
from src.symplectic.core import hamiltonian_flow, q_matrix, random_symplectic, sympmat
from src.thermal.analysis import ThermalProfile, ThermalSpec, thermal_covariance
from src.utils.errors import RegimeError, ShapeError
from src.utils.linalg import antisymmetrize, hermitize, max_abs, symmetrize

logger = logging.getLogger(__name__)

Regime = Literal["high", "low", "diffusive"]


@dataclass(frozen=True)
class QdbcSpec:
    """Thermal target plus couplings.

    ``coupling_table`` maps beta -> couplings and, when given, replaces the
    constant ``gamma`` by a per-temperature interpolation. ``cbar`` holds the
    diffusive-limit constants cbar_j = nbar_j gbar_j.
    """

    thermal: ThermalSpec
    gamma: NDArray[np.float64]
    coupling_table: Optional[Dict[float, Sequence[float]]] = None
    cbar: Optional[NDArray[np.float64]] = None

    def __post_init__(self):
        n = self.thermal.n
        gamma = np.asarray(self.gamma, dtype=float).reshape(-1)
        if gamma.size != n:
            raise ShapeError(f"expected {n} couplings, got {gamma.size}")
        if np.any(~np.isfinite(gamma)) or np.any(gamma <= 0):
            raise ShapeError(f"couplings must be positive, got {gamma}")
        object.__setattr__(self, "gamma", gamma)
        if self.coupling_table is not None:
            for beta, row in self.coupling_table.items():
                row = np.asarray(row, dtype=float)
                if beta <= 0 or row.size != n or np.any(row <= 0):
                    raise ShapeError(f"invalid coupling table row beta={beta}: {row}")
        if self.cbar is not None:
            cbar = np.asarray(self.cbar, dtype=float).reshape(-1)
            if cbar.size != n or np.any(cbar <= 0):
                raise ShapeError(f"diffusive constants must be {n} positive reals, got {cbar}")
            object.__setattr__(self, "cbar", cbar)

    @property
    def n(self) -> int:
        return self.thermal.n

    @property
    def hbar(self) -> float:
        return self.thermal.hbar

    @property
    def beta(self) -> float:
        return self.thermal.beta

    def couplings(self) -> NDArray[np.float64]:
        if not self.coupling_table:
            return self.gamma
        betas = np.array(sorted(self.coupling_table))
        rows = np.array([np.asarray(self.coupling_table[b], dtype=float) for b in betas])
        return np.array([np.interp(self.beta, betas, rows[:, j]) for j in range(self.n)])

    def at_beta(self, beta: float) -> "QdbcSpec":
        return QdbcSpec(
            thermal=ThermalSpec(B=self.thermal.B, beta=beta, hbar=self.hbar),
            gamma=self.gamma,
            coupling_table=self.coupling_table,
            cbar=self.cbar,
        )


@dataclass(frozen=True)
class LindbladSet:
    """Rows of ``vectors`` are l_1..l_n (loss) then l_{n+1}..l_{2n} (gain)."""

    vectors: NDArray[np.complex128]
    w: NDArray[np.float64]
    s2: NDArray[np.float64]
    r2: NDArray[np.float64]

    @property
    def n(self) -> int:
        return self.w.size

    @property
    def loss(self) -> NDArray[np.complex128]:
        return self.vectors[: self.n]

    @property
    def gain(self) -> NDArray[np.complex128]:
        return self.vectors[self.n:]


@dataclass(frozen=True)
class QomeCoefficients:
    omega: NDArray[np.float64]
    nbar: NDArray[np.float64]
    gamma: NDArray[np.float64]
    loss_rate: NDArray[np.float64] = field(init=False)
    gain_rate: NDArray[np.float64] = field(init=False)

    def __post_init__(self):
        # 速率与 hbar 无关，hbar 只进入 nbar
        object.__setattr__(self, "loss_rate", self.gamma * (self.nbar + 1.0))
        object.__setattr__(self, "gain_rate", self.gamma * self.nbar)


@dataclass(frozen=True)
class CongruenceReport:
    times: Tuple[float, ...]
    defect_D: float
    defect_C: float
    defect_Gamma: float

    @property
    def max_defect(self) -> float:
        return max(self.defect_D, self.defect_C, self.defect_Gamma)


@dataclass(frozen=True)
class EigenoperatorReport:
    loss_residuals: NDArray[np.float64]
    gain_residuals: NDArray[np.float64]
    ratios: NDArray[np.float64]
    expected_ratios: NDArray[np.float64]
    tol: float

    @property
    def ratio_defect(self) -> float:
        return max_abs(self.ratios / self.expected_ratios - 1.0)

    @property
    def max_residual(self) -> float:
        return max(max_abs(self.loss_residuals), max_abs(self.gain_residuals))

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol and self.ratio_defect <= self.tol


@dataclass(frozen=True)
class RegimeLimit:
    regime: str
    D: NDArray[np.float64]
    C: NDArray[np.float64]
    V: Optional[NDArray[np.float64]]
    diagnostics: Dict[str, float]


def planck_factor(w, beta: float, hbar: float = 1.0):
    """nbar = 1 / (exp(hbar beta w) - 1)."""
    return 1.0 / np.expm1(hbar * beta * np.asarray(w, dtype=float))


def planck_distribution(nbar: float, levels: int) -> NDArray[np.float64]:
    """Thermal level populations nbar^m / (nbar + 1)^(m+1), m = 0..levels-1."""
    m = np.arange(levels)
    return np.exp(m * np.log(nbar) - (m + 1) * np.log1p(nbar)) if nbar > 0 else (m == 0).astype(float)


def _frame(spec: QdbcSpec) -> Tuple[ThermalProfile, NDArray[np.float64]]:
    profile = thermal_covariance(spec.thermal)
    return profile, profile.S_th_inv


def build_noise(spec: QdbcSpec) -> NoiseMatrices:
    """D = hbar^2 S^{-1}(gk (+) gk)S^{-T}, C = (hbar/2) S^{-1} J^T (g (+) g) S^{-T}."""
    profile, S_inv = _frame(spec)
    hbar = spec.hbar
    g = spec.couplings()
    gk = g * profile.k
    J = sympmat(spec.n)
    D = symmetrize(hbar ** 2 * S_inv @ np.diag(np.concatenate([gk, gk])) @ S_inv.T)
    C = antisymmetrize(0.5 * hbar * S_inv @ J.T @ np.diag(np.concatenate([g, g])) @ S_inv.T)
    return NoiseMatrices(Gamma=hermitize(D / hbar + 1j * C), D=D, C=C, hbar=hbar)


def eigenvectors(spec: QdbcSpec) -> NDArray[np.complex128]:
    """Rows l_bar_j: the first n columns of (Q S_th)^{-1} = S_th^{-1} Q^dagger."""
    _, S_inv = _frame(spec)
    M_inv = S_inv @ q_matrix(spec.n).conj().T
    return M_inv[:, : spec.n].T.copy()


def build_lindblad_vectors(spec: QdbcSpec) -> LindbladSet:
    """l_j = |s_j| l_bar_j, l_{n+j} = |s_j| exp(-hbar beta w_j / 2) conj(l_bar_j); phases 0."""
    profile, _ = _frame(spec)
    hbar, beta = spec.hbar, spec.beta
    w = profile.w
    nbar = planck_factor(w, beta, hbar)
    s2 = hbar * spec.couplings() * (nbar + 1.0)
    r2 = s2 * np.exp(-hbar * beta * w)  # 增益/损耗 = exp(-hbar beta w)
    lbar = eigenvectors(spec)
    s = np.sqrt(s2)[:, None]
    loss = s * lbar
    # 增益向量是损耗向量的共轭，本征值 -i w
    gain = s * np.exp(-0.5 * hbar * beta * w)[:, None] * lbar.conj()
    return LindbladSet(vectors=np.vstack([loss, gain]), w=w, s2=s2, r2=r2)


def mix_lindblad(lset: LindbladSet, W) -> LindbladSet:
    """l'_i = sum_k W_ik l_k for unitary W; the decoherence matrix is unchanged."""
    W = np.asarray(W, dtype=complex)
    m = lset.vectors.shape[0]
    if W.shape != (m, m):
        raise ShapeError(f"mixing matrix must be {m}x{m}, got {W.shape}")
    if max_abs(W.conj().T @ W - np.eye(m)) > 1e-10:
        raise ShapeError("mixing matrix is not unitary")
    return LindbladSet(vectors=W @ lset.vectors, w=lset.w, s2=lset.s2, r2=lset.r2)


def scale_gain(lset: LindbladSet, factor: float) -> LindbladSet:
    """Multiply every |r_j|^2 by ``factor``."""
    vectors = lset.vectors.copy()
    vectors[lset.n:] *= np.sqrt(factor)  # 后 n 行是增益
    return LindbladSet(vectors=vectors, w=lset.w, s2=lset.s2, r2=lset.r2 * factor)


def default_sample_times(w) -> Tuple[float, ...]:
    return (0.1, 1.0, 5.0, float(2.0 * np.pi / np.asarray(w)[0]))


def verify_congruence(noise: NoiseMatrices, thermal: ThermalSpec, times: Optional[Sequence[float]] = None) -> CongruenceReport:
    """Relative defects max_t |S_t X S_t^T - X| / |X| for X in (D, C, Gamma), S_t = exp(JBt)."""
    if times is None:
        times = default_sample_times(thermal_covariance(thermal).w)
    worst = {"D": 0.0, "C": 0.0, "Gamma": 0.0}
    mats = {"D": noise.D, "C": noise.C, "Gamma": noise.Gamma}
    for t in times:
        St = hamiltonian_flow(thermal.B, t)
        for key, X in mats.items():
            d = max_abs(St @ X @ St.T - X) / max(1.0, max_abs(X))
            worst[key] = max(worst[key], d)
    return CongruenceReport(times=tuple(float(t) for t in times), defect_D=worst["D"], defect_C=worst["C"], defect_Gamma=worst["Gamma"])


def verify_eigenoperators(lset: LindbladSet, thermal: ThermalSpec, tol: float = 1e-10) -> EigenoperatorReport:
    """JB l_j = i w_j l_j, JB l_{n+j} = -i w_j l_{n+j}, |l_{n+j}|^2 / |l_j|^2 = exp(-hbar beta w_j)."""
    profile = thermal_covariance(thermal)
    n = thermal.n
    if lset.vectors.shape != (2 * n, 2 * n):
        raise ShapeError(f"expected {2 * n} Lindblad vectors of length {2 * n}, got {lset.vectors.shape}")
    JB = sympmat(n) @ thermal.B
    w = profile.w
    loss_res = np.empty(n)
    gain_res = np.empty(n)
    ratios = np.empty(n)
    for j in range(n):
        l, r = lset.vectors[j], lset.vectors[n + j]
        nl, nr = np.linalg.norm(l), np.linalg.norm(r)
        loss_res[j] = max_abs(JB @ l - 1j * w[j] * l) / nl
        gain_res[j] = max_abs(JB @ r + 1j * w[j] * r) / nr
        ratios[j] = (nr / nl) ** 2
    expected = np.exp(-thermal.hbar * thermal.beta * w)
    return EigenoperatorReport(loss_residuals=loss_res, gain_residuals=gain_res, ratios=ratios, expected_ratios=expected, tol=tol)


def qome_coefficients(spec: QdbcSpec) -> QomeCoefficients:
    w = thermal_covariance(spec.thermal).w
    return QomeCoefficients(omega=w, nbar=planck_factor(w, spec.beta, spec.hbar), gamma=spec.couplings())


def limit_regimes(spec: QdbcSpec, regime: Regime, warn: bool = True) -> RegimeLimit:
    """Asymptotic noise matrices and covariance in the high/low temperature or diffusive limit."""
    profile, S_inv = _frame(spec)
    hbar, beta = spec.hbar, spec.beta
    n = spec.n
    w = profile.w
    g = spec.couplings()
    exact = build_noise(spec)
    frame_metric = S_inv @ S_inv.T
    J = sympmat(n)

    if regime == "high":
        x_max = hbar * beta * w[-1]
        if warn and x_max > 0.1:
            logger.warning(f"high-temperature limit used at hbar*beta*w_max = {x_max:.3g}")
        gw = g / w
        D = symmetrize((hbar / beta) * S_inv @ np.diag(np.concatenate([gw, gw])) @ S_inv.T)
        V = symmetrize(np.linalg.inv(hbar * beta * spec.thermal.B))
        diag = {
            "V_rel_error": max_abs(V - profile.V_th) / max_abs(profile.V_th),
            "D_rel_error": max_abs(D - exact.D) / max_abs(exact.D),
            "expected_order": x_max ** 2 / 12.0,
        }
        return RegimeLimit(regime, D, exact.C, V, diag)

    if regime == "low":
        x_min = hbar * beta * w[0]
        if warn and x_min < 10.0:
            logger.warning(f"low-temperature limit used at hbar*beta*w_min = {x_min:.3g}")
        # k -> 1/2：热态退化为该框架下的基态
        V = symmetrize(0.5 * frame_metric)
        D = symmetrize(hbar * frame_metric @ (J @ exact.C))
        diag = {
            "k_minus_half": float(np.max(profile.k - 0.5)),
            "bound": float(np.exp(-x_min)),
            "V_error": max_abs(V - profile.V_th),
            "D_rel_error": max_abs(D - exact.D) / max_abs(exact.D),
        }
        return RegimeLimit(regime, D, exact.C, V, diag)

    if regime == "diffusive":
        if spec.cbar is None:
            raise RegimeError("diffusive regime needs the constants cbar_j = nbar_j * gbar_j")
        cbar = spec.cbar
        D = symmetrize(hbar ** 2 * S_inv @ np.diag(np.concatenate([cbar, cbar])) @ S_inv.T)
        C = np.zeros_like(D)  # 无漂移阻尼，不存在稳态
        abscissa = spectral_abscissa(J @ spec.thermal.B)
        diag = {"spectral_abscissa": abscissa, "stationary": 0.0}
        return RegimeLimit(regime, D, C, None, diag)

    raise RegimeError(f"unknown regime {regime!r}; expected 'high', 'low' or 'diffusive'")


def diffusive_noise(spec: QdbcSpec) -> NoiseMatrices:
    lim = limit_regimes(spec, "diffusive")
    return NoiseMatrices(Gamma=lim.D / spec.hbar + 0j, D=lim.D, C=lim.C, hbar=spec.hbar)


def random_qdbc_spec(
    n: int,
    rng: np.random.Generator,
    beta_range: Tuple[float, float] = (0.1, 10.0),
    w_range: Tuple[float, float] = (0.5, 2.0),
    hbar: float = 1.0,
) -> QdbcSpec:
    S = random_symplectic(n, rng, scale=0.3)
    w = rng.uniform(*w_range, size=n)
    B = symmetrize(S.T @ np.diag(np.concatenate([w, w])) @ S)
    beta = float(rng.uniform(*beta_range))
    gamma = rng.uniform(0.05, 1.0, size=n)
    return QdbcSpec(thermal=ThermalSpec(B=B, beta=beta, hbar=hbar), gamma=gamma)
