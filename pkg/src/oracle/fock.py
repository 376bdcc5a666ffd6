# src/oracle/fock.py
"""Truncated Fock-space master equation, used as an independent check of the
Gaussian moment equations and of detailed balance.

Modes are little-endian: mode 0 is the fastest-varying tensor factor.
Quadratic operators are assembled at cutoff N + 2 and projected to N, so the
retained levels carry exact matrix elements.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field
from scipy.linalg import eigh, expm
from scipy.special import gammaln

from src.gds.dynamics import MomentTrajectory, evolve_trajectory
from src.gds.model import decoherence_matrix, drift_matrix, GdsSpec
from src.symplectic.core import sympmat, symplectic_eigenvalues
from src.thermal.qdbc import LindbladSet, QdbcSpec, build_lindblad_vectors, planck_distribution, planck_factor
from src.utils.config import cutoff_rule_of_thumb
from src.utils.errors import CutoffBudgetError, IntegrationError, ShapeError, TraceDriftError
from src.utils.linalg import dagger, hermitize, max_abs

logger = logging.getLogger(__name__)

MAX_DIM = 4096
MAX_CUTOFF_TWO_MODES = 16
PAD = 2
INTERIOR_MARGIN = 5


class OracleConfig(BaseModel):
    N: int = Field(default=40, ge=8, description="Fock cutoff per mode")
    dt: float = Field(default=2e-3, gt=0, description="RK4 step of the density-matrix integration")
    T: float = Field(default=10.0, gt=0, description="integration horizon")
    tol: float = Field(default=1e-4, gt=0, description="accepted Gaussian vs Fock moment deviation")
    samples: int = Field(default=51, ge=2, description="number of equally spaced sample times in [0, T]")
    trace_tol: float = Field(default=1e-8, gt=0, description="abort when |Tr rho - 1| exceeds this")
    positivity_tol: float = Field(default=1e-8, gt=0, description="abort when min eig rho < -positivity_tol")


@dataclass(frozen=True)
class TruncatedOperator:
    cutoff: int
    n: int
    matrix: NDArray[np.complex128]
    hermitian: Optional[bool] = None

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return max_abs(self.matrix - dagger(self.matrix)) <= tol * max(1.0, max_abs(self.matrix))


def _mat(op) -> NDArray[np.complex128]:
    return op.matrix if isinstance(op, TruncatedOperator) else np.asarray(op, dtype=complex)


def check_budget(n: int, N: int) -> None:
    if n < 1:
        raise ShapeError(f"mode count must be positive, got {n}")
    if n > 2:
        raise CutoffBudgetError(f"Fock oracle supports n <= 2 modes, got n = {n}")
    if n == 2 and N > MAX_CUTOFF_TWO_MODES:
        raise CutoffBudgetError(f"two-mode oracle requires N <= {MAX_CUTOFF_TWO_MODES}, got N = {N}")
    if N ** n > MAX_DIM:
        raise CutoffBudgetError(f"Fock dimension {N}^{n} = {N ** n} exceeds {MAX_DIM}")


def _levels(n: int, N: int) -> NDArray[np.int64]:
    """levels[i, j] = occupation of mode j in basis state i (little-endian)."""
    idx = np.arange(N ** n)
    # 第 j 个模式是 N 进制的第 j 位
    return np.stack([(idx // N ** j) % N for j in range(n)], axis=1)


def interior_indices(n: int, N: int, margin: int = INTERIOR_MARGIN) -> NDArray[np.int64]:
    return np.where(np.all(_levels(n, N) < N - margin, axis=1))[0]


def _projection(n: int, N: int, P: int) -> NDArray[np.int64]:
    """Positions of the cutoff-N basis states inside the cutoff-P space."""
    lv = _levels(n, N)
    return (lv * (P ** np.arange(n))).sum(axis=1)


def _embed(op: NDArray, j: int, n: int) -> NDArray:
    eye = np.eye(op.shape[0])
    out = np.ones((1, 1), dtype=complex)
    # kron 从最高位模式开始，与 _levels 的小端顺序一致
    for mode in reversed(range(n)):
        out = np.kron(out, op if mode == j else eye)
    return out


def annihilation(N: int) -> NDArray[np.complex128]:
    return np.diag(np.sqrt(np.arange(1, N)), k=1).astype(complex)


@dataclass(frozen=True)
class CanonicalOps:
    """q_j, p_j at cutoff N plus cutoff N+2 copies for quadratic products."""

    n: int
    N: int
    hbar: float
    q: Tuple[TruncatedOperator, ...]
    p: Tuple[TruncatedOperator, ...]
    a: Tuple[TruncatedOperator, ...]
    _x_pad: Tuple[NDArray, ...] = field(repr=False)
    _proj: NDArray[np.int64] = field(repr=False)

    @property
    def x(self) -> List[NDArray[np.complex128]]:
        return [op.matrix for op in self.q + self.p]

    @property
    def dim(self) -> int:
        return self.N ** self.n

    def product(self, j: int, k: int) -> NDArray[np.complex128]:
        """x_j x_k with exact matrix elements on the retained levels."""
        # 在 N+PAD 上相乘再投影回 N，保留能级上的矩阵元是精确的
        full = self._x_pad[j] @ self._x_pad[k]
        return full[np.ix_(self._proj, self._proj)]

    def identity(self) -> NDArray[np.complex128]:
        return np.eye(self.dim, dtype=complex)


def _quadratures(a: NDArray, hbar: float) -> Tuple[NDArray, NDArray]:
    ad = dagger(a)
    c = np.sqrt(hbar / 2.0)
    return c * (a + ad), -1j * c * (a - ad)


def build_canonical_ops(n: int, N: int, hbar: float = 1.0) -> CanonicalOps:
    check_budget(n, N)
    a1 = annihilation(N)
    a1_pad = annihilation(N + PAD)
    qs, ps, As, pads_q, pads_p = [], [], [], [], []
    for j in range(n):
        a = _embed(a1, j, n)
        q, p = _quadratures(a, hbar)
        qs.append(TruncatedOperator(N, n, q, True))
        ps.append(TruncatedOperator(N, n, p, True))
        As.append(TruncatedOperator(N, n, a, False))
        qp, pp = _quadratures(_embed(a1_pad, j, n), hbar)
        pads_q.append(qp)
        pads_p.append(pp)
    return CanonicalOps(
        n=n, N=N, hbar=hbar, q=tuple(qs), p=tuple(ps), a=tuple(As),
        _x_pad=tuple(pads_q + pads_p), _proj=_projection(n, N, N + PAD),
    )


def build_hamiltonian(B, ops: CanonicalOps, xi=None) -> TruncatedOperator:
    """1/2 x^T B x (+ x^T J xi)."""
    B = np.asarray(B, dtype=float)
    dim = 2 * ops.n
    if B.shape != (dim, dim):
        raise ShapeError(f"B must be {dim}x{dim}, got {B.shape}")
    H = np.zeros((ops.dim, ops.dim), dtype=complex)
    for j in range(dim):
        for k in range(dim):
            if B[j, k] != 0.0:
                H += 0.5 * B[j, k] * ops.product(j, k)  # 对称化由 B_jk = B_kj 保证
    if xi is not None:
        c = sympmat(ops.n) @ np.asarray(xi, dtype=float)
        for j in range(dim):
            H += c[j] * ops.x[j]
    return TruncatedOperator(ops.N, ops.n, hermitize(H), True)


def build_lindblad_ops(vectors: Union[LindbladSet, Sequence], ops: CanonicalOps) -> List[TruncatedOperator]:
    """L_k = l_k^T J x = sum_j (J^T l_k)_j x_j."""
    vecs = vectors.vectors if isinstance(vectors, LindbladSet) else np.atleast_2d(np.asarray(vectors, dtype=complex))
    J = sympmat(ops.n)
    out = []
    for l in vecs:
        if l.size != 2 * ops.n:
            raise ShapeError(f"Lindblad vector has length {l.size}, expected {2 * ops.n}")
        coeff = J.T @ l
        L = sum(coeff[j] * ops.x[j] for j in range(2 * ops.n))
        out.append(TruncatedOperator(ops.N, ops.n, np.asarray(L, dtype=complex), bool(np.allclose(l.imag, 0.0))))
    return out


@dataclass
class OracleGenerator:
    """Lindblad generator -(i/hbar)[H, .] + (1/2hbar) sum (2 L . L^+ - {L^+ L, .})."""

    H: NDArray[np.complex128]
    lindblads: List[NDArray[np.complex128]]
    hbar: float = 1.0

    def __post_init__(self):
        self.H = _mat(self.H)
        self.lindblads = [_mat(L) for L in self.lindblads]
        self._LdL = sum((dagger(L) @ L for L in self.lindblads), np.zeros_like(self.H))
        self._K = -1j / self.hbar * self.H - 0.5 / self.hbar * self._LdL
        # apply: K rho + rho K^+ + sum L rho L^+ / hbar

    def apply(self, rho: NDArray) -> NDArray:
        out = self._K @ rho + rho @ dagger(self._K)
        for L in self.lindblads:
            out += (1.0 / self.hbar) * L @ rho @ dagger(L)
        return out

    def heisenberg_unitary(self, A: NDArray) -> NDArray:
        return (1j / self.hbar) * (self.H @ A - A @ self.H)

    def heisenberg_dissipative(self, A: NDArray) -> NDArray:
        out = -0.5 / self.hbar * (A @ self._LdL + self._LdL @ A)
        for L in self.lindblads:
            out += (1.0 / self.hbar) * dagger(L) @ A @ L
        return out

    def heisenberg(self, A: NDArray) -> NDArray:
        return self.heisenberg_unitary(A) + self.heisenberg_dissipative(A)


def generator_apply(rho, H_eff, lindblads: Sequence, hbar: float = 1.0) -> NDArray[np.complex128]:
    return OracleGenerator(H_eff, list(lindblads), hbar).apply(_mat(rho))


def heisenberg_apply(A, H_eff, lindblads: Sequence, hbar: float = 1.0, part: str = "full") -> NDArray[np.complex128]:
    gen = OracleGenerator(H_eff, list(lindblads), hbar)
    A = _mat(A)
    if part == "unitary":
        return gen.heisenberg_unitary(A)
    if part == "dissipative":
        return gen.heisenberg_dissipative(A)
    return gen.heisenberg(A)


def gibbs_weight(H, beta: float) -> NDArray[np.complex128]:
    """Unnormalized exp(-beta H) from the eigendecomposition of the truncated H."""
    E, U = eigh(_mat(H))
    return (U * np.exp(-beta * E)) @ dagger(U)


def gibbs_state(H, beta: float) -> NDArray[np.complex128]:
    E, U = eigh(_mat(H))
    # shift by the ground energy before exponentiating
    weights = np.exp(-beta * (E - E[0]))
    rho = (U * weights) @ dagger(U)
    return hermitize(rho / np.trace(rho).real)


def coherent_state(alpha, N: int) -> NDArray[np.complex128]:
    """|alpha_0> (x) ... from Poisson amplitudes, renormalized on the truncated space."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
    n = alpha.size
    check_budget(n, N)
    m = np.arange(N)
    ket = np.ones(1, dtype=complex)
    for mode in reversed(range(n)):
        al = alpha[mode]
        if al == 0:
            amp = (m == 0).astype(complex)
        else:
            amp = np.exp(-0.5 * abs(al) ** 2 + m * np.log(al) - 0.5 * gammaln(m + 1))
        ket = np.kron(ket, amp)
    # 截断丢掉的尾部概率在这里重新归一化
    ket /= np.linalg.norm(ket)
    return np.outer(ket, ket.conj())


def displace(rho, alpha, ops: CanonicalOps) -> NDArray[np.complex128]:
    """D(alpha) rho D(alpha)^+ with D = exp(sum_j alpha_j a_j^+ - conj(alpha_j) a_j)."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
    G = sum(al * dagger(a.matrix) - np.conj(al) * a.matrix for al, a in zip(alpha, ops.a))
    Dop = expm(G)
    return Dop @ _mat(rho) @ dagger(Dop)


def moments(rho, ops: CanonicalOps) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """<x> and V = (1/2hbar) <{dx, dx^T}> by trace formulas."""
    rho = _mat(rho)
    dim = 2 * ops.n
    x = ops.x
    mean = np.array([np.trace(rho @ xj).real for xj in x])
    second = np.empty((dim, dim))
    for j in range(dim):
        for k in range(j, dim):
            val = 0.5 * np.trace(rho @ (ops.product(j, k) + ops.product(k, j))).real
            second[j, k] = second[k, j] = val
    V = (second - np.outer(mean, mean)) / ops.hbar
    return mean, V


def integrate_moments(rho0, config: OracleConfig, generator: OracleGenerator, ops: CanonicalOps) -> MomentTrajectory:
    """RK4 of the truncated master equation, sampling moments on an even grid in [0, T].

    Raises:
        TraceDriftError: |Tr rho_t - 1| exceeded ``config.trace_tol``.
        IntegrationError: rho_t lost positivity beyond ``config.positivity_tol``.
    """
    rho = _mat(rho0).copy()
    times = np.linspace(0.0, config.T, config.samples)
    means, covs = [], []
    t_prev = 0.0
    f = generator.apply
    for t in times:
        if t > t_prev:
            steps = max(1, int(np.ceil((t - t_prev) / config.dt - 1e-9)))
            h = (t - t_prev) / steps
            for _ in range(steps):
                k1 = f(rho)
                k2 = f(rho + 0.5 * h * k1)
                k3 = f(rho + 0.5 * h * k2)
                k4 = f(rho + h * k3)
                rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            # 只在采样点对称化
            rho = hermitize(rho)
        drift = abs(np.trace(rho).real - 1.0)
        if drift > config.trace_tol:
            raise TraceDriftError(f"trace drift at t = {t:.3g}; increase the cutoff", drift)
        # 正定性只在采样点检查
        min_eig = float(np.linalg.eigvalsh(rho)[0])
        if min_eig < -config.positivity_tol:
            raise IntegrationError(f"density matrix lost positivity at t = {t:.3g}", -min_eig)
        m, V = moments(rho, ops)
        means.append(m)
        covs.append(V)
        t_prev = float(t)
    return MomentTrajectory(times=times, means=np.array(means), covariances=np.array(covs))


def gns_inner(A, B, sigma) -> complex:
    """<A, B>_sigma = Tr(sigma A^+ B)."""
    return complex(np.trace(_mat(sigma) @ dagger(_mat(A)) @ _mat(B)))


def monomial_basis(ops: CanonicalOps, order: int = 2, margin: int = INTERIOR_MARGIN) -> List[Tuple[str, NDArray]]:
    """1, x_j and symmetrized x_j x_k (and q_j^3, p_j^3 for order 3), cut to the interior block."""
    dim = 2 * ops.n
    names = [f"q{j}" for j in range(ops.n)] + [f"p{j}" for j in range(ops.n)]
    basis = [("1", ops.identity())]
    basis += [(names[j], ops.x[j]) for j in range(dim)]
    if order >= 2:
        for j in range(dim):
            for k in range(j, dim):
                basis.append((f"{names[j]}{names[k]}", 0.5 * (ops.product(j, k) + ops.product(k, j))))
    if order >= 3:
        for j in range(dim):
            basis.append((f"{names[j]}^3", ops.product(j, j) @ ops.x[j]))
    # 边界能级上的截断误差不参与细致平衡检验
    keep = np.zeros(ops.dim, dtype=bool)
    keep[interior_indices(ops.n, ops.N, margin)] = True
    mask = np.outer(keep, keep)
    return [(name, np.where(mask, M, 0.0)) for name, M in basis]


@dataclass(frozen=True)
class DetailedBalanceReport:
    dissipative_defect: float
    unitary_defect: float

    @property
    def defect(self) -> float:
        return max(self.dissipative_defect, self.unitary_defect)


def detailed_balance_defect(generator: OracleGenerator, sigma, basis: Sequence) -> DetailedBalanceReport:
    """GNS self-adjointness of the dissipative part, anti-self-adjointness of the unitary part.

    sigma is normalized to unit trace and each basis element to unit GNS norm.
    """
    sigma = _mat(sigma)
    sigma = sigma / np.trace(sigma).real
    mats = []
    for item in basis:
        M = _mat(item[1] if isinstance(item, tuple) else item)
        norm = np.sqrt(abs(gns_inner(M, M, sigma)))
        if norm > 0:
            mats.append(M / norm)
    LU = [generator.heisenberg_unitary(M) for M in mats]
    LD = [generator.heisenberg_dissipative(M) for M in mats]
    m = len(mats)
    GU = np.array([[gns_inner(LU[i], mats[j], sigma) for j in range(m)] for i in range(m)])
    GD = np.array([[gns_inner(LD[i], mats[j], sigma) for j in range(m)] for i in range(m)])
    # <L A_i, A_j> vs <A_i, L A_j> = conj(<L A_j, A_i>)
    return DetailedBalanceReport(
        dissipative_defect=max_abs(GD - GD.conj().T),
        unitary_defect=max_abs(GU + GU.conj().T),
    )


def gibbs_residual(generator: OracleGenerator, H_sys, beta: float) -> float:
    return max_abs(generator.apply(gibbs_state(H_sys, beta)))


def planck_check(H_sys, beta: float, w: float, hbar: float = 1.0) -> float:
    """max |population_m - nbar^m/(nbar+1)^(m+1)| over levels m < N/2 (single mode)."""
    H = _mat(H_sys)
    E, U = eigh(H)
    rho = gibbs_state(H, beta)
    pops = np.einsum("im,ij,jm->m", U.conj(), rho, U).real
    levels = H.shape[0] // 2  # 上半部分能级受截断影响
    expected = planck_distribution(float(planck_factor(w, beta, hbar)), levels)
    return max_abs(pops[:levels] - expected)


@dataclass(frozen=True)
class OracleReport:
    max_moment_deviation: float
    gibbs_residual: float
    gns_defect: float
    cutoff_below_rule: bool
    fock: MomentTrajectory
    gaussian: MomentTrajectory


def run_oracle(
    spec: QdbcSpec,
    config: OracleConfig,
    alpha=1.0,
    lindblad_set: Optional[LindbladSet] = None,
    B_prime=None,
    xi_prime=None,
) -> OracleReport:
    """Compare Gaussian and truncated-Fock evolution from a coherent state, plus Gibbs and GNS checks."""
    n, hbar, beta = spec.n, spec.hbar, spec.beta
    nbar_max = float(np.max(planck_factor(_frequencies(spec), beta, hbar)))
    rule = cutoff_rule_of_thumb(nbar_max)
    below = config.N < rule
    if below:
        logger.warning(f"cutoff below rule of thumb: N = {config.N} < {rule}")
    logger.debug(f"run_oracle: n = {n}, N = {config.N}, nbar bound {nbar_max:.3g}")

    ops = build_canonical_ops(n, config.N, hbar)
    lset = lindblad_set if lindblad_set is not None else build_lindblad_vectors(spec)
    B_eff = spec.thermal.B if B_prime is None else np.asarray(B_prime, dtype=float)
    xi = np.zeros(2 * n) if xi_prime is None else np.asarray(xi_prime, dtype=float)
    H_sys = build_hamiltonian(spec.thermal.B, ops)
    H_eff = build_hamiltonian(B_eff, ops, xi)
    gen = OracleGenerator(H_eff.matrix, [L.matrix for L in build_lindblad_ops(lset, ops)], hbar)

    alpha = np.broadcast_to(np.asarray(alpha, dtype=complex), (n,))
    rho0 = coherent_state(alpha, config.N)
    fock = integrate_moments(rho0, config, gen, ops)

    gds = GdsSpec(B_prime=B_eff, xi_prime=xi, lindblad_vectors=lset.vectors, hbar=hbar)
    noise = decoherence_matrix(lset.vectors, hbar=hbar)
    A = drift_matrix(gds, noise).A
    # <q> = sqrt(2 hbar) Re alpha, <p> = sqrt(2 hbar) Im alpha
    mean0 = np.sqrt(2.0 * hbar) * np.concatenate([alpha.real, alpha.imag])
    # 相干态的协方差是真空 I/2
    gauss = evolve_trajectory(A, xi, noise.D, mean0, 0.5 * np.eye(2 * n), fock.times, hbar=hbar, dt=min(config.dt, 1e-3))

    deviation = max(max_abs(fock.means - gauss.means), max_abs(fock.covariances - gauss.covariances))
    residual = gibbs_residual(gen, H_sys.matrix, beta)
    db = detailed_balance_defect(gen, gibbs_weight(H_sys.matrix, beta), monomial_basis(ops))
    logger.info(f"oracle: moment deviation {deviation:.3e}, Gibbs residual {residual:.3e}, GNS defect {db.defect:.3e}")
    return OracleReport(
        max_moment_deviation=deviation,
        gibbs_residual=residual,
        gns_defect=db.defect,
        cutoff_below_rule=below,
        fock=fock,
        gaussian=gauss,
    )


def _frequencies(spec: QdbcSpec) -> NDArray[np.float64]:
    return symplectic_eigenvalues(spec.thermal.B)
