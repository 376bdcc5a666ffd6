# src/gds/dynamics.py
"""First and second moments under a GDS.

    dm/dt = A m - xi
    dV/dt = A V + V A^T + D / hbar
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import quad_vec, simpson
from scipy.linalg import LinAlgError, expm, solve

from src.gds.model import GdsSpec, NoiseMatrices, bona_fide_margin, drift_matrix, require_bona_fide
from src.symplectic.core import symplectic_eigenvalues
from src.utils.errors import (
    AuditFailedError,
    IntegrationError,
    LinearSolveError,
    NotBonaFideError,
    NoStationaryStateError,
    NotHurwitzError,
    ShapeError,
)
from src.utils.linalg import as_square, checked_symmetric, max_abs, symmetrize

logger = logging.getLogger(__name__)

DEFAULT_DT = 1e-3
HURWITZ_TOL = 1e-10
CROSS_CHECK_TOL = 1e-6
BONA_FIDE_TOL = 1e-10
# 截断 Fock 轨迹的正定性只保证到 positivity_tol 量级
TRAJECTORY_BONA_FIDE_TOL = 1e-7


@dataclass(frozen=True)
class MomentTrajectory:
    times: NDArray[np.float64]
    means: NDArray[np.float64]
    covariances: NDArray[np.float64]

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ShapeError("trajectory times must be strictly increasing")
        if not (len(times) == len(self.means) == len(self.covariances)):
            raise ShapeError("times, means and covariances must have equal length")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "covariances", np.asarray(self.covariances, dtype=float))
        for k, V in enumerate(self.covariances):
            require_bona_fide(V, f"covariance at t = {times[k]:.6g}", TRAJECTORY_BONA_FIDE_TOL)

    def __len__(self) -> int:
        return self.times.size

    def min_symplectic_eigenvalues(self) -> NDArray[np.float64]:
        return np.array([symplectic_eigenvalues(V)[0] for V in self.covariances])

    def bona_fide_margins(self) -> NDArray[np.float64]:
        return np.array([bona_fide_margin(V) for V in self.covariances])


def spectral_abscissa(A) -> float:
    A = np.asarray(A, dtype=float)
    return float(np.max(np.linalg.eigvals(A).real))


def is_hurwitz(A, tol: float = HURWITZ_TOL) -> Tuple[bool, float]:
    """(max Re eig(A) < -tol, spectral abscissa)."""
    abscissa = spectral_abscissa(as_square(A, "drift matrix"))
    return abscissa < -tol, abscissa


def lyapunov_solve(A, Q, tol: float = 1e-10, hurwitz_tol: float = HURWITZ_TOL) -> NDArray[np.float64]:
    """Unique V with A V + V A^T + Q = 0 via the Kronecker-sum system.

    (I (x) A + A (x) I) vec(V) = -vec(Q), column-major vec.
    """
    A = as_square(A, "drift matrix")
    Q = checked_symmetric(Q, "Q", dim=A.shape[0])
    ok, abscissa = is_hurwitz(A, hurwitz_tol)
    if not ok:
        raise NotHurwitzError(abscissa)
    dim = A.shape[0]
    eye = np.eye(dim)
    # 列优先 vec：vec(AV) = (I kron A) vec V，vec(VA^T) = (A kron I) vec V
    K = np.kron(eye, A) + np.kron(A, eye)
    try:
        vec = solve(K, -Q.reshape(-1, order="F"))
    except LinAlgError as exc:
        raise LinearSolveError(f"Lyapunov system is singular: {exc}") from exc
    V = symmetrize(vec.reshape(dim, dim, order="F"))
    residual = max_abs(A @ V + V @ A.T + Q)
    if residual > tol * max(1.0, max_abs(Q)):
        raise LinearSolveError("Lyapunov residual above tolerance", residual)
    logger.debug(f"lyapunov_solve residual {residual:.3e}")
    return V


def _steps(t: float, dt: float) -> Tuple[int, float]:
    if dt <= 0:
        raise ShapeError(f"time step must be positive, got {dt}")
    # 步数取整后步长不超过 dt
    steps = max(1, int(math.ceil(abs(t) / dt - 1e-9)))
    return steps, t / steps


def evolve_mean(A, xi, mean0, t: float) -> NDArray[np.float64]:
    """m(t) = e^{At} m0 - A^{-1}(e^{At} - I) xi; quadrature when A is singular."""
    A = as_square(A, "drift matrix")
    xi = np.asarray(xi, dtype=float).reshape(-1)
    m0 = np.asarray(mean0, dtype=float).reshape(-1)
    if t == 0:
        return m0.copy()
    E = expm(A * t)
    if np.linalg.cond(A) < 1e12:
        return E @ m0 - solve(A, (E - np.eye(A.shape[0])) @ xi)
    logger.debug("evolve_mean: singular drift, integrating the source term")
    source, err = quad_vec(lambda s: expm(A * (t - s)) @ xi, 0.0, t, epsabs=1e-13, epsrel=1e-12)
    return E @ m0 - source


def integrate_mean_rk4(A, xi, mean0, t: float, dt: float = DEFAULT_DT) -> NDArray[np.float64]:
    A = as_square(A, "drift matrix")
    xi = np.asarray(xi, dtype=float).reshape(-1)
    m = np.asarray(mean0, dtype=float).reshape(-1).copy()
    if t == 0:
        return m

    def f(x):
        return A @ x - xi

    steps, h = _steps(t, dt)
    for _ in range(steps):
        k1 = f(m)
        k2 = f(m + 0.5 * h * k1)
        k3 = f(m + 0.5 * h * k2)
        k4 = f(m + h * k3)
        m = m + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return m


def _rk4_cov(A, Q, V, steps: int, h: float) -> NDArray[np.float64]:
    AT = A.T

    def f(X):
        return A @ X + X @ AT + Q

    for _ in range(steps):
        k1 = f(V)
        k2 = f(V + 0.5 * h * k1)
        k3 = f(V + 0.5 * h * k2)
        k4 = f(V + h * k3)
        V = V + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return symmetrize(V)


def _quadrature_cov(A, Q, V0, steps: int, h: float) -> NDArray[np.float64]:
    """e^{At} V0 e^{A^T t} + int_0^t e^{As} Q e^{A^T s} ds, composite Simpson."""
    Eh = expm(A * h)
    E = np.eye(A.shape[0])
    samples = np.empty((steps + 1,) + A.shape)
    for k in range(steps + 1):
        samples[k] = E @ Q @ E.T  # 被积函数在 s = k h 处的值
        if k < steps:
            E = Eh @ E
    return symmetrize(E @ V0 @ E.T + simpson(samples, dx=h, axis=0))


def evolve_cov(A, D, V0, t: float, hbar: float = 1.0, dt: float = DEFAULT_DT, cross_check: bool = True) -> NDArray[np.float64]:
    """V_t by RK4 of the covariance equation, checked against the quadrature form.

    Raises:
        NotBonaFideError: V0 violates V0 + (i/2)J >= 0.
        IntegrationError: the two routes disagree beyond tolerance.
    """
    A = as_square(A, "drift matrix")
    Q = checked_symmetric(D, "D", dim=A.shape[0]) / hbar
    V0 = checked_symmetric(V0, "V0", dim=A.shape[0])
    V0 = require_bona_fide(V0, "V0", BONA_FIDE_TOL)
    if t == 0:
        return V0.copy()
    steps, h = _steps(t, dt)
    V = _rk4_cov(A, Q, V0, steps, h)
    if cross_check:
        V_quad = _quadrature_cov(A, Q, V0, steps, h)
        residual = max_abs(V - V_quad)
        if residual > CROSS_CHECK_TOL * max(1.0, max_abs(V)):
            raise IntegrationError(f"step size {h:.3e} too large for t = {t}", residual)
        logger.debug(f"evolve_cov: {steps} steps, RK4 vs quadrature {residual:.3e}")
    return V


def evolve_trajectory(
    A,
    xi,
    D,
    mean0,
    V0,
    times: Sequence[float],
    hbar: float = 1.0,
    dt: float = DEFAULT_DT,
) -> MomentTrajectory:
    """Sample mean (closed form) and covariance (RK4) on ``times``, starting at t = 0."""
    A = as_square(A, "drift matrix")
    Q = checked_symmetric(D, "D", dim=A.shape[0]) / hbar
    V = checked_symmetric(V0, "V0", dim=A.shape[0])
    V = require_bona_fide(V, "V0", BONA_FIDE_TOL)
    times = np.asarray(times, dtype=float)
    if times.size == 0 or times[0] < 0:
        raise ShapeError("sample times must be non-empty and start at t >= 0")
    means, covs = [], []
    t_prev = 0.0
    for t in times:
        if t > t_prev:
            # 协方差从上一个采样点接着积分
            steps, h = _steps(t - t_prev, dt)
            V = _rk4_cov(A, Q, V, steps, h)
        means.append(evolve_mean(A, xi, mean0, float(t)))
        covs.append(V.copy())
        t_prev = float(t)
    return MomentTrajectory(times=times, means=np.array(means), covariances=np.array(covs))


def stationary_moments(
    spec: GdsSpec, noise: NoiseMatrices, hurwitz_tol: float = HURWITZ_TOL, tol: float = 1e-10
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """(mean, V) with A mean = xi' and A V + V A^T + D/hbar = 0.

    Raises:
        NoStationaryStateError: A is not Hurwitz.
    """
    A = drift_matrix(spec, noise).A
    ok, abscissa = is_hurwitz(A, hurwitz_tol)
    if not ok:
        raise NoStationaryStateError(abscissa)
    mean = solve(A, spec.xi_prime)
    V = lyapunov_solve(A, noise.D / spec.hbar, hurwitz_tol=hurwitz_tol)
    margin = bona_fide_margin(V)
    if margin < -tol:
        raise AuditFailedError(f"stationary covariance violates the bona fide condition (margin {margin:.3e})")
    return mean, V
