# src/cli/schema.py
"""模型文件与报告文件的 pydantic 定义。复数一律序列化为 [re, im]。"""
from __future__ import annotations

from datetime import datetime
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src import __version__
from src.gds.model import GdsSpec, noise_from_matrices
from src.thermal.analysis import ThermalSpec, thermal_covariance
from src.thermal.qdbc import LindbladSet, QdbcSpec
from src.utils.errors import ShapeError

SCHEMA_VERSION = 1
SYMMETRY_TOL = 1e-12

Matrix = List[List[float]]
ComplexPair = Tuple[float, float]


def _check_square(name: str, M: Optional[Matrix], dim: int) -> Optional[np.ndarray]:
    if M is None:
        return None
    arr = np.asarray(M, dtype=float)
    if arr.shape != (dim, dim):
        raise ValueError(f"{name} must be {dim}x{dim}, got shape {arr.shape}")
    return arr


def _check_symmetric(name: str, arr: np.ndarray) -> None:
    defect = float(np.max(np.abs(arr - arr.T)))
    if defect > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(arr)))):
        raise ValueError(f"{name} is not symmetric (max asymmetry {defect:.3e})")


class ModelFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(ge=1, description="number of bosonic modes")
    hbar: float = Field(default=1.0, gt=0, description="reduced Planck constant")
    B: Matrix = Field(description="2n x 2n Hessian of the system Hamiltonian, (q..., p...) block order")
    beta: float = Field(gt=0, description="inverse temperature")
    gamma: List[float] = Field(description="n positive coupling constants")
    B_prime: Optional[Matrix] = Field(default=None, description="Hessian of the effective Hamiltonian; defaults to B")
    xi_prime: Optional[List[float]] = Field(default=None, description="linear term of the effective Hamiltonian")
    lindblad_vectors: Optional[List[List[ComplexPair]]] = Field(
        default=None, description="explicit Lindblad vectors, each 2n complex entries as [re, im]"
    )
    regime: Optional[Literal["thermal", "high", "low", "diffusive"]] = Field(default=None)
    cbar: Optional[List[float]] = Field(default=None, description="diffusive-limit constants cbar_j = nbar_j gamma_j")
    coupling_table: Optional[Dict[float, List[float]]] = Field(
        default=None, description="optional beta -> couplings table (temperature-dependent couplings)"
    )

    @field_validator("gamma")
    @classmethod
    def _positive_gamma(cls, v: List[float]) -> List[float]:
        if any(not (g > 0) for g in v):
            raise ValueError("couplings must be positive")
        return v

    @model_validator(mode="after")
    def _dimensions(self) -> "ModelFile":
        dim = 2 * self.n
        B = _check_square("B", self.B, dim)
        _check_symmetric("B", B)
        self.B = (0.5 * (B + B.T)).tolist()
        if len(self.gamma) != self.n:
            raise ValueError(f"gamma must have {self.n} entries, got {len(self.gamma)}")
        Bp = _check_square("B_prime", self.B_prime, dim)
        if Bp is not None:
            _check_symmetric("B_prime", Bp)
            self.B_prime = (0.5 * (Bp + Bp.T)).tolist()
        if self.xi_prime is not None and len(self.xi_prime) != dim:
            raise ValueError(f"xi_prime must have {dim} entries, got {len(self.xi_prime)}")
        if self.lindblad_vectors is not None:
            for k, vec in enumerate(self.lindblad_vectors):
                if len(vec) != dim:
                    raise ValueError(f"lindblad_vectors[{k}] must have {dim} entries, got {len(vec)}")
        if self.cbar is not None and len(self.cbar) != self.n:
            raise ValueError(f"cbar must have {self.n} entries, got {len(self.cbar)}")
        if self.regime == "diffusive" and self.cbar is None:
            raise ValueError("regime 'diffusive' requires cbar")
        return self

    def thermal_spec(self, beta: Optional[float] = None) -> ThermalSpec:
        return ThermalSpec(B=np.asarray(self.B), beta=self.beta if beta is None else beta, hbar=self.hbar)

    def qdbc_spec(self, beta: Optional[float] = None) -> QdbcSpec:
        return QdbcSpec(
            thermal=self.thermal_spec(beta),
            gamma=np.asarray(self.gamma),
            coupling_table=self.coupling_table,
            cbar=None if self.cbar is None else np.asarray(self.cbar),
        )

    def lindblad_array(self) -> Optional[np.ndarray]:
        if self.lindblad_vectors is None:
            return None
        arr = np.asarray(self.lindblad_vectors, dtype=float)
        return arr[..., 0] + 1j * arr[..., 1]

    def effective_hessian(self) -> np.ndarray:
        return np.asarray(self.B if self.B_prime is None else self.B_prime, dtype=float)

    def gds_spec(self, lindblad_vectors) -> GdsSpec:
        xi = np.zeros(2 * self.n) if self.xi_prime is None else np.asarray(self.xi_prime)
        return GdsSpec(B_prime=self.effective_hessian(), xi_prime=xi, lindblad_vectors=lindblad_vectors, hbar=self.hbar)

    def lindblad_set(self) -> Optional[LindbladSet]:
        """Explicit vectors wrapped with moduli read off their norms."""
        vecs = self.lindblad_array()
        if vecs is None:
            return None
        if vecs.shape[0] != 2 * self.n:
            raise ShapeError(f"expected {2 * self.n} Lindblad vectors (loss then gain), got {vecs.shape[0]}")
        w = thermal_covariance(self.thermal_spec()).w
        # squared norms, equal to |s|^2, |r|^2 up to the norm of the eigenvector
        norms = np.linalg.norm(vecs, axis=1) ** 2
        return LindbladSet(vectors=vecs, w=w, s2=norms[: self.n], r2=norms[self.n:])


class ExplicitAuditFile(BaseModel):
    """Direct (D, C, V) triple for auditing hand-written noise matrices."""

    model_config = ConfigDict(extra="forbid")

    n: int = Field(ge=1)
    hbar: float = Field(default=1.0, gt=0)
    D: Matrix
    C: Matrix
    V: Matrix

    @model_validator(mode="after")
    def _dimensions(self) -> "ExplicitAuditFile":
        dim = 2 * self.n
        for name in ("D", "C", "V"):
            _check_square(name, getattr(self, name), dim)
        _check_symmetric("D", np.asarray(self.D))
        _check_symmetric("V", np.asarray(self.V))
        return self

    def noise(self):
        return noise_from_matrices(np.asarray(self.D), np.asarray(self.C), self.hbar)


class Verdict(BaseModel):
    name: str
    passed: bool
    residual: float
    tol: float


class ModeRow(BaseModel):
    omega: float
    nbar: float
    gamma: float
    loss_rate: float
    gain_rate: float


class Provenance(BaseModel):
    version: str = __version__
    schema_version: int = SCHEMA_VERSION
    tolerances: Dict[str, float]
    seed: Optional[int] = None
    numpy: str = np.__version__
    timestamp: str = Field(default_factory=lambda: datetime.now().isoformat(timespec="seconds"))


class ReportFile(BaseModel):
    command: str
    arguments: Dict[str, str]
    verdicts: List[Verdict] = Field(default_factory=list)
    residuals: Dict[str, Optional[float]] = Field(default_factory=dict)
    modes: List[ModeRow] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)
    outputs: Dict[str, object] = Field(default_factory=dict)
    provenance: Provenance

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def add_verdict(self, name: str, residual: float, tol: float) -> Verdict:
        v = Verdict(name=name, passed=bool(residual <= tol), residual=float(residual), tol=float(tol))
        self.verdicts.append(v)
        return v


def matrix_out(M) -> Matrix:
    return np.asarray(M, dtype=float).tolist()


def complex_out(vectors) -> List[List[List[float]]]:
    arr = np.asarray(vectors, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()
