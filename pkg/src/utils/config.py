# src/utils/config.py
"""容差与运行配置。

``load_dotenv()`` 在导入时执行，``.env`` 中的 ``GDS_THERMO_TOL`` 会覆盖默认审计容差。
"""
import math
import os

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field

from src.utils.errors import ConfigError

load_dotenv()

TOL_ENV_VAR = "GDS_THERMO_TOL"


class Tolerances(BaseModel):
    model_config = ConfigDict(frozen=True)

    symplectic: float = Field(default=1e-10, gt=0, description="max |S J S^T - J| accepted as symplectic")
    positive_definite: float = Field(default=1e-12, gt=0, description="relative smallest-eigenvalue threshold")
    hurwitz: float = Field(default=1e-10, gt=0, description="A is Hurwitz iff max Re eig(A) < -hurwitz")
    audit: float = Field(default=1e-9, gt=0, description="default tolerance of commutator/congruence audits")
    lyapunov_residual: float = Field(default=1e-10, gt=0, description="residual bound relative to |Q|")
    pure_state_margin: float = Field(default=1e-9, gt=0, description="kappa must exceed 1/2 + margin")
    oracle_moment: float = Field(default=1e-4, gt=0, description="Gaussian vs Fock moment deviation")
    gibbs_residual: float = Field(default=1e-5, gt=0, description="|L(rho_Gibbs)| accepted as stationary")
    gns_defect: float = Field(default=1e-6, gt=0, description="GNS detailed-balance defect bound")
    trace_drift: float = Field(default=1e-8, gt=0, description="|Tr rho_t - 1| abort threshold")
    positivity: float = Field(default=1e-8, gt=0, description="min eig rho_t lower bound")
    rk4_dt: float = Field(default=1e-3, gt=0, description="default fixed RK4 step")


def load_tolerances(**overrides) -> Tolerances:
    """默认容差，应用环境变量覆盖和显式参数覆盖。"""
    values = dict(overrides)
    raw = os.getenv(TOL_ENV_VAR)
    if raw is not None and "audit" not in values:
        try:
            audit = float(raw)
        except ValueError:
            raise ConfigError(f"{TOL_ENV_VAR} must be a float, got {raw!r}") from None
        if not math.isfinite(audit) or audit <= 0:
            raise ConfigError(f"{TOL_ENV_VAR} must be a positive finite float, got {raw!r}")
        values["audit"] = audit
    return Tolerances(**values)


def cutoff_rule_of_thumb(nbar: float) -> int:
    """Smallest Fock cutoff recommended for a mode with thermal occupation ``nbar``."""
    return int(math.ceil(20.0 * (nbar + 1.0)))
