from __future__ import annotations

import math
from functools import lru_cache
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import zeta

from app.models.pvalues import readonly_array

# Termos somados explicitamente antes da cauda integral na família log
_LOG_PARTIAL_TERMS = 1_000_000


@lru_cache(maxsize=32)
def _normalizer(family: str, exponent: float) -> float:
    if family == "power":
        return float(zeta(exponent, 1.0))
    j = np.arange(1, _LOG_PARTIAL_TERMS + 1, dtype=np.float64)
    partial = float(np.sum(1.0 / ((j + 1.0) * np.log(j + 1.0) ** exponent)))
    # ∫_N^∞ dx / ((x+1) log(x+1)^g) majora a cauda da soma
    tail = math.log(_LOG_PARTIAL_TERMS + 1.0) ** (1.0 - exponent) / (exponent - 1.0)
    return partial + tail


# Tabelas γ_j por (família, expoente, normalização); só crescem, de modo que γ_j
# calculado uma vez nunca muda dentro do processo
_GAMMA_TABLES: dict[tuple[str, float, bool], np.ndarray] = {}


def _raw_gamma(family: str, exponent: float, j: np.ndarray) -> np.ndarray:
    safe = np.maximum(j, 1.0)
    if family == "power":
        raw = safe ** (-exponent)
    else:
        raw = 1.0 / ((safe + 1.0) * np.log(safe + 1.0) ** exponent)
    return np.where(j >= 1.0, raw, 0.0)


def _gamma_table(family: str, exponent: float, normalize: bool, size: int) -> np.ndarray:
    key = (family, exponent, normalize)
    table = _GAMMA_TABLES.get(key)
    current = 0 if table is None else table.size
    if current >= size:
        return table
    new_size = max(size, 2 * current, 1024)
    norm = _normalizer(family, exponent) if normalize else 1.0
    extra = _raw_gamma(family, exponent, np.arange(current, new_size, dtype=np.float64)) / norm
    table = extra if table is None else np.concatenate((table, extra))
    _GAMMA_TABLES[key] = table
    return table


class SpendingSequence(BaseModel):
    """Sequência de gasto γ_j, j ≥ 1, com γ_j = 0 para j < 1."""

    model_config = ConfigDict(frozen=True)

    family: Literal["power", "log"] = Field(default="power", description="γ_j ∝ j^{-s} ou 1/((j+1)·log(j+1)^g)")
    exponent: float = Field(default=1.6, gt=1, description="Expoente s (power) ou g (log)")
    normalize: bool = Field(default=True, description="Divide por Z para garantir Σγ ≤ 1")

    @property
    def normalizer(self) -> float:
        return _normalizer(self.family, self.exponent) if self.normalize else 1.0

    def values(self, j: ArrayLike) -> np.ndarray:
        """γ_j para índices inteiros (negativos e zero valem 0)."""
        idx = np.maximum(np.asarray(j, dtype=np.int64), 0)
        table = _gamma_table(self.family, self.exponent, self.normalize, int(idx.max(initial=0)) + 1)
        return table[idx]

    def at(self, j: int) -> float:
        return float(self.values(j))

    def partial_sum(self, n: int) -> float:
        """Σ_{j=1}^{n} γ_j."""
        return float(np.sum(self.values(np.arange(1, n + 1))))


class OnlineState(BaseModel):
    """Estado incremental do LORD após k passos."""

    model_config = ConfigDict(frozen=True)

    alpha_level: float = Field(gt=0, lt=1, description="Nível alvo α")
    w0: float = Field(ge=0, description="Riqueza inicial W₀ ∈ [0, α]")
    gamma: SpendingSequence = Field(default_factory=SpendingSequence, description="Sequência de gasto")
    k: int = Field(default=0, ge=0, description="Passos já processados")
    alpha_sum: float = Field(default=0.0, ge=0, description="Σ_{i≤k} α_i")
    r: int = Field(default=0, ge=0, description="Rejeições R(k)")
    rejection_times: tuple[int, ...] = Field(default=(), description="Instantes τ_j das rejeições")

    @model_validator(mode="after")
    def _check_consistency(self) -> OnlineState:
        if self.w0 > self.alpha_level:
            msg = f"W₀ deve estar em [0, α], recebido {self.w0}"
            raise ValueError(msg)
        if self.r > self.k or len(self.rejection_times) != self.r:
            msg = "r deve ser ≤ k e igual ao número de instantes de rejeição"
            raise ValueError(msg)
        times = self.rejection_times
        if any(b <= a for a, b in zip(times, times[1:], strict=False)) or (times and not 1 <= times[0]):
            msg = "instantes de rejeição devem ser estritamente crescentes e ≥ 1"
            raise ValueError(msg)
        if times and times[-1] > self.k:
            msg = "instante de rejeição posterior ao passo atual"
            raise ValueError(msg)
        return self


class OnlineTrajectory(BaseModel):
    """Histórico completo de uma execução do LORD (um registro por passo)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    pvalues: np.ndarray = Field(description="p-valores do fluxo")
    alpha_k: np.ndarray = Field(description="Valores críticos α_k")
    rejected: np.ndarray = Field(description="Decisão em cada passo")
    rejections: np.ndarray = Field(description="R(k) acumulado")
    alpha_sum: np.ndarray = Field(description="Σ_{i≤k} α_i acumulado")
    final_state: OnlineState = Field(description="Estado após o último passo")

    @field_validator("pvalues", "alpha_k", "alpha_sum", mode="before")
    @classmethod
    def _coerce_float(cls, v: object) -> np.ndarray:
        return readonly_array(v)

    @field_validator("rejected", mode="before")
    @classmethod
    def _coerce_bool(cls, v: object) -> np.ndarray:
        return readonly_array(v, np.bool_)

    @field_validator("rejections", mode="before")
    @classmethod
    def _coerce_int(cls, v: object) -> np.ndarray:
        return readonly_array(v, np.int64)

    def __len__(self) -> int:
        return int(self.pvalues.size)
