from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.errors import MissingLabelsError
from app.models.pvalues import readonly_array


class PreorderedData(BaseModel):
    """p-valores já na ordem do caminho π(1)…π(m), com os limiares (s, λ)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    pvalues: np.ndarray = Field(description="p-valores em [0, 1] na ordem do caminho")
    s: float = Field(gt=0, le=1, description="Limiar de rejeição")
    lam: float = Field(ge=0, le=1, description="Limiar λ de estimação das nulas")
    labels: np.ndarray | None = Field(default=None, description="True para alternativa (uso de oráculo)")

    @field_validator("pvalues", mode="before")
    @classmethod
    def _coerce_pvalues(cls, v: object) -> np.ndarray:
        arr = readonly_array(v)
        if arr.size == 0:
            msg = "o caminho precisa de ao menos um p-valor"
            raise ValueError(msg)
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            msg = "p-valores devem estar em [0, 1]"
            raise ValueError(msg)
        return arr

    @field_validator("labels", mode="before")
    @classmethod
    def _coerce_labels(cls, v: object) -> np.ndarray | None:
        if v is None:
            return None
        return readonly_array(v, np.bool_)

    @model_validator(mode="after")
    def _check_lengths(self) -> PreorderedData:
        if self.labels is not None and self.labels.size != self.pvalues.size:
            msg = f"labels tem tamanho {self.labels.size}, esperado {self.pvalues.size}"
            raise ValueError(msg)
        return self

    @property
    def m(self) -> int:
        return int(self.pvalues.size)

    @property
    def scale(self) -> float:
        """B = s/(1 − λ), infinito quando λ = 1."""
        if self.lam >= 1.0:
            return math.inf
        return self.s / (1.0 - self.lam)

    def counts(self) -> tuple[np.ndarray, np.ndarray]:
        """(A_k, N_k) para k = 1…m: rejeições p ≤ s e candidatas a nula p > λ."""
        accepted = np.cumsum(self.pvalues <= self.s, dtype=np.int64)
        above = np.cumsum(self.pvalues > self.lam, dtype=np.int64)
        return accepted, above

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            msg = "operação de oráculo exige rótulos de verdade"
            raise MissingLabelsError(msg)
        return self.labels


class LfSelection(BaseModel):
    model_config = ConfigDict(frozen=True)

    k_hat: int = Field(ge=0, description="Índice do caminho selecionado")
    r_hat: int = Field(ge=0, description="Número de rejeições A_{k̂}")


class PowerDiagnostics(BaseModel):
    """Quantidades assintóticas do LF no modelo VCT esparso."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    alpha: float = Field(gt=0, lt=1, description="Nível do LF")
    alpha_bar: float = Field(description="Nível crítico ᾱ abaixo do qual não há poder")
    t_star: float = Field(description="t*_α; infinito quando o conjunto viável é ilimitado")
    beta: float = Field(ge=0, lt=1, description="Esparsidade do modelo")
    s: float = Field(gt=0, le=1, description="Limiar de rejeição")
    grid: np.ndarray = Field(description="Pontos t da curva")
    fdp_infinity: np.ndarray = Field(description="FDP^∞(t) nos pontos da grade")

    @field_validator("grid", "fdp_infinity", mode="before")
    @classmethod
    def _coerce_curve(cls, v: object) -> np.ndarray:
        return readonly_array(v)

    def predicted_path_length(self, m: int) -> float:
        """k̂_α previsto: m^{1−β}·(t* ∧ m^β)."""
        return m ** (1.0 - self.beta) * min(self.t_star, m**self.beta)

    def rejection_floor(self, m: int) -> float:
        """r*_m = ⌊m^{1−β}(t* ∧ m^β)⌋·s/2, piso de alta probabilidade para r̂_α."""
        return math.floor(self.predicted_path_length(m)) * self.s / 2.0
