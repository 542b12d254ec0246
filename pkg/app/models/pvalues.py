from __future__ import annotations

import sys

if sys.version_info >= (3, 11):
    from enum import StrEnum
else:  # pragma: no cover - mesmo comportamento do enum.StrEnum do Python 3.11+
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.errors import MissingLabelsError


def readonly_array(value: object, dtype: type | np.dtype = np.float64) -> np.ndarray:
    """Copia para um vetor 1-D somente leitura (os modelos são imutáveis)."""
    arr = np.array(value, dtype=dtype, copy=True)
    if arr.ndim != 1:
        msg = f"esperado vetor 1-D, recebido shape {arr.shape}"
        raise ValueError(msg)
    arr.setflags(write=False)
    return arr


class Method(StrEnum):
    SIMES = "Simes"
    DKW = "DKW"
    KR = "KR"
    WELLNER = "Wellner"
    HYBRID = "Hybrid"
    FREEDMAN = "Freedman"
    KRU = "KRU"


TOPK_METHODS = (Method.SIMES, Method.DKW, Method.KR, Method.WELLNER, Method.HYBRID)
PATH_METHODS = (Method.FREEDMAN, Method.KR, Method.KRU)


class MethodVariant(BaseModel):
    """Método de envelope com as opções adaptativa e interpolada (ex.: ``Wellner-adapt-interp``)."""

    model_config = ConfigDict(frozen=True)

    method: Method = Field(description="Família do envelope")
    adaptive: bool = Field(default=False, description="Usa m̂₀ no lugar de m (apenas top-k)")
    interpolated: bool = Field(default=False, description="Aplica a interpolação sobre o caminho")

    @property
    def tag(self) -> str:
        parts = [self.method.value]
        if self.adaptive:
            parts.append("adapt")
        if self.interpolated:
            parts.append("interp")
        return "-".join(parts)

    @classmethod
    def parse(cls, tag: str) -> MethodVariant:
        name, *flags = tag.strip().split("-")
        unknown = set(flags) - {"adapt", "interp"}
        if unknown or len(flags) != len(set(flags)):
            msg = f"variante de método inválida: {tag!r}"
            raise ValueError(msg)
        try:
            method = Method(name)
        except ValueError as e:
            msg = f"método desconhecido: {name!r}"
            raise ValueError(msg) from e
        return cls(method=method, adaptive="adapt" in flags, interpolated="interp" in flags)


class SortedPValues(BaseModel):
    """Estatísticas de ordem p₍₁₎ ≤ … ≤ p₍ₘ₎ e a permutação (base 0) que as produz."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    ordered: np.ndarray = Field(description="p-valores em ordem não decrescente")
    perm: np.ndarray = Field(description="Índices originais, ordered = values[perm]")

    @field_validator("ordered", mode="before")
    @classmethod
    def _coerce_ordered(cls, v: object) -> np.ndarray:
        arr = readonly_array(v)
        if arr.size and np.any(np.diff(arr) < 0):
            msg = "ordered deve ser não decrescente"
            raise ValueError(msg)
        return arr

    @field_validator("perm", mode="before")
    @classmethod
    def _coerce_perm(cls, v: object) -> np.ndarray:
        return readonly_array(v, np.int64)

    @model_validator(mode="after")
    def _check_bijection(self) -> SortedPValues:
        m = self.ordered.size
        if self.perm.size != m or not np.array_equal(np.sort(self.perm), np.arange(m)):
            msg = "perm deve ser uma bijeção em {0..m-1}"
            raise ValueError(msg)
        return self

    @property
    def m(self) -> int:
        return int(self.ordered.size)

    def restore(self) -> np.ndarray:
        """Reconstrói o vetor na ordem original."""
        out = np.empty_like(self.ordered)
        out[self.perm] = self.ordered
        return out


class PValueBatch(BaseModel):
    """Vetor finito de p-valores com rótulos opcionais (True = alternativa)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray = Field(description="p-valores em [0, 1]")
    labels: np.ndarray | None = Field(default=None, description="True para alternativa, False para nula")

    @field_validator("values", mode="before")
    @classmethod
    def _coerce_values(cls, v: object) -> np.ndarray:
        arr = readonly_array(v)
        if arr.size == 0:
            msg = "o lote precisa de ao menos um p-valor"
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
    def _check_lengths(self) -> PValueBatch:
        if self.labels is not None and self.labels.size != self.values.size:
            msg = f"labels tem tamanho {self.labels.size}, esperado {self.values.size}"
            raise ValueError(msg)
        return self

    @property
    def m(self) -> int:
        return int(self.values.size)

    def sort(self) -> SortedPValues:
        perm = np.argsort(self.values, kind="stable")
        return SortedPValues(ordered=self.values[perm], perm=perm)

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            msg = "operação de oráculo exige rótulos de verdade"
            raise MissingLabelsError(msg)
        return self.labels


class Envelope(BaseModel):
    """Sequência de cotas superiores da FDP ao longo de um caminho, k = 1…K."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    bounds: np.ndarray = Field(description="Cota da FDP para cada k, em [0, 1]")
    method: Method = Field(description="Família do envelope")
    delta: float = Field(gt=0, lt=1, description="Nível do envelope")
    adaptive: bool = Field(default=False, description="m substituído por m̂₀")
    interpolated: bool = Field(default=False, description="Resultado de interpolate")
    m_eff: float | None = Field(default=None, gt=0, description="m ou m̂₀ usado nas fórmulas (top-k)")

    @field_validator("bounds", mode="before")
    @classmethod
    def _coerce_bounds(cls, v: object) -> np.ndarray:
        arr = readonly_array(v)
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            msg = "cotas do envelope devem estar em [0, 1]"
            raise ValueError(msg)
        return arr

    @property
    def variant(self) -> MethodVariant:
        return MethodVariant(method=self.method, adaptive=self.adaptive, interpolated=self.interpolated)

    def __len__(self) -> int:
        return int(self.bounds.size)
