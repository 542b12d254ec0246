from __future__ import annotations

import math
from typing import Annotated, Literal

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.integrate import cumulative_trapezoid, quad
from scipy.special import ndtr, ndtri

from app.models.online import SpendingSequence
from app.models.pvalues import PATH_METHODS, TOPK_METHODS, MethodVariant, readonly_array

# ---------------------------------------------------------------------------
# Curvas de probabilidade instantânea de sinal π(t) (modelo VCT)
# ---------------------------------------------------------------------------


class _PiCurve(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    def density(self, t: ArrayLike) -> np.ndarray:
        raise NotImplementedError

    def average(self, t: ArrayLike) -> np.ndarray:
        """Π(t) = t⁻¹∫₀ᵗ π, com Π(0) = π(0)."""
        ts = np.atleast_1d(np.asarray(t, dtype=np.float64))
        out = np.empty_like(ts)
        for i, x in enumerate(ts):
            if x <= 0.0:
                out[i] = float(self.density(0.0))
                continue
            head, _ = quad(lambda u: float(self.density(u)), 0.0, min(x, 1.0), limit=200)
            tail = float(self.density(1.0)) * max(x - 1.0, 0.0)
            out[i] = (head + tail) / x
        return out

    def tail(self) -> float:
        """Limite de π(t) quando t → ∞."""
        return float(self.density(1.0))


class LfExponentialCurve(_PiCurve):
    """π(t) = π₁·b·e^{−bt}/(1 − e^{−b}) em [0, 1), constante depois de 1; Π(1) = π₁."""

    kind: Literal["lf-exponential"] = "lf-exponential"
    pi1: float = Field(default=0.4, gt=0, le=1, description="Fração esperada de sinal Π(1)")
    b: float = Field(default=2.0, gt=0, description="Qualidade da ordenação a priori")

    @model_validator(mode="after")
    def _check_probability(self) -> LfExponentialCurve:
        if self.pi1 * self.b / -math.expm1(-self.b) > 1.0:
            msg = "π(0) = π₁·b/(1 − e^{−b}) deve ser ≤ 1"
            raise ValueError(msg)
        return self

    def density(self, t: ArrayLike) -> np.ndarray:
        tt = np.minimum(np.asarray(t, dtype=np.float64), 1.0)
        return self.pi1 * self.b * np.exp(-self.b * tt) / -math.expm1(-self.b)

    def average(self, t: ArrayLike) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(t, dtype=np.float64))
        norm = -math.expm1(-self.b)
        inner = np.minimum(ts, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            head = self.pi1 * -np.expm1(-self.b * inner) / norm
            tail = float(self.density(1.0)) * np.maximum(ts - 1.0, 0.0)
            out = (head + tail) / ts
        return np.where(ts > 0.0, out, float(self.density(0.0)))


class KnockoffLinearCurve(_PiCurve):
    """
    π(t) = cap ∧ (1/2 + 0 ∨ (z − t)/(2(z − 1))) para todo t ≥ 0, sem truncar t em 1.

    A fórmula crua vale ≥ 1 em [0, 1]; o teto ``cap`` < 1 mantém nulas no início do
    caminho. A curva decai linearmente até 1/2 em t = z e fica constante depois.
    """

    kind: Literal["knockoff-linear"] = "knockoff-linear"
    z: float = Field(default=30.0, gt=1, description="Ritmo de deterioração do sinal")
    cap: float = Field(default=0.9, gt=0.5, lt=1, description="Probabilidade máxima de sinal")

    def _linear(self, t: np.ndarray) -> np.ndarray:
        return 0.5 + np.maximum(0.0, (self.z - t) / (2.0 * (self.z - 1.0)))

    def _primitive(self, u: np.ndarray) -> np.ndarray:
        # ∫₀ᵘ (1/2 + (z − s)/(2(z − 1))) ds, para 0 ≤ u ≤ z
        return 0.5 * u + (self.z * u - 0.5 * u**2) / (2.0 * (self.z - 1.0))

    @property
    def kink(self) -> float:
        """Ponto onde a reta encontra o teto (0 se nunca encontra)."""
        return min(max(self.z - 2.0 * (self.z - 1.0) * (self.cap - 0.5), 0.0), self.z)

    def density(self, t: ArrayLike) -> np.ndarray:
        tt = np.maximum(np.asarray(t, dtype=np.float64), 0.0)
        return np.minimum(self.cap, self._linear(tt))

    def average(self, t: ArrayLike) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(t, dtype=np.float64))
        u = np.maximum(ts, 0.0)
        kink = self.kink
        capped = self.cap * np.minimum(u, kink)
        lo = np.minimum(u, kink)
        hi = np.minimum(u, self.z)
        area = capped + self._primitive(hi) - self._primitive(lo) + 0.5 * np.maximum(u - self.z, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = area / ts
        return np.where(ts > 0.0, out, float(self.density(0.0)))

    def tail(self) -> float:
        return 0.5


class TabulatedCurve(_PiCurve):
    """Curva tabelada (interpolação linear, constante fora da grade)."""

    kind: Literal["tabulated"] = "tabulated"
    grid: np.ndarray = Field(description="Pontos t, começando em 0, crescentes")
    values: np.ndarray = Field(description="π(t) nos pontos da grade")

    @field_validator("grid", "values", mode="before")
    @classmethod
    def _coerce(cls, v: object) -> np.ndarray:
        return readonly_array(v)

    @model_validator(mode="after")
    def _check_table(self) -> TabulatedCurve:
        if self.grid.size < 2 or self.grid.size != self.values.size:
            msg = "grid e values precisam do mesmo tamanho (≥ 2)"
            raise ValueError(msg)
        if self.grid[0] != 0.0 or np.any(np.diff(self.grid) <= 0):
            msg = "grid deve começar em 0 e ser estritamente crescente"
            raise ValueError(msg)
        if np.any((self.values < 0.0) | (self.values > 1.0)):
            msg = "valores de π devem estar em [0, 1]"
            raise ValueError(msg)
        return self

    def density(self, t: ArrayLike) -> np.ndarray:
        return np.interp(np.asarray(t, dtype=np.float64), self.grid, self.values)

    def average(self, t: ArrayLike) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(t, dtype=np.float64))
        integral = cumulative_trapezoid(self.values, self.grid, initial=0.0)
        last = self.grid[-1]
        inner = np.minimum(ts, last)
        idx = np.clip(np.searchsorted(self.grid, inner, side="right") - 1, 0, self.grid.size - 2)
        slope = np.diff(self.values)[idx] / np.diff(self.grid)[idx]
        within = inner - self.grid[idx]
        # integral exata da interpolação linear dentro da célula
        area = integral[idx] + self.values[idx] * within + 0.5 * slope * within**2
        area = area + self.values[-1] * np.maximum(ts - last, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = area / ts
        return np.where(ts > 0.0, out, self.values[0])

    def tail(self) -> float:
        return float(self.values[-1])


PiCurve = Annotated[LfExponentialCurve | KnockoffLinearCurve | TabulatedCurve, Field(discriminator="kind")]

# ---------------------------------------------------------------------------
# Leis dos p-valores (F₀ / F₁)
# ---------------------------------------------------------------------------


class UniformLaw(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["uniform"] = "uniform"

    def cdf(self, x: ArrayLike) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.random(size)


class GaussianLaw(BaseModel):
    """p = Φ̄(X) com X ~ N(μ, 1): F(x) = Φ̄(Φ̄⁻¹(x) − μ)."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["one-sided-gaussian"] = "one-sided-gaussian"
    mu: float = Field(default=1.5, ge=0, description="Média da alternativa")

    def cdf(self, x: ArrayLike) -> np.ndarray:
        # Φ̄(Φ̄⁻¹(x) − μ) = Φ(Φ⁻¹(x) + μ)
        return ndtr(ndtri(np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)) + self.mu)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return ndtr(-(rng.standard_normal(size) + self.mu))


class BinaryKnockoffLaw(BaseModel):
    """p = 1/2 com probabilidade q e p = 1 caso contrário."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["binary-knockoff"] = "binary-knockoff"
    q: float = Field(default=0.9, ge=0, le=1, description="P(p = 1/2)")

    def cdf(self, x: ArrayLike) -> np.ndarray:
        xs = np.asarray(x, dtype=np.float64)
        return np.where(xs >= 1.0, 1.0, np.where(xs >= 0.5, self.q, 0.0))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.where(rng.random(size) < self.q, 0.5, 1.0)


PValueLaw = Annotated[UniformLaw | GaussianLaw | BinaryKnockoffLaw, Field(discriminator="kind")]

# ---------------------------------------------------------------------------
# Configurações dos modelos
# ---------------------------------------------------------------------------


class GaussianLocationConfig(BaseModel):
    """Modelo gaussiano unilateral esparso: m₁ alternativas com média μ_m."""

    model_config = ConfigDict(frozen=True)

    m: int = Field(ge=1, description="Número de hipóteses")
    b: float = Field(default=1.5, gt=0, description="Termo constante da média")
    c: float = Field(default=0.5, gt=0, lt=1, description="Constante da fração de sinal")
    beta: float = Field(default=0.0, ge=0, lt=1, description="Esparsidade")
    mu: float | None = Field(default=None, gt=0, description="Sobrescreve μ_m (ex.: μ = 10)")

    @model_validator(mode="after")
    def _check_alternatives(self) -> GaussianLocationConfig:
        if self.m1 < 1:
            msg = f"c·m^(1−β) < 1: nenhuma alternativa para m={self.m}"
            raise ValueError(msg)
        return self

    @property
    def mu_m(self) -> float:
        if self.mu is not None:
            return self.mu
        return math.sqrt(2.0 * self.beta * math.log(self.m)) + self.b

    @property
    def m1(self) -> int:
        return math.floor(self.c * self.m ** (1.0 - self.beta))

    @property
    def m0(self) -> int:
        return self.m - self.m1

    def with_m(self, m: int) -> GaussianLocationConfig:
        return GaussianLocationConfig.model_validate({**self.model_dump(), "m": m})


class VctConfig(BaseModel):
    """Modelo VCT esparso: P(H_k = 1) = π(m^β·k/m)."""

    model_config = ConfigDict(frozen=True)

    pi_curve: PiCurve = Field(default_factory=LfExponentialCurve, description="Curva π(·)")
    beta: float = Field(default=0.0, ge=0, lt=1, description="Esparsidade")
    null_law: PValueLaw = Field(default_factory=UniformLaw, description="Lei F₀ sob a nula")
    alt_law: PValueLaw = Field(default_factory=GaussianLaw, description="Lei F₁ sob a alternativa")

    @model_validator(mode="after")
    def _check_curve(self) -> VctConfig:
        if not float(self.pi_curve.density(0.0)) > 0.0:
            msg = "π(0) deve ser > 0"
            raise ValueError(msg)
        return self

    @classmethod
    def lf_setting(cls, beta: float = 0.0) -> VctConfig:
        return cls(pi_curve=LfExponentialCurve(), beta=beta, null_law=UniformLaw(), alt_law=GaussianLaw(mu=1.5))

    @classmethod
    def knockoff_setting(cls, beta: float = 0.0) -> VctConfig:
        return cls(
            pi_curve=KnockoffLinearCurve(),
            beta=beta,
            null_law=BinaryKnockoffLaw(q=0.5),
            alt_law=BinaryKnockoffLaw(q=0.9),
        )


class OnlineMixtureConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    pi1: float = Field(default=0.3, ge=0, lt=1, description="Probabilidade de alternativa")
    mu: float = Field(default=3.0, ge=0, description="Média da alternativa")
    length: int = Field(default=5000, ge=1, description="Tamanho do fluxo")


class ExperimentConfig(BaseModel):
    """Grade de um experimento replicado (arquivo JSON/YAML ou flags da CLI)."""

    model_config = ConfigDict(frozen=True)

    setting: Literal["topk", "preordered", "online"] = Field(description="Regime de testes")
    gaussian: GaussianLocationConfig | None = Field(default=None, description="Modelo top-k")
    vct: VctConfig | None = Field(default=None, description="Modelo pré-ordenado")
    online: OnlineMixtureConfig | None = Field(default=None, description="Modelo online")
    m_grid: list[int] = Field(min_length=1, description="Valores de m (ou comprimentos do fluxo)")
    alpha_grid: list[float] = Field(min_length=1, description="Níveis α")
    delta: float = Field(default=0.25, gt=0, lt=1, description="Nível dos envelopes")
    replications: int = Field(default=1000, ge=1, description="Replicações por célula")
    methods: list[str] = Field(default_factory=list, description="Variantes (ex.: Wellner-adapt-interp)")
    seed: int = Field(default=20240601, ge=0, description="Semente mestra")
    s: float | None = Field(default=None, gt=0, le=1, description="Limiar s fixo (pré-ordenado)")
    s_alpha_multiple: float | None = Field(default=None, gt=0, description="s = múltiplo·α (ex.: 0.1)")
    lam: float = Field(default=0.5, ge=0, lt=1, description="Limiar λ (pré-ordenado)")
    w0_fraction: float = Field(default=0.5, ge=0, le=1, description="W₀ = fração·α (LORD)")
    gamma: SpendingSequence = Field(default_factory=SpendingSequence, description="Sequência de gasto")
    interp_max_m: int = Field(default=100_000, ge=1, description="Maior m com variantes interpoladas")
    compute_coverage: bool = Field(default=True, description="Avalia o evento uniforme em k")
    workers: int = Field(default=1, ge=1, description="Processos para as replicações")

    @field_validator("m_grid")
    @classmethod
    def _check_m(cls, v: list[int]) -> list[int]:
        if any(m < 1 for m in v):
            msg = "valores de m devem ser ≥ 1"
            raise ValueError(msg)
        return v

    @field_validator("alpha_grid")
    @classmethod
    def _check_alpha(cls, v: list[float]) -> list[float]:
        if any(not 0.0 < a < 1.0 for a in v):
            msg = "níveis α devem estar em (0, 1)"
            raise ValueError(msg)
        return v

    @model_validator(mode="before")
    @classmethod
    def _fill_defaults(cls, data: object) -> object:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        setting = data.get("setting")
        if setting == "topk" and data.get("gaussian") is None:
            data["gaussian"] = {"m": max(data.get("m_grid") or [2])}
        if setting == "preordered" and data.get("vct") is None:
            data["vct"] = VctConfig.knockoff_setting()
        if setting == "online" and data.get("online") is None:
            data["online"] = OnlineMixtureConfig()
        if not data.get("methods"):
            names = TOPK_METHODS if setting == "topk" else PATH_METHODS
            data["methods"] = [m.value for m in names]
        return data

    @model_validator(mode="after")
    def _check_methods(self) -> ExperimentConfig:
        allowed = set(TOPK_METHODS) if self.setting == "topk" else set(PATH_METHODS)
        for tag in self.methods:
            variant = MethodVariant.parse(tag)
            if variant.method not in allowed:
                msg = f"método {tag!r} não se aplica ao regime {self.setting}"
                raise ValueError(msg)
            if variant.adaptive and self.setting != "topk":
                msg = f"variante adaptativa {tag!r} só existe no regime top-k"
                raise ValueError(msg)
        if self.s is not None and self.s_alpha_multiple is not None:
            msg = "informe s ou s_alpha_multiple, não ambos"
            raise ValueError(msg)
        return self

    @property
    def variants(self) -> list[MethodVariant]:
        return [MethodVariant.parse(tag) for tag in self.methods]

    def threshold_s(self, alpha: float) -> float:
        """Limiar s da célula: fixo, múltiplo de α ou, por padrão, s = λ (BC)."""
        if self.s_alpha_multiple is not None:
            return min(1.0, self.s_alpha_multiple * alpha)
        if self.s is not None:
            return self.s
        return self.lam


class SummaryRow(BaseModel):
    """Estatísticas agregadas de uma célula (m, α, método)."""

    model_config = ConfigDict(frozen=True)

    m: int = Field(ge=1, description="Tamanho do problema")
    alpha: float = Field(gt=0, lt=1, description="Nível do procedimento de referência")
    method: str = Field(description="Variante do envelope")
    q25: float = Field(description="Quartil inferior da cota no procedimento de referência")
    median: float = Field(description="Mediana da cota")
    q75: float = Field(description="Quartil superior da cota")
    coverage_rate: float | None = Field(default=None, ge=0, le=1, description="Frequência do evento uniforme")
    coverage_se: float | None = Field(default=None, ge=0, description="Erro padrão binomial da cobertura")
    mean_rejections: float = Field(ge=0, description="Média do número de rejeições")
    pi0_hat: float | None = Field(default=None, description="Mediana de m̂₀/m (variantes adaptativas)")
    wall_time: float | None = Field(default=None, ge=0, description="Tempo de parede da célula (s)")

    @model_validator(mode="after")
    def _check_quartiles(self) -> SummaryRow:
        if not self.q25 <= self.median <= self.q75:
            msg = "quartis fora de ordem"
            raise ValueError(msg)
        return self


class ConsistencySeries(BaseModel):
    model_config = ConfigDict(frozen=True)

    method: str = Field(description="Variante do envelope")
    alpha: float = Field(description="Nível α da série")
    m: list[int] = Field(description="Valores de m")
    gap: list[float] = Field(description="Mediana da cota − α")
    slope: float = Field(description="Inclinação log-log de |gap| contra m")
