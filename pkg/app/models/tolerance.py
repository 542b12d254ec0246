from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class ToleranceConfig(BaseModel):
    """Tolerâncias de inversão numérica (h⁻¹ e raízes)."""

    model_config = ConfigDict(frozen=True)

    rel_tol: float = Field(default=1e-12, gt=0, le=1e-8, description="Tolerância relativa em |h(λ) − y|")
    max_iter: int = Field(default=200, ge=1, description="Limite de iterações")


DEFAULT_TOLERANCE = ToleranceConfig()
