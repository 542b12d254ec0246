from __future__ import annotations

import os

from pydantic import BaseModel, Field

from app.models.tolerance import ToleranceConfig

# Carrega automaticamente .env e .env.local
try:
    from dotenv import find_dotenv, load_dotenv
except Exception:
    load_dotenv = None
    find_dotenv = None


def _load_env_files() -> None:
    """Carrega arquivos .env do diretório atual (ou pais) caso existam."""
    if not load_dotenv or not find_dotenv:
        return

    env_path = find_dotenv(filename=".env", usecwd=True)
    if env_path:
        load_dotenv(env_path, override=False)

    # .env.local depois, permitindo override do .env
    env_local_path = find_dotenv(filename=".env.local", usecwd=True)
    if env_local_path:
        load_dotenv(env_local_path, override=True)


_load_env_files()


class Settings(BaseModel):
    """Configurações da aplicação, carregadas via variáveis de ambiente ou .env."""

    # Experimentos
    default_delta: float = Field(default_factory=lambda: float(os.getenv("FDP_DELTA", "0.25")), gt=0, lt=1)
    default_replications: int = Field(default_factory=lambda: int(os.getenv("FDP_REPLICATIONS", "1000")), ge=1)
    default_seed: int = Field(default_factory=lambda: int(os.getenv("FDP_SEED", "20240601")), ge=0)
    workers: int = Field(default_factory=lambda: int(os.getenv("FDP_WORKERS", "1")), ge=1)
    interp_max_m: int = Field(default_factory=lambda: int(os.getenv("FDP_INTERP_MAX_M", "100000")), ge=1)

    # Numérica
    rel_tol: float = Field(default_factory=lambda: float(os.getenv("FDP_REL_TOL", "1e-12")))
    max_iter: int = Field(default_factory=lambda: int(os.getenv("FDP_MAX_ITER", "200")))

    # Logging
    log_level: str = os.getenv("FDP_LOG_LEVEL", "INFO")

    def tolerance(self) -> ToleranceConfig:
        """Tolerâncias numéricas derivadas das variáveis de ambiente."""
        return ToleranceConfig(rel_tol=self.rel_tol, max_iter=self.max_iter)


class SettingsManager:
    """Gerenciador de configurações singleton."""

    _instance: Settings | None = None

    @classmethod
    def get_instance(cls) -> Settings:
        """Retorna a instância singleton de Settings."""
        if cls._instance is None:
            cls._instance = Settings()
        return cls._instance

    @classmethod
    def reset(cls) -> None:
        """Descarta a instância atual (útil em testes que alteram o ambiente)."""
        cls._instance = None


def get_settings() -> Settings:
    """Retorna as configurações da aplicação."""
    return SettingsManager.get_instance()
