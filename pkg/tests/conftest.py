from __future__ import annotations

import numpy as np
import pytest

from app.core.config import SettingsManager
from app.models.pvalues import PValueBatch


@pytest.fixture(autouse=True)
def _fresh_settings(monkeypatch: pytest.MonkeyPatch):
    for name in ("FDP_DELTA", "FDP_REPLICATIONS", "FDP_SEED", "FDP_WORKERS", "FDP_INTERP_MAX_M"):
        monkeypatch.delenv(name, raising=False)
    SettingsManager.reset()
    yield
    SettingsManager.reset()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def make_batch():
    def _make(values, labels=None) -> PValueBatch:
        return PValueBatch(values=np.asarray(values, dtype=float), labels=labels)

    return _make
