"""Geradores determinísticos para as replicações."""

from __future__ import annotations

import numpy as np

SeedLike = int | np.random.Generator


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Gerador Philox a partir de uma semente inteira; geradores passam direto."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def replication_rng(seed: int, m: int, replication: int) -> np.random.Generator:
    """
    Fluxo independente para a célula (m, replicação).

    Depende só de (seed, m, replicação), de modo que a ordem de execução e o número
    de processos não alteram os dados gerados.
    """
    sequence = np.random.SeedSequence(seed, spawn_key=(m, replication))
    return np.random.Generator(np.random.Philox(sequence))
