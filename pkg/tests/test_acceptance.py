"""Verificações em escala cheia (``pytest -m slow``)."""

from __future__ import annotations

import math

import numpy as np
import pytest

from app.core.harness import consistency_curve, run_experiment
from app.core.numerics import KAPPA, kr_factor
from app.core.online import envelope_at_steps, run_lord
from app.core.preordered import lf_select, power_diagnostics_preordered
from app.core.simulation import freedman_violation_rate, gen_gaussian_topk, gen_online_mixture, gen_vct
from app.core.topk import bh_select
from app.models.experiment import ExperimentConfig, GaussianLocationConfig, OnlineMixtureConfig, VctConfig
from app.models.pvalues import TOPK_METHODS, Method

pytestmark = pytest.mark.slow

DELTA = 0.25
GRID = [1000, 10_000, 100_000]


def _assert_coverage(rows, reps):
    floor = 1 - DELTA - 3 * math.sqrt(DELTA * (1 - DELTA) / reps)
    for row in rows:
        assert row.coverage_rate >= floor, (row.m, row.method, row.coverage_rate)


def _gaps(cfg: ExperimentConfig) -> dict[str, list[float]]:
    series = consistency_curve(run_experiment(cfg, progress=False))
    return {s.method: s.gap for s in series}


# ---------------------------------------------------------------------------
# Cobertura uniforme em k
# ---------------------------------------------------------------------------


def test_topk_coverage():
    reps = 1000
    methods = [f"{m.value}{suffix}" for m in TOPK_METHODS for suffix in ("", "-adapt", "-interp", "-adapt-interp")]
    cfg = ExperimentConfig(
        setting="topk",
        gaussian=GaussianLocationConfig(m=200, b=1.5, c=0.5, beta=0.0),
        m_grid=[200],
        alpha_grid=[0.2],
        replications=reps,
        methods=methods,
        workers=4,
    )
    assert cfg.gaussian.mu_m == 1.5
    _assert_coverage(run_experiment(cfg, progress=False), reps)


@pytest.mark.parametrize(("vct", "m"), [(VctConfig.knockoff_setting(), 500), (VctConfig.lf_setting(), 1000)])
def test_preordered_coverage(vct, m):
    reps = 1000
    cfg = ExperimentConfig(
        setting="preordered",
        vct=vct,
        m_grid=[m],
        alpha_grid=[0.2],
        replications=reps,
        methods=["Freedman", "KR", "KRU", "KRU-interp"],
        workers=4,
    )
    _assert_coverage(run_experiment(cfg, progress=False), reps)


def test_online_coverage():
    reps = 500
    cfg = ExperimentConfig(
        setting="online",
        m_grid=[5000],
        alpha_grid=[0.1],
        replications=reps,
        methods=["Freedman", "KR", "KRU", "KRU-interp"],
        workers=4,
    )
    _assert_coverage(run_experiment(cfg, progress=False), reps)


# ---------------------------------------------------------------------------
# Validade das ferramentas de martingal
# ---------------------------------------------------------------------------


def test_freedman_violation_rate():
    delta = 0.05
    rate = freedman_violation_rate(2000, 10_000, delta, 2024)
    target = (1 + KAPPA) * delta
    assert rate <= target + 3 * math.sqrt(target * (1 - target) / 2000)


# ---------------------------------------------------------------------------
# Tendências de consistência (medianas sobre 200 replicações)
# ---------------------------------------------------------------------------


def test_dense_topk_consistency_trend():
    alpha = 0.2
    cfg = ExperimentConfig(
        setting="topk",
        m_grid=GRID,
        alpha_grid=[alpha],
        replications=200,
        methods=["DKW", "KR", "Wellner"],
        compute_coverage=False,
        workers=4,
    )
    gaps = _gaps(cfg)
    for method in ("DKW", "Wellner"):
        assert gaps[method][0] > gaps[method][1] > gaps[method][2], (method, gaps[method])
    assert gaps["Wellner"][-1] <= 0.05
    # KR não converge para α
    assert min(gaps["KR"]) >= (kr_factor(DELTA) - 1) * alpha


def test_sparse_topk_consistency_trend():
    # μ = 10 no cenário esparso β = 0.55
    cfg = ExperimentConfig(
        setting="topk",
        gaussian=GaussianLocationConfig(m=100_000, beta=0.55, mu=10.0),
        m_grid=GRID,
        alpha_grid=[0.2],
        replications=200,
        methods=["DKW", "Wellner"],
        compute_coverage=False,
        workers=4,
    )
    gaps = _gaps(cfg)
    assert gaps["DKW"][-1] >= 0.1
    assert gaps["Wellner"][-1] <= 0.7 * gaps["Wellner"][0]


def test_knockoff_kru_consistency_trend():
    alpha = 0.2
    cfg = ExperimentConfig(
        setting="preordered",
        vct=VctConfig.knockoff_setting(),
        m_grid=GRID,
        alpha_grid=[alpha],
        replications=200,
        methods=["KRU"],
        compute_coverage=False,
        workers=4,
    )
    gap = _gaps(cfg)["KRU"]
    # BC rejeita o caminho inteiro (FDP^∞ ≈ 0.163 < α), então a cota desce abaixo de α
    assert gap[0] > gap[1] > gap[2]
    assert gap[2] < 0.05


def test_online_consistency_along_lord_runs():
    alpha = 0.1
    steps = np.array(GRID)
    cfg = OnlineMixtureConfig(length=int(steps[-1]))
    bounds = {Method.FREEDMAN: [], Method.KRU: []}
    for seed in range(200):
        trajectory = run_lord(gen_online_mixture(cfg, seed).values, alpha)
        for method, collected in bounds.items():
            collected.append(envelope_at_steps(method, trajectory, DELTA, steps))
    for method, collected in bounds.items():
        medians = np.median(np.array(collected), axis=0)
        assert np.all(np.diff(medians) < 0), (method, medians)
        assert medians[-1] <= 1.5 * alpha


# ---------------------------------------------------------------------------
# Escala de potência
# ---------------------------------------------------------------------------


def test_bh_rejections_scale_with_signal():
    beta = 0.25
    base = GaussianLocationConfig(m=1000, beta=beta)
    for m in GRID:
        cfg = base.with_m(m)
        ratios = np.array([bh_select(gen_gaussian_topk(cfg, seed), 0.2) / m ** (1 - beta) for seed in range(100)])
        assert np.mean((ratios >= 0.2) & (ratios <= 5)) >= 0.95, m


def test_lf_rejections_track_power_prediction():
    alpha, beta, lam = 0.2, 0.25, 0.5
    s = 0.1 * alpha
    vct = VctConfig.lf_setting(beta)
    diagnostics = power_diagnostics_preordered(vct, s, lam, alpha)
    f1_s = float(vct.alt_law.cdf(s))
    for m in GRID:
        share = float(vct.pi_curve.average(min(diagnostics.t_star, m**beta))[0])
        expected = diagnostics.predicted_path_length(m) * (share * f1_s + (1 - share) * s)
        r_hats = np.array([lf_select(gen_vct(vct, m, seed, s=s, lam=lam), alpha).r_hat for seed in range(100)])
        ratios = r_hats / expected
        assert np.mean((ratios >= 0.2) & (ratios <= 5)) >= 0.95, m
        assert np.mean(r_hats >= diagnostics.rejection_floor(m)) >= 0.95, m


def test_lord_rejections_grow_faster_than_sqrt():
    n = 10_000
    cfg = OnlineMixtureConfig(length=n)
    counts = np.array([run_lord(gen_online_mixture(cfg, seed).values, 0.1).final_state.r for seed in range(100)])
    assert np.mean(counts >= math.sqrt(n)) >= 0.95
