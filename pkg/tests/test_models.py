from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.integrate import quad
from scipy.special import zeta

from app.models.experiment import (
    ExperimentConfig,
    GaussianLocationConfig,
    KnockoffLinearCurve,
    LfExponentialCurve,
    TabulatedCurve,
    VctConfig,
)
from app.models.online import OnlineState, SpendingSequence
from app.models.preordered import PreorderedData
from app.models.pvalues import Method, MethodVariant, PValueBatch


@pytest.mark.parametrize(
    ("tag", "method", "adaptive", "interpolated"),
    [
        ("Simes", Method.SIMES, False, False),
        ("Wellner-adapt", Method.WELLNER, True, False),
        ("KR-interp", Method.KR, False, True),
        ("Hybrid-adapt-interp", Method.HYBRID, True, True),
    ],
)
def test_method_variant_parse(tag, method, adaptive, interpolated):
    variant = MethodVariant.parse(tag)
    assert (variant.method, variant.adaptive, variant.interpolated) == (method, adaptive, interpolated)
    assert variant.tag == tag


@pytest.mark.parametrize("tag", ["Bonferroni", "KR-fast", "KR-interp-interp"])
def test_method_variant_rejects_unknown(tag):
    with pytest.raises(ValueError):
        MethodVariant.parse(tag)


def test_pvalue_batch_validation():
    with pytest.raises(ValidationError):
        PValueBatch(values=[])
    with pytest.raises(ValidationError):
        PValueBatch(values=[0.5, 1.5])
    with pytest.raises(ValidationError):
        PValueBatch(values=[0.5], labels=[True, False])


def test_sorted_pvalues_restore():
    batch = PValueBatch(values=[0.3, 0.1, 0.2, 0.1])
    srt = batch.sort()
    assert srt.ordered.tolist() == [0.1, 0.1, 0.2, 0.3]
    assert srt.perm.tolist() == [1, 3, 2, 0]
    assert np.array_equal(srt.restore(), batch.values)


def test_preordered_scale():
    assert PreorderedData(pvalues=[0.1], s=0.2, lam=0.5).scale == pytest.approx(0.4)
    assert PreorderedData(pvalues=[0.1], s=0.2, lam=1.0).scale == float("inf")


def test_spending_sequence_power():
    gamma = SpendingSequence()
    assert gamma.at(1) == pytest.approx(1 / zeta(1.6))
    assert gamma.at(0) == 0.0
    assert gamma.values([-3]).tolist() == [0.0]
    assert gamma.partial_sum(100_000) <= 1.0
    assert np.all(np.diff(gamma.values(np.arange(1, 100))) < 0)


def test_spending_sequence_raw_and_log():
    assert SpendingSequence(normalize=False).at(2) == pytest.approx(2**-1.6)
    log_family = SpendingSequence(family="log", exponent=2.0)
    assert log_family.partial_sum(10_000) <= 1.0
    with pytest.raises(ValidationError):
        SpendingSequence(exponent=1.0)


def test_spending_table_values_are_stable():
    gamma = SpendingSequence(exponent=1.7)
    early = gamma.at(5)
    gamma.values(np.arange(50_000))
    assert gamma.at(5) == early


def test_online_state_consistency():
    with pytest.raises(ValidationError):
        OnlineState(alpha_level=0.1, w0=0.2)
    with pytest.raises(ValidationError):
        OnlineState(alpha_level=0.1, w0=0.05, k=3, r=1, rejection_times=())
    with pytest.raises(ValidationError):
        OnlineState(alpha_level=0.1, w0=0.05, k=3, r=2, rejection_times=(2, 2))
    with pytest.raises(ValidationError):
        OnlineState(alpha_level=0.1, w0=0.05, k=3, r=1, rejection_times=(4,))


def test_curves_average():
    lf = LfExponentialCurve()
    assert float(lf.average(0.0)[0]) == pytest.approx(float(lf.density(0.0)))
    assert float(lf.average(1.0)[0]) == pytest.approx(0.4)
    assert float(lf.average(2.0)[0]) == pytest.approx((0.4 + float(lf.density(1.0))) / 2)
    table = TabulatedCurve(grid=[0.0, 1.0], values=[1.0, 0.0])
    assert float(table.average(1.0)[0]) == pytest.approx(0.5)
    assert float(table.average(0.5)[0]) == pytest.approx(0.75)
    knockoff = KnockoffLinearCurve()
    assert knockoff.kink == pytest.approx(6.8)
    assert float(knockoff.density(0.0)) == 0.9
    assert float(knockoff.density(2.0)) == 0.9
    assert float(knockoff.density(50.0)) == 0.5
    assert knockoff.tail() == 0.5
    for t in (0.5, 10.0, 40.0):
        area, _ = quad(lambda u: float(knockoff.density(u)), 0.0, t, points=[knockoff.kink, knockoff.z], limit=200)
        assert float(knockoff.average(t)[0]) == pytest.approx(area / t)
    with pytest.raises(ValidationError):
        KnockoffLinearCurve(cap=1.0)


def test_curve_validation():
    with pytest.raises(ValidationError):
        LfExponentialCurve(pi1=0.9, b=4.0)
    with pytest.raises(ValidationError):
        TabulatedCurve(grid=[0.1, 1.0], values=[0.5, 0.5])
    with pytest.raises(ValidationError):
        VctConfig(pi_curve=TabulatedCurve(grid=[0.0, 1.0], values=[0.0, 0.5]))


def test_gaussian_config():
    cfg = GaussianLocationConfig(m=100, mu=10.0)
    assert cfg.mu_m == 10.0
    assert (cfg.m0, cfg.m1) == (50, 50)
    assert cfg.with_m(1000).m1 == 500
    with pytest.raises(ValidationError):
        GaussianLocationConfig(m=3, beta=0.9)


def test_experiment_config_defaults():
    cfg = ExperimentConfig(setting="topk", m_grid=[100], alpha_grid=[0.2])
    assert cfg.methods == ["Simes", "DKW", "KR", "Wellner", "Hybrid"]
    assert cfg.gaussian.m == 100
    pre = ExperimentConfig(setting="preordered", m_grid=[100], alpha_grid=[0.2])
    assert pre.methods == ["Freedman", "KR", "KRU"]
    assert pre.threshold_s(0.2) == pre.lam
    assert ExperimentConfig(setting="online", m_grid=[10], alpha_grid=[0.1]).online is not None


def test_experiment_threshold_s():
    cfg = ExperimentConfig(setting="preordered", m_grid=[100], alpha_grid=[0.2], s_alpha_multiple=0.1)
    assert cfg.threshold_s(0.2) == pytest.approx(0.02)
    fixed = ExperimentConfig(setting="preordered", m_grid=[100], alpha_grid=[0.2], s=0.3, lam=0.6)
    assert fixed.threshold_s(0.05) == 0.3


@pytest.mark.parametrize(
    "overrides",
    [
        {"alpha_grid": [0.0]},
        {"m_grid": [0]},
        {"methods": ["Freedman"]},
        {"setting": "online", "methods": ["KR-adapt"]},
        {"setting": "preordered", "s": 0.1, "s_alpha_multiple": 0.5},
    ],
)
def test_experiment_config_rejects(overrides):
    data = {"setting": "topk", "m_grid": [100], "alpha_grid": [0.2], **overrides}
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate(data)
