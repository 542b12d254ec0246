from __future__ import annotations

import math

import numpy as np
import pytest

from app.core.errors import DomainError
from app.core.numerics import (
    KAPPA,
    freedman_delta,
    gauss_upper_cdf,
    gauss_upper_quantile,
    h_eval,
    h_inverse,
    kr_factor,
    kru_factor,
    kru_online_factor,
    stitched_freedman_bound,
    union_delta,
)


def test_h_at_two():
    assert h_eval(2.0) == pytest.approx(0.3862944, abs=1e-7)


def test_h_rejects_values_at_or_below_one():
    with pytest.raises(DomainError):
        h_eval(1.0)
    with pytest.raises(DomainError):
        h_eval(np.array([2.0, 0.5]))


@pytest.mark.parametrize("y", [1e-6, 1e-3, 0.3862944, 1.0, 2.5, 17.0, 1e3, 1e8])
def test_h_inverse_round_trip(y):
    lam = h_inverse(y)
    assert lam > 1.0
    assert h_eval(lam) == pytest.approx(y, rel=1e-10)


def test_h_inverse_vectorized_and_inside_analytic_bracket():
    ys = np.logspace(-6, 6, 10_000)
    lam = h_inverse(ys)
    assert isinstance(lam, np.ndarray)
    assert np.all(np.abs(h_eval(lam) - ys) <= 1e-9 * np.maximum(1.0, ys))
    assert np.all(lam >= 1.0 + np.sqrt(2.0 * ys) - 1e-12)
    assert np.all(lam <= (1.0 + np.sqrt(ys / 2.0)) ** 2 + 1e-9)
    assert np.all(np.diff(lam) > 0)


@pytest.mark.parametrize("c", [0.01, 1.0, 50.0])
def test_scaled_h_inverse_is_nondecreasing(c):
    x = np.logspace(-3, 6, 400)
    values = x * h_inverse(c / x)
    assert np.all(np.diff(values) >= 0.0)


def test_h_inverse_scalar_returns_float():
    assert isinstance(h_inverse(0.5), float)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_h_inverse_domain(bad):
    with pytest.raises(DomainError):
        h_inverse(bad)


def test_gauss_upper_tail():
    assert gauss_upper_cdf(1.959964) == pytest.approx(0.025, abs=2e-9)
    assert gauss_upper_cdf(0.0) == 0.5
    assert gauss_upper_quantile(0.025) == pytest.approx(1.959964, abs=1e-6)


def test_gauss_upper_quantile_domain():
    with pytest.raises(DomainError):
        gauss_upper_quantile(0.0)
    with pytest.raises(DomainError):
        gauss_upper_quantile(1.0)


def test_kr_factor_values():
    assert kr_factor(0.05) == pytest.approx(2.16265, abs=1e-4)
    big_l = math.log(4.0)
    assert kr_factor(0.25) == pytest.approx(big_l / math.log1p(big_l), rel=1e-14)


@pytest.mark.parametrize("delta", [0.0, 0.32, 0.5, 1.0])
def test_kr_factor_domain(delta):
    with pytest.raises(DomainError):
        kr_factor(delta)


def test_union_delta():
    assert union_delta(0.25, 1) == pytest.approx(0.25 / KAPPA)
    assert np.allclose(union_delta(0.25, np.array([1.0, 2.0])), [0.25 / KAPPA, 0.25 / (4 * KAPPA)])


def test_kru_factor_decreases_towards_one():
    a = np.array([10.0, 100.0, 1000.0])
    factors = kru_factor(a, union_delta(0.25, a), 1.0)
    assert factors == pytest.approx([1.6626, 1.1111, 1.0157], abs=1e-3)
    assert np.all(factors > 1.0)
    assert np.all(np.diff(factors) < 0)


def test_kru_factor_closed_form_at_a_one():
    delta = 0.25
    expected = -math.log(delta) / math.log1p(1.0 - delta)
    assert kru_factor(1, delta, 1.0) == pytest.approx(expected)


def test_kru_online_factor_at_one_is_kr():
    assert kru_online_factor(1, 0.05) == pytest.approx(kr_factor(0.05))


def test_kr_constants_decrease_in_delta():
    deltas = np.linspace(0.01, 0.31, 31)
    kr = np.array([kr_factor(d) for d in deltas])
    assert np.all(np.diff(kr) < 0)
    wide = np.linspace(0.01, 0.9, 90)
    for a in (1.0, 5.0, 50.0):
        assert np.all(np.diff(kru_online_factor(a, wide)) < 0)
        for b in (0.5, 1.0, 2.0):
            assert np.all(np.diff(kru_factor(a, wide, b)) < 0)


def test_kru_factor_domain():
    with pytest.raises(DomainError):
        kru_factor(0.5, 0.1, 1.0)
    with pytest.raises(DomainError):
        kru_factor(1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        kru_factor(1.0, 0.1, 0.0)


def test_freedman_delta_at_one():
    assert freedman_delta(1.0, 0.25) == pytest.approx(4.25124, abs=1e-4)
    # u ∨ 1
    assert freedman_delta(0.0, 0.25) == freedman_delta(1.0, 0.25)


def test_freedman_delta_is_increasing_and_sublinear():
    u = np.logspace(0, 8, 50)
    values = freedman_delta(u, 0.1)
    assert np.all(np.diff(values) > 0)
    assert values[-1] / u[-1] < 1e-2


def test_freedman_delta_domain():
    with pytest.raises(DomainError):
        freedman_delta(-1.0, 0.25)
    with pytest.raises(DomainError):
        freedman_delta(1.0, 1.0)


def test_stitched_bound():
    assert stitched_freedman_bound(0.0, 1.0, 0.1) == pytest.approx(4.186147, abs=1e-5)
    # v < B² é tratado como B²
    assert stitched_freedman_bound(0.5, 1.0, 0.1) == stitched_freedman_bound(1.0, 1.0, 0.1)


def test_stitched_bound_domain():
    with pytest.raises(DomainError):
        stitched_freedman_bound(1.0, 1.0, 1.0 / (1.0 + KAPPA))
    with pytest.raises(DomainError):
        stitched_freedman_bound(1.0, -1.0, 0.1)
    with pytest.raises(DomainError):
        stitched_freedman_bound(-1.0, 1.0, 0.1)
