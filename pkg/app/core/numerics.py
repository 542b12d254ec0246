"""
Funções escalares e primitivas de concentração compartilhadas pelos envelopes.

Todas as funções são puras; aceitam escalares (retornando ``float``) ou vetores
numpy (retornando ``np.ndarray``), salvo indicação em contrário.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import lambertw, ndtr, ndtri

from app.core.errors import ConvergenceError, DomainError
from app.models.tolerance import DEFAULT_TOLERANCE, ToleranceConfig

logger = logging.getLogger(__name__)

KAPPA = math.pi**2 / 6
KR_MAX_DELTA = 0.31

FloatOrArray = float | np.ndarray


def _as_float_array(x: ArrayLike) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unwrap(x: ArrayLike, result: np.ndarray) -> FloatOrArray:
    """Devolve ``float`` quando a entrada era escalar."""
    if np.ndim(x) == 0:
        return float(result)
    return result


def _check_probability(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        msg = f"{name} deve estar em (0, 1), recebido {value}"
        raise DomainError(msg)


def _h(lam: np.ndarray) -> np.ndarray:
    # λ log λ − (λ − 1), sem cancelamento perto de λ = 1
    x = lam - 1.0
    return lam * np.log1p(x) - x


def h_eval(lam: ArrayLike) -> FloatOrArray:
    """h(λ) = λ(log λ − 1) + 1 para λ > 1."""
    arr = _as_float_array(lam)
    if np.any(~(arr > 1.0)):
        msg = "h só está definida para λ > 1"
        raise DomainError(msg)
    return _unwrap(lam, _h(arr))


def h_inverse(y: ArrayLike, tol: ToleranceConfig = DEFAULT_TOLERANCE) -> FloatOrArray:
    """
    Inversa de h em (0, ∞) → (1, ∞).

    Ponto de partida em forma fechada, h⁻¹(y) = (y − 1)/W₀((y − 1)/e), seguido de
    Newton protegido dentro do intervalo analítico [1 + √(2y), (1 + √(y/2))²].
    """
    arr = _as_float_array(y)
    if np.any(~(arr > 0.0)) or not np.all(np.isfinite(arr)):
        msg = "h⁻¹ só está definida para y > 0 finito"
        raise DomainError(msg)

    lo = 1.0 + np.sqrt(2.0 * arr)
    hi = (1.0 + np.sqrt(arr / 2.0)) ** 2

    w = np.real(lambertw((arr - 1.0) / np.e, 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(w == 0.0, np.e, (arr - 1.0) / w)
    lam = np.where(np.isfinite(lam), lam, 0.5 * (lo + hi))
    lam = np.clip(lam, lo, hi)

    scale = np.maximum(1.0, arr)
    for _ in range(tol.max_iter):
        f = _h(lam) - arr
        done = np.abs(f) <= tol.rel_tol * scale
        if np.all(done):
            return _unwrap(y, lam)
        hi = np.where(f > 0.0, np.minimum(hi, lam), hi)
        lo = np.where(f < 0.0, np.maximum(lo, lam), lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            candidate = lam - f / np.log(lam)
        unsafe = ~np.isfinite(candidate) | (candidate <= lo) | (candidate >= hi)
        candidate = np.where(unsafe, 0.5 * (lo + hi), candidate)
        lam = np.where(done, lam, candidate)

    msg = f"h⁻¹ não convergiu em {tol.max_iter} iterações"
    raise ConvergenceError(msg)


def gauss_upper_cdf(z: ArrayLike) -> FloatOrArray:
    """Φ̄(z) = P(Z ≥ z) para Z normal padrão."""
    return _unwrap(z, ndtr(-_as_float_array(z)))


def gauss_upper_quantile(p: ArrayLike) -> FloatOrArray:
    """Φ̄⁻¹(p), p ∈ (0, 1)."""
    arr = _as_float_array(p)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        msg = "o quantil superior gaussiano exige p em (0, 1)"
        raise DomainError(msg)
    return _unwrap(p, -ndtri(arr))


def kr_factor(delta: float) -> float:
    """Constante KR log(1/δ)/log(1 + log(1/δ)), válida para δ ≤ 0.31."""
    if not 0.0 < delta <= KR_MAX_DELTA:
        msg = f"a constante KR exige 0 < δ ≤ {KR_MAX_DELTA}, recebido {delta}"
        raise DomainError(msg)
    big_l = -math.log(delta)
    return big_l / math.log1p(big_l)


def union_delta(delta: float, a: ArrayLike) -> FloatOrArray:
    """Nível δ_a = δ/(κa²) da união sobre a ≥ 1."""
    arr = _as_float_array(a)
    return _unwrap(a, delta / (KAPPA * arr**2))


def _check_kru_args(a: np.ndarray, delta_a: np.ndarray) -> None:
    if np.any(a < 1.0):
        msg = "o parâmetro a deve ser ≥ 1"
        raise DomainError(msg)
    if np.any(~((delta_a > 0.0) & (delta_a < 1.0))):
        msg = "δ_a deve estar em (0, 1)"
        raise DomainError(msg)


def kru_factor(a: ArrayLike, delta_a: ArrayLike, b: float) -> FloatOrArray:
    """
    Prefator KR com parâmetro a (forma pré-ordenada):
    log(1/δ_a) / (a · log(1 + (1 − δ_a^{B/a})/B)).
    """
    a_arr = _as_float_array(a)
    d_arr = _as_float_array(delta_a)
    _check_kru_args(a_arr, d_arr)
    if not b > 0.0:
        msg = f"B deve ser > 0, recebido {b}"
        raise DomainError(msg)
    log_inv = -np.log(d_arr)
    spent = -np.expm1(-(b / a_arr) * log_inv)
    result = log_inv / (a_arr * np.log1p(spent / b))
    return float(result) if result.ndim == 0 else result


def kru_online_factor(a: ArrayLike, delta_a: ArrayLike) -> FloatOrArray:
    """Prefator KR da forma online: log(1/δ_a) / (a · log(1 + log(1/δ_a)/a))."""
    a_arr = _as_float_array(a)
    d_arr = _as_float_array(delta_a)
    _check_kru_args(a_arr, d_arr)
    log_inv = -np.log(d_arr)
    result = log_inv / (a_arr * np.log1p(log_inv / a_arr))
    return float(result) if result.ndim == 0 else result


def freedman_delta(u: ArrayLike, delta: float) -> FloatOrArray:
    """
    Δ(u) = 2√ε_u·√(u ∨ 1) + ε_u/2, com
    ε_u = log((1 + κ)/δ) + 2·log(1 + log₂(u ∨ 1)).
    """
    _check_probability("δ", delta)
    arr = _as_float_array(u)
    if np.any(arr < 0.0):
        msg = "Δ(u) exige u ≥ 0"
        raise DomainError(msg)
    clamped = np.maximum(arr, 1.0)
    eps = math.log((1.0 + KAPPA) / delta) + 2.0 * np.log1p(np.log2(clamped))
    return _unwrap(u, 2.0 * np.sqrt(eps) * np.sqrt(clamped) + 0.5 * eps)


def stitched_freedman_bound(v: ArrayLike, b: float, delta: float) -> FloatOrArray:
    """
    Cota uniforme no tempo para supermartingais com incrementos ≤ B
    (probabilidade de violação ≤ (1 + κ)δ).
    """
    if not 0.0 < delta < 1.0 / (1.0 + KAPPA):
        msg = f"δ deve estar em (0, 1/(1+κ)), recebido {delta}"
        raise DomainError(msg)
    if not b > 0.0:
        msg = f"B deve ser > 0, recebido {b}"
        raise DomainError(msg)
    arr = _as_float_array(v)
    if np.any(arr < 0.0):
        msg = "a variância acumulada deve ser ≥ 0"
        raise DomainError(msg)
    v_tilde = np.maximum(arr, b * b)
    eps = -math.log(delta) + 2.0 * np.log1p(np.log2(v_tilde / (b * b)))
    return _unwrap(v, 2.0 * np.sqrt(v_tilde * eps) + 0.5 * b * eps)
