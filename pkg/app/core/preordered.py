"""
Caminho pré-ordenado R_k = {π(i) : i ≤ k, p_π(i) ≤ s}: procedimento LF/BC,
envelopes Freedman, KR e KR-U, cotas no conjunto LF e diagnósticos de poder.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import brentq

from app.core.errors import ConvergenceError, DomainError
from app.core.numerics import freedman_delta, kru_factor, union_delta
from app.core.topk import interpolate
from app.models.experiment import VctConfig
from app.models.preordered import LfSelection, PowerDiagnostics, PreorderedData
from app.models.pvalues import PATH_METHODS, Envelope, Method
from app.models.tolerance import DEFAULT_TOLERANCE, ToleranceConfig

logger = logging.getLogger(__name__)


def _check_level(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        msg = f"{name} deve estar em (0, 1), recebido {value}"
        raise DomainError(msg)


def _require_lambda_below_one(data: PreorderedData) -> None:
    if data.lam >= 1.0:
        msg = "λ deve estar em [0, 1) para o LF e para o envelope Freedman"
        raise DomainError(msg)


def _require_lambda_above_s(data: PreorderedData) -> None:
    if data.lam < data.s:
        msg = f"KR/KR-U exigem λ ≥ s, recebido λ={data.lam} < s={data.s}"
        raise DomainError(msg)


def freedman_nu(s: float, lam: float) -> float:
    """ν = s(1 + min(s, λ)/(1 − λ))."""
    return s * (1.0 + min(s, lam) / (1.0 - lam))


# ---------------------------------------------------------------------------
# Seleção LF
# ---------------------------------------------------------------------------


def lf_estimates(data: PreorderedData) -> np.ndarray:
    """FDP̂_k = B(1 + N_k)/(1 ∨ A_k) para k = 0…m."""
    _require_lambda_below_one(data)
    accepted, above = data.counts()
    a = np.concatenate(([0], accepted))
    n = np.concatenate(([0], above))
    return data.scale * (1 + n) / np.maximum(a, 1)


def lf_select(data: PreorderedData, alpha: float) -> LfSelection:
    """
    k̂_α = max{k ∈ {0..m} : FDP̂_k ≤ α}; k̂ = 0 quando nenhum k é viável.
    """
    _check_level("α", alpha)
    estimates = lf_estimates(data)
    feasible = np.flatnonzero(estimates <= alpha)
    k_hat = int(feasible[-1]) if feasible.size else 0
    accepted, _ = data.counts()
    r_hat = int(accepted[k_hat - 1]) if k_hat > 0 else 0
    logger.debug(
        "LF | m=%s | s=%s | lambda=%s | alpha=%s | k_hat=%s | r_hat=%s", data.m, data.s, data.lam, alpha, k_hat, r_hat
    )
    return LfSelection(k_hat=k_hat, r_hat=r_hat)


# ---------------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------------


def _kru_numerators(above: np.ndarray, scale: float, delta: float, a_max: int) -> np.ndarray:
    """
    g(n) = min_{1≤a≤a_max} c_a·(a + B·n) para cada valor de N_k.

    Como c_a > 1, nenhum a com a + B·n ≥ c_1(1 + B·n) pode vencer o termo a = 1.
    """
    a_grid = np.arange(1, a_max + 1, dtype=np.float64)
    factors = kru_factor(a_grid, union_delta(delta, a_grid), scale)
    distinct, inverse = np.unique(above, return_inverse=True)
    best = np.full(distinct.shape, np.inf)
    for i, n in enumerate(distinct):
        bn = scale * float(n)
        if bn >= a_max:
            # (a + B·n)/A_k ≥ 1 para todo a ≥ 1 e A_k ≤ a_max
            continue
        limit = int(min(a_max, max(1.0, math.ceil(factors[0] * (1.0 + bn) - bn))))
        best[i] = float(np.min(factors[:limit] * (a_grid[:limit] + bn)))
    return best[inverse]


def preordered_envelope(method: Method, data: PreorderedData, delta: float) -> Envelope:
    """Envelope (1 − δ) para o caminho pré-ordenado, k = 1…m."""
    if method not in PATH_METHODS:
        msg = f"método {method} não define envelope pré-ordenado"
        raise DomainError(msg)
    _check_level("δ", delta)
    accepted, above = data.counts()
    denominator = np.maximum(accepted, 1).astype(np.float64)

    if method is Method.FREEDMAN:
        _require_lambda_below_one(data)
        ks = np.arange(1, data.m + 1, dtype=np.float64)
        nu = freedman_nu(data.s, data.lam)
        bounds = (data.scale * above + freedman_delta(nu * ks, delta)) / denominator
    else:
        _require_lambda_above_s(data)
        if math.isinf(data.scale):
            bounds = np.ones(data.m)
        elif method is Method.KR:
            bounds = kru_factor(1, delta, data.scale) * (1.0 + data.scale * above) / denominator
        else:
            a_max = max(1, int(accepted[-1]))
            bounds = _kru_numerators(above, data.scale, delta, a_max) / denominator

    logger.debug("Envelope pré-ordenado | método=%s | m=%s | delta=%s", method, data.m, delta)
    return Envelope(bounds=np.minimum(1.0, bounds), method=method, delta=delta)


def preordered_envelope_variant(
    method: Method,
    data: PreorderedData,
    delta: float,
    *,
    interpolated: bool = False,
) -> Envelope:
    env = preordered_envelope(method, data, delta)
    if interpolated:
        accepted, _ = data.counts()
        env = interpolate(env, accepted)
    return env


# ---------------------------------------------------------------------------
# Cotas no conjunto LF
# ---------------------------------------------------------------------------


def lf_fdp_bound(method: Method, data: PreorderedData, alpha: float, delta: float) -> float:
    """Cota de confiança (1 − δ) para a FDP do LF no nível α, avaliada em (k̂_α, r̂_α)."""
    _check_level("δ", delta)
    _require_lambda_above_s(data)
    selection = lf_select(data, alpha)
    r = max(1, selection.r_hat)
    b = data.scale

    match method:
        case Method.KR:
            bound = kru_factor(1, delta, b) * (alpha + 1.0 / r)
        case Method.FREEDMAN:
            bound = alpha + freedman_delta(freedman_nu(data.s, data.lam) * selection.k_hat, delta) / r
        case Method.KRU:
            a_grid = np.arange(1, r + 1, dtype=np.float64)
            factors = kru_factor(a_grid, union_delta(delta, a_grid), b)
            bound = float(np.min(factors * (alpha + a_grid / r)))
        case _:
            msg = f"método {method} sem forma fechada no LF"
            raise DomainError(msg)
    return min(1.0, float(bound))


def lf_interpolated_bound(method: Method, data: PreorderedData, alpha: float, delta: float) -> float:
    """Envelope interpolado avaliado em k̂_α (0 quando k̂_α = 0)."""
    selection = lf_select(data, alpha)
    if selection.k_hat == 0:
        return 0.0
    env = preordered_envelope_variant(method, data, delta, interpolated=True)
    return float(env.bounds[selection.k_hat - 1])


# ---------------------------------------------------------------------------
# Diagnósticos de poder (modelo VCT)
# ---------------------------------------------------------------------------


def _fdp_infinity(weight: ArrayLike, a_coef: float, b_coef: float) -> np.ndarray:
    w = np.asarray(weight, dtype=np.float64)
    return (1.0 + w * (a_coef - 1.0)) / (1.0 + w * (b_coef - 1.0))


def power_diagnostics_preordered(
    vct: VctConfig,
    s: float,
    lam: float,
    alpha: float,
    grid: ArrayLike | None = None,
    tol: ToleranceConfig = DEFAULT_TOLERANCE,
) -> PowerDiagnostics:
    """
    ᾱ, t*_α e a curva FDP^∞(t) = (1 + Π(t)(a − 1))/(1 + Π(t)(b − 1)),
    com a = (1 − F₁(λ))/(1 − λ) e b = F₁(s)/s.
    """
    _check_level("α", alpha)
    if not 0.0 < s <= 1.0 or not 0.0 <= lam < 1.0:
        msg = f"limiares inválidos: s={s}, λ={lam}"
        raise DomainError(msg)
    f1_s = float(vct.alt_law.cdf(s))
    f1_lam = float(vct.alt_law.cdf(lam))
    if not (f1_s > s and f1_lam > lam):
        msg = "os diagnósticos exigem F₁(s) > s e F₁(λ) > λ"
        raise DomainError(msg)
    a_coef = (1.0 - f1_lam) / (1.0 - lam)
    b_coef = f1_s / s

    curve = vct.pi_curve
    alpha_bar = float(_fdp_infinity(float(curve.density(0.0)), a_coef, b_coef))
    if alpha <= alpha_bar:
        msg = f"α={alpha} ≤ ᾱ={alpha_bar:.6g}: t*_α indefinido"
        raise DomainError(msg)

    def excess(t: float) -> float:
        return float(_fdp_infinity(curve.average(t)[0], a_coef, b_coef)) - alpha

    # Π(t) → π(∞) quando t → ∞
    limit = float(_fdp_infinity(curve.tail(), a_coef, b_coef))
    if limit <= alpha:
        t_star = math.inf
    else:
        hi = 1.0
        for _ in range(tol.max_iter):
            if excess(hi) > 0.0:
                break
            hi *= 2.0
        else:
            msg = "não foi possível isolar t*_α"
            raise ConvergenceError(msg)
        t_star = float(brentq(excess, 0.0, hi, rtol=max(tol.rel_tol, 4 * np.finfo(float).eps), maxiter=tol.max_iter))

    if grid is None:
        upper = 2.0 if math.isinf(t_star) else max(2.0, 2.0 * t_star)
        grid = np.linspace(0.0, upper, 201)
    points = np.asarray(grid, dtype=np.float64)
    curve_values = _fdp_infinity(curve.average(points), a_coef, b_coef)
    logger.debug("Diagnóstico LF | alpha=%s | alpha_bar=%s | t_star=%s", alpha, alpha_bar, t_star)
    return PowerDiagnostics(
        alpha=alpha,
        alpha_bar=alpha_bar,
        t_star=t_star,
        beta=vct.beta,
        s=s,
        grid=points,
        fdp_infinity=curve_values,
    )
