"""
Envelopes de confiança da FDP no caminho top-k, R_k = {i : p_i ≤ p₍ₖ₎}.

Inclui a seleção BH, as cotas de m₀ do tipo Storey, a interpolação de envelopes
e as cotas da FDP no conjunto de rejeição do BH.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from numpy.typing import ArrayLike

from app.core.errors import ConvergenceError, DomainError, ShapeMismatchError
from app.core.numerics import KAPPA, h_inverse, kr_factor
from app.models.pvalues import TOPK_METHODS, Envelope, Method, PValueBatch, SortedPValues
from app.models.tolerance import DEFAULT_TOLERANCE, ToleranceConfig

logger = logging.getLogger(__name__)

_TINY = float(np.nextafter(0.0, 1.0))
# acima disso h⁻¹ é resolvida em escala log
_LOG_SCALE_ARG = 1e200


def _check_level(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        msg = f"{name} deve estar em (0, 1), recebido {value}"
        raise DomainError(msg)


def _check_topk_method(method: Method) -> None:
    if method not in TOPK_METHODS:
        msg = f"método {method} não define envelope top-k"
        raise DomainError(msg)


def _readonly(arr: np.ndarray) -> np.ndarray:
    # model_copy(update=...) não passa pelos validadores do Envelope
    arr.setflags(write=False)
    return arr


def wellner_constant(delta: float, t: ArrayLike) -> np.ndarray:
    """C_t = 2 log(κ/δ) + 4 log(1 + log₂(1/t)), t ∈ (0, 1]."""
    ts = np.asarray(t, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return 2.0 * math.log(KAPPA / delta) + 4.0 * np.log1p(-np.log2(ts))


# ---------------------------------------------------------------------------
# Seleção BH
# ---------------------------------------------------------------------------


def _bh_k_hat(ordered: np.ndarray, alpha: float) -> int:
    m = ordered.size
    ks = np.arange(1, m + 1, dtype=np.float64)
    feasible = np.flatnonzero(m * ordered / ks <= alpha)
    return int(feasible[-1]) + 1 if feasible.size else 0


def bh_select(batch: PValueBatch, alpha: float, *, sorted_pvalues: SortedPValues | None = None) -> int:
    """k̂_α = max{k : m·p₍ₖ₎/k ≤ α}, 0 quando o conjunto é vazio."""
    _check_level("α", alpha)
    srt = sorted_pvalues or batch.sort()
    k_hat = _bh_k_hat(srt.ordered, alpha)
    logger.debug("BH | m=%s | alpha=%s | k_hat=%s", batch.m, alpha, k_hat)
    return k_hat


# ---------------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------------


def _log_scale_ratio(log_arg: np.ndarray, tol: ToleranceConfig) -> np.ndarray:
    # λ/h(λ) para h(λ) = e^L enorme: com u = log λ, u + log(u − 1) = L e λ/h(λ) = 1/(u − 1)
    u = log_arg.copy()
    for _ in range(tol.max_iter):
        g = u + np.log(u - 1.0) - log_arg
        if np.all(np.abs(g) <= tol.rel_tol * log_arg):
            return 1.0 / (u - 1.0)
        u = u - g / (1.0 + 1.0 / (u - 1.0))
    msg = f"h⁻¹ em escala log não convergiu em {tol.max_iter} iterações"
    raise ConvergenceError(msg)


def _wellner_terms(ordered: np.ndarray, ks: np.ndarray, delta: float, m_eff: float, tol: ToleranceConfig) -> np.ndarray:
    bounds = np.zeros_like(ordered)
    # p₍ₖ₎ = 0: extensão contínua t·h⁻¹(c/t) → 0
    live = ordered > 0.0
    if not np.any(live):
        return bounds
    p = ordered[live]
    ct = wellner_constant(delta, p)
    scaled = m_eff * p
    with np.errstate(over="ignore"):
        arg = ct / scaled
    terms = np.empty_like(p)
    direct = np.isfinite(arg) & (arg <= _LOG_SCALE_ARG)
    if np.any(direct):
        terms[direct] = scaled[direct] * h_inverse(arg[direct], tol)
    if not np.all(direct):
        # p subnormal: t·h⁻¹(c/t) = c·λ/h(λ), resolvido em escala log
        far = ~direct
        log_arg = np.log(ct[far]) - math.log(m_eff) - np.log(p[far])
        terms[far] = ct[far] * _log_scale_ratio(log_arg, tol)
    bounds[live] = terms / ks[live]
    return bounds


def _raw_bounds(
    method: Method,
    ordered: np.ndarray,
    delta: float,
    m_eff: float,
    tol: ToleranceConfig,
    m_eff_alt: float | None = None,
) -> np.ndarray:
    ks = np.arange(1, ordered.size + 1, dtype=np.float64)
    match method:
        case Method.SIMES:
            values = m_eff * ordered / (ks * delta)
        case Method.DKW:
            values = m_eff * ordered / ks + math.sqrt(m_eff) * math.sqrt(0.5 * math.log(1.0 / delta)) / ks
        case Method.KR:
            values = kr_factor(delta) * (m_eff * ordered / ks + 1.0 / ks)
        case Method.WELLNER:
            values = _wellner_terms(ordered, ks, delta, m_eff, tol)
        case Method.HYBRID:
            half = delta / 2.0
            wellner_m = m_eff if m_eff_alt is None else m_eff_alt
            values = np.minimum(
                _raw_bounds(Method.KR, ordered, half, m_eff, tol),
                _raw_bounds(Method.WELLNER, ordered, half, wellner_m, tol),
            )
        case _:
            msg = f"método {method} não define envelope top-k"
            raise DomainError(msg)
    return np.minimum(1.0, values)


def topk_envelope(
    method: Method,
    batch: PValueBatch,
    delta: float,
    m_eff: float | None = None,
    *,
    sorted_pvalues: SortedPValues | None = None,
    tol: ToleranceConfig = DEFAULT_TOLERANCE,
) -> Envelope:
    """Envelope top-k com m substituído por m_eff (m por padrão)."""
    _check_topk_method(method)
    _check_level("δ", delta)
    m = batch.m
    effective = float(m) if m_eff is None else float(m_eff)
    if not 0.0 < effective <= m:
        msg = f"m_eff deve estar em (0, m], recebido {m_eff}"
        raise DomainError(msg)

    srt = sorted_pvalues or batch.sort()
    logger.debug("Envelope top-k | método=%s | m=%s | delta=%s | m_eff=%s", method, m, delta, effective)
    bounds = _raw_bounds(method, srt.ordered, delta, effective, tol)
    return Envelope(bounds=bounds, method=method, delta=delta, m_eff=effective)


def adaptive_envelope(
    method: Method,
    batch: PValueBatch,
    delta: float,
    *,
    sorted_pvalues: SortedPValues | None = None,
    tol: ToleranceConfig = DEFAULT_TOLERANCE,
) -> Envelope:
    """
    Envelope com m substituído pela cota m̂₀ do próprio método.

    O Hybrid usa KR-adapt e Wellner-adapt, cada um em δ/2 com seu próprio m̂₀.
    """
    _check_topk_method(method)
    _check_level("δ", delta)
    srt = sorted_pvalues or batch.sort()
    if method is Method.HYBRID:
        half = delta / 2.0
        m_kr = m0_upper(Method.KR, batch, half, sorted_pvalues=srt)
        m_well = m0_upper(Method.WELLNER, batch, half, sorted_pvalues=srt)
        bounds = _raw_bounds(Method.HYBRID, srt.ordered, delta, m_kr, tol, m_eff_alt=m_well)
        m_eff = max(m_kr, m_well)
    else:
        m_eff = m0_upper(method, batch, delta, sorted_pvalues=srt)
        bounds = _raw_bounds(method, srt.ordered, delta, m_eff, tol)
    return Envelope(bounds=bounds, method=method, delta=delta, adaptive=True, m_eff=m_eff)


# ---------------------------------------------------------------------------
# Cotas superiores de m₀
# ---------------------------------------------------------------------------


def m0_upper(
    method: Method,
    batch: PValueBatch,
    delta: float,
    *,
    sorted_pvalues: SortedPValues | None = None,
) -> float:
    """
    Cota de confiança para m₀, ínfimo sobre t = p₍ₖ₎ (e o limite t → 0⁺) limitado por m.

    V_t = #{p_i > t} é calculado exatamente, o que coincide com m − k sem empates.
    """
    _check_level("δ", delta)
    srt = sorted_pvalues or batch.sort()
    p = srt.ordered
    m = p.size
    over = m - np.searchsorted(p, p, side="right")
    over_zero = float(m - np.searchsorted(p, 0.0, side="right"))

    match method:
        case Method.SIMES:
            mask = (p > 0.0) & (p < delta)
            t, v = p[mask], over[mask]
            candidates = v / (1.0 - t / delta)
            boundary: float | None = over_zero
        case Method.DKW:
            c = 0.5 * math.log(1.0 / delta)
            mask = (p > 0.0) & (p < 1.0)
            t, v = p[mask], over[mask]
            candidates = (math.sqrt(c) / (2.0 * (1.0 - t)) + np.sqrt(c / (4.0 * (1.0 - t) ** 2) + v / (1.0 - t))) ** 2
            boundary = (math.sqrt(c) / 2.0 + math.sqrt(c / 4.0 + over_zero)) ** 2
        case Method.KR:
            cp = kr_factor(delta)
            mask = (p > 0.0) & (p < 1.0 / cp)
            t, v = p[mask], over[mask]
            candidates = (cp + v) / (1.0 - cp * t)
            boundary = cp + over_zero
        case Method.WELLNER:
            mask = (p > 0.0) & (p < 1.0)
            t, v = p[mask], over[mask]
            ct = wellner_constant(delta, t)
            scale = 2.0 * (1.0 - t) ** 2
            candidates = (np.sqrt(t * ct / scale) + np.sqrt(ct / scale + v / (1.0 - t))) ** 2
            boundary = None
        case _:
            msg = f"método {method} não possui estimador de m₀"
            raise DomainError(msg)

    best = float(m)
    if candidates.size:
        best = min(best, float(np.min(candidates)))
    if boundary is not None:
        best = min(best, boundary)
    # ínfimo nulo (Simes com p₍ₘ₎ < δ): mantém m_eff > 0
    if best <= 0.0:
        best = _TINY
    logger.debug("m0 | método=%s | m=%s | delta=%s | m0_hat=%s", method, m, delta, best)
    return best


# ---------------------------------------------------------------------------
# Interpolação
# ---------------------------------------------------------------------------


def interpolate(raw: Envelope, rejection_sizes: ArrayLike) -> Envelope:
    """
    FDP̃_k = min_{k'≤k}{|R_k| − |R_{k'}| + |R_{k'}|·FDP̄_{k'}} / (|R_k| ∨ 1) em caminhos encaixados.

    Uma passada: mínimo acumulado de |R_{k'}|(FDP̄_{k'} − 1).
    """
    sizes = np.asarray(rejection_sizes)
    if sizes.ndim != 1 or sizes.size != raw.bounds.size:
        msg = f"rejection_sizes tem tamanho {sizes.size}, esperado {raw.bounds.size}"
        raise ShapeMismatchError(msg)
    if np.any(sizes < 0) or np.any(np.diff(sizes) < 0):
        msg = "rejection_sizes deve ser não negativo e não decrescente"
        raise DomainError(msg)

    counts = sizes.astype(np.float64)
    best = np.minimum.accumulate(counts * (raw.bounds - 1.0))
    smoothed = (counts + best) / np.maximum(counts, 1.0)
    bounds = np.clip(np.minimum(smoothed, raw.bounds), 0.0, 1.0)
    return raw.model_copy(update={"bounds": _readonly(bounds), "interpolated": True})


# ---------------------------------------------------------------------------
# Cotas no conjunto BH
# ---------------------------------------------------------------------------


def _bh_closed_form(
    method: Method,
    m: int,
    k_hat: int,
    alpha: float,
    delta: float,
    m0_hat: float | None,
    tol: ToleranceConfig,
) -> float:
    kk = max(1, k_hat)
    ratio = 1.0 if m0_hat is None else m0_hat / m
    size = float(m) if m0_hat is None else m0_hat
    match method:
        case Method.SIMES:
            value = alpha * ratio / delta
        case Method.DKW:
            value = alpha * ratio + math.sqrt(size) * math.sqrt(0.5 * math.log(1.0 / delta)) / kk
        case Method.KR:
            value = kr_factor(delta) * (alpha * ratio + 1.0 / kk)
        case Method.WELLNER:
            numerator = 2.0 * math.log(KAPPA / delta) + 4.0 * math.log1p(math.log2(m / (alpha * kk)))
            value = alpha * ratio * h_inverse(numerator / (alpha * kk * ratio), tol)
        case _:
            msg = f"método {method} sem forma fechada no BH"
            raise DomainError(msg)
    return min(1.0, value)


def bh_fdp_bound(
    method: Method,
    batch: PValueBatch,
    alpha: float,
    delta: float,
    adaptive: bool = False,
    *,
    sorted_pvalues: SortedPValues | None = None,
    tol: ToleranceConfig = DEFAULT_TOLERANCE,
) -> float:
    """Cota de confiança (1 − δ) para a FDP do BH no nível α (formas fechadas)."""
    _check_topk_method(method)
    _check_level("α", alpha)
    _check_level("δ", delta)
    srt = sorted_pvalues or batch.sort()
    k_hat = _bh_k_hat(srt.ordered, alpha)
    m = batch.m

    def closed(name: Method, level: float) -> float:
        m0_hat = m0_upper(name, batch, level, sorted_pvalues=srt) if adaptive else None
        return _bh_closed_form(name, m, k_hat, alpha, level, m0_hat, tol)

    if method is Method.HYBRID:
        half = delta / 2.0
        bound = min(closed(Method.KR, half), closed(Method.WELLNER, half))
    else:
        bound = closed(method, delta)
    logger.debug("Cota BH | método=%s | adapt=%s | k_hat=%s | bound=%s", method, adaptive, k_hat, bound)
    return bound


def interpolated_bh_bound(
    method: Method,
    batch: PValueBatch,
    alpha: float,
    delta: float,
    adaptive: bool = False,
    *,
    sorted_pvalues: SortedPValues | None = None,
    tol: ToleranceConfig = DEFAULT_TOLERANCE,
) -> float:
    """Envelope interpolado avaliado em k̂_α (0 quando k̂_α = 0)."""
    _check_level("α", alpha)
    srt = sorted_pvalues or batch.sort()
    k_hat = _bh_k_hat(srt.ordered, alpha)
    if k_hat == 0:
        return 0.0
    env = envelope_variant(method, batch, delta, adaptive=adaptive, interpolated=True, sorted_pvalues=srt, tol=tol)
    return float(env.bounds[k_hat - 1])


def envelope_variant(
    method: Method,
    batch: PValueBatch,
    delta: float,
    *,
    adaptive: bool = False,
    interpolated: bool = False,
    sorted_pvalues: SortedPValues | None = None,
    tol: ToleranceConfig = DEFAULT_TOLERANCE,
) -> Envelope:
    """Envelope completo (k = 1…m) para uma variante bruta/adaptativa/interpolada."""
    srt = sorted_pvalues or batch.sort()
    if adaptive:
        env = adaptive_envelope(method, batch, delta, sorted_pvalues=srt, tol=tol)
    else:
        env = topk_envelope(method, batch, delta, sorted_pvalues=srt, tol=tol)
    if interpolated:
        # desempate estável: |R_k| = k
        env = interpolate(env, np.arange(1, batch.m + 1))
    return env
