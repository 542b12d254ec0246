"""
Caminho online: valores críticos do LORD, condição de mFDR e envelopes
Freedman, KR e KR-U mantidos passo a passo.
"""

from __future__ import annotations

import logging

import numpy as np
from numpy.typing import ArrayLike

from app.core.errors import DomainError
from app.core.numerics import freedman_delta, kru_online_factor, union_delta
from app.core.topk import interpolate
from app.models.online import OnlineState, OnlineTrajectory, SpendingSequence
from app.models.pvalues import PATH_METHODS, Envelope, Method

logger = logging.getLogger(__name__)

# folga relativa de arredondamento na verificação Σα_i ≤ α(1 ∨ R)
MFDR_SLACK = 1e-12


def _check_level(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        msg = f"{name} deve estar em (0, 1), recebido {value}"
        raise DomainError(msg)


def initial_state(alpha: float, w0: float | None = None, gamma: SpendingSequence | None = None) -> OnlineState:
    """Estado antes do primeiro teste; W₀ = α/2 por padrão."""
    _check_level("α", alpha)
    wealth = alpha / 2.0 if w0 is None else w0
    if not 0.0 <= wealth <= alpha:
        msg = f"W₀ deve estar em [0, α], recebido {wealth}"
        raise DomainError(msg)
    return OnlineState(alpha_level=alpha, w0=wealth, gamma=gamma or SpendingSequence())


def _lord_alpha(k: int, times: np.ndarray, w0: float, alpha: float, gamma: SpendingSequence) -> float:
    value = w0 * gamma.at(k)
    if times.size:
        spent = gamma.values(k - times)
        value += (alpha - w0) * float(spent[0])
        if times.size > 1:
            value += alpha * float(np.sum(spent[1:]))
    return value


def lord_next_alpha(state: OnlineState) -> float:
    """α_k = W₀γ_k + (α − W₀)γ_{k−τ₁} + α Σ_{j≥2} γ_{k−τ_j} para o próximo passo k."""
    times = np.asarray(state.rejection_times, dtype=np.int64)
    return _lord_alpha(state.k + 1, times, state.w0, state.alpha_level, state.gamma)


def online_step(state: OnlineState, p: float, alpha_k: float | None = None) -> tuple[bool, OnlineState]:
    """
    Processa um p-valor: α_k vem do LORD (ou de ``alpha_k``) antes de olhar p.
    """
    if not 0.0 <= p <= 1.0:
        msg = f"p-valor fora de [0, 1]: {p}"
        raise DomainError(msg)
    critical = lord_next_alpha(state) if alpha_k is None else float(alpha_k)
    k = state.k + 1
    rejected = p <= critical
    update: dict[str, object] = {"k": k, "alpha_sum": state.alpha_sum + critical}
    if rejected:
        update["r"] = state.r + 1
        update["rejection_times"] = (*state.rejection_times, k)
    return rejected, state.model_copy(update=update)


def check_mfdr_condition(state: OnlineState) -> bool:
    """Σ_{i≤k} α_i ≤ α(1 ∨ R(k))."""
    return state.alpha_sum <= state.alpha_level * max(1, state.r) * (1.0 + MFDR_SLACK)


def run_lord(
    pvalues: ArrayLike,
    alpha: float,
    w0: float | None = None,
    gamma: SpendingSequence | None = None,
) -> OnlineTrajectory:
    """Executa o LORD sobre um fluxo inteiro; idêntico bit a bit a repetir ``online_step``."""
    stream = np.asarray(pvalues, dtype=np.float64)
    if stream.ndim != 1 or not np.all((stream >= 0.0) & (stream <= 1.0)):
        msg = "o fluxo deve ser um vetor de p-valores em [0, 1]"
        raise DomainError(msg)
    state = initial_state(alpha, w0, gamma)
    n = stream.size
    critical = np.empty(n)
    rejected = np.zeros(n, dtype=bool)
    alpha_sum = np.empty(n)
    times = np.empty(n, dtype=np.int64)
    r = 0
    running = 0.0
    for i in range(n):
        k = i + 1
        a_k = _lord_alpha(k, times[:r], state.w0, alpha, state.gamma)
        critical[i] = a_k
        running = running + a_k
        alpha_sum[i] = running
        if stream[i] <= a_k:
            rejected[i] = True
            times[r] = k
            r += 1

    final = OnlineState(
        alpha_level=alpha,
        w0=state.w0,
        gamma=state.gamma,
        k=n,
        alpha_sum=running,
        r=r,
        rejection_times=tuple(int(t) for t in times[:r]),
    )
    logger.debug("LORD | n=%s | alpha=%s | rejeições=%s", n, alpha, r)
    return OnlineTrajectory(
        pvalues=stream,
        alpha_k=critical,
        rejected=rejected,
        rejections=np.cumsum(rejected, dtype=np.int64),
        alpha_sum=alpha_sum,
        final_state=final,
    )


def mfdr_path(trajectory: OnlineTrajectory) -> np.ndarray:
    """Condição de mFDR avaliada em cada passo da trajetória."""
    alpha = trajectory.final_state.alpha_level
    return trajectory.alpha_sum <= alpha * np.maximum(trajectory.rejections, 1) * (1.0 + MFDR_SLACK)


# ---------------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------------


def kru_window(r: ArrayLike) -> np.ndarray:
    """Faixa de busca {1..⌈2√(1 ∨ R)⌉} do KR-U online."""
    return np.ceil(2.0 * np.sqrt(np.maximum(np.asarray(r, dtype=np.float64), 1.0))).astype(np.int64)


def _online_bounds(method: Method, alpha_sum: np.ndarray, r: np.ndarray, delta: float) -> np.ndarray:
    denominator = np.maximum(r, 1).astype(np.float64)
    match method:
        case Method.FREEDMAN:
            values = (alpha_sum + freedman_delta(alpha_sum, delta)) / denominator
        case Method.KR:
            values = kru_online_factor(1, delta) * (1.0 + alpha_sum) / denominator
        case Method.KRU:
            windows = kru_window(r)
            a_grid = np.arange(1, int(windows.max(initial=1)) + 1, dtype=np.float64)
            factors = kru_online_factor(a_grid, union_delta(delta, a_grid))
            best = np.empty_like(alpha_sum)
            for w in np.unique(windows):
                rows = windows == w
                grid = factors[:w] * (a_grid[:w] + alpha_sum[rows, None])
                best[rows] = grid.min(axis=1)
            values = best / denominator
        case _:
            msg = f"método {method} não define envelope online"
            raise DomainError(msg)
    return np.minimum(1.0, values)


def online_envelope(method: Method, state: OnlineState, delta: float) -> float:
    """Cota no passo atual a partir de (Σα_i, R(k))."""
    _check_level("δ", delta)
    value = _online_bounds(method, np.array([state.alpha_sum]), np.array([state.r]), delta)
    return float(value[0])


def online_envelope_path(
    method: Method,
    trajectory: OnlineTrajectory,
    delta: float,
    *,
    interpolated: bool = False,
) -> Envelope:
    """Envelope em todos os passos k = 1…n da trajetória."""
    if method not in PATH_METHODS:
        msg = f"método {method} não define envelope online"
        raise DomainError(msg)
    _check_level("δ", delta)
    bounds = _online_bounds(method, trajectory.alpha_sum, trajectory.rejections, delta)
    env = Envelope(bounds=bounds, method=method, delta=delta)
    if interpolated:
        env = interpolate(env, trajectory.rejections)
    return env


def lord_fdp_bound(method: Method, r: int, alpha: float, delta: float) -> float:
    """Cotas da FDP do procedimento sob a condição de mFDR, dadas R rejeições."""
    _check_level("α", alpha)
    _check_level("δ", delta)
    if r < 0:
        msg = f"número de rejeições inválido: {r}"
        raise DomainError(msg)
    rr = max(1, r)
    match method:
        case Method.KR:
            bound = kru_online_factor(1, delta) * (alpha + 1.0 / rr)
        case Method.FREEDMAN:
            bound = alpha + freedman_delta(alpha * rr, delta) / rr
        case Method.KRU:
            a_grid = np.arange(1, rr + 1, dtype=np.float64)
            factors = kru_online_factor(a_grid, union_delta(delta, a_grid))
            bound = float(np.min(factors * (alpha + a_grid / rr)))
        case _:
            msg = f"método {method} sem forma fechada online"
            raise DomainError(msg)
    return min(1.0, float(bound))


def consistency_limit(method: Method, alpha: float, delta: float) -> float:
    """Limite inferior c·α do KR (inconsistente); α para Freedman e KR-U."""
    if method is Method.KR:
        return min(1.0, kru_online_factor(1, delta) * alpha)
    return alpha


def envelope_at_steps(
    method: Method,
    trajectory: OnlineTrajectory,
    delta: float,
    steps: ArrayLike,
) -> np.ndarray:
    """Envelope avaliado em passos k selecionados (base 1)."""
    ks = np.asarray(steps, dtype=np.int64)
    if np.any((ks < 1) | (ks > len(trajectory))):
        msg = "passos fora da trajetória"
        raise DomainError(msg)
    idx = ks - 1
    return _online_bounds(method, trajectory.alpha_sum[idx], trajectory.rejections[idx], delta)


