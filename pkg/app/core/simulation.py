"""
Geradores de dados sintéticos, FDP de oráculo e verificações de Monte Carlo
das desigualdades martingais usadas pelos envelopes.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import brentq

from app.core.errors import ConvergenceError, DomainError, MissingLabelsError, ShapeMismatchError
from app.core.numerics import freedman_delta, gauss_upper_cdf, gauss_upper_quantile, stitched_freedman_bound
from app.models.experiment import GaussianLocationConfig, OnlineMixtureConfig, VctConfig
from app.models.preordered import PreorderedData
from app.models.pvalues import PValueBatch
from app.models.tolerance import DEFAULT_TOLERANCE, ToleranceConfig
from app.services.rng import SeedLike, make_rng

logger = logging.getLogger(__name__)

# limite inferior da busca em escala log por t♯/t*
_LOG_T_FLOOR = math.log(1e-200)
_T_CEIL = float(np.nextafter(1.0, 0.0))

# caminhos simulados por bloco na verificação de Freedman
_PATH_CHUNK = 256


# ---------------------------------------------------------------------------
# Geradores
# ---------------------------------------------------------------------------


def gen_gaussian_topk(cfg: GaussianLocationConfig, seed: SeedLike) -> PValueBatch:
    """
    m₁ alternativas com X ~ N(μ_m, 1) e m₀ nulas N(0, 1); p_i = Φ̄(X_i).

    As alternativas ocupam os m₁ primeiros índices (irrelevante no caminho top-k).
    """
    rng = make_rng(seed)
    x = rng.standard_normal(cfg.m)
    x[: cfg.m1] += cfg.mu_m
    labels = np.zeros(cfg.m, dtype=bool)
    labels[: cfg.m1] = True
    return PValueBatch(values=gauss_upper_cdf(x), labels=labels)


def signal_probabilities(cfg: VctConfig, m: int) -> np.ndarray:
    """π_m(k) = π(m^β·k/m) para k = 1…m."""
    ks = np.arange(1, m + 1, dtype=np.float64)
    return np.clip(cfg.pi_curve.density(m**cfg.beta * ks / m), 0.0, 1.0)


def gen_vct(cfg: VctConfig, m: int, seed: SeedLike, *, s: float = 0.5, lam: float = 0.5) -> PreorderedData:
    """H_k ~ Bernoulli(π(m^β·k/m)) independentes; p-valores de F₀/F₁ na ordem do caminho."""
    if m < 1:
        msg = f"m deve ser ≥ 1, recebido {m}"
        raise DomainError(msg)
    rng = make_rng(seed)
    labels = rng.random(m) < signal_probabilities(cfg, m)
    nulls = cfg.null_law.sample(rng, m)
    alternatives = cfg.alt_law.sample(rng, m)
    pvalues = np.where(labels, alternatives, nulls)
    return PreorderedData(pvalues=pvalues, s=s, lam=lam, labels=labels)


def gen_online_mixture(cfg: OnlineMixtureConfig, seed: SeedLike, length: int | None = None) -> PValueBatch:
    """Fluxo i.i.d.: alternativa com probabilidade π₁ e X ~ N(μ, 1), nula N(0, 1)."""
    n = cfg.length if length is None else length
    if n < 1:
        msg = f"o fluxo precisa de ao menos um passo, recebido {n}"
        raise DomainError(msg)
    rng = make_rng(seed)
    labels = rng.random(n) < cfg.pi1
    x = rng.standard_normal(n) + np.where(labels, cfg.mu, 0.0)
    return PValueBatch(values=gauss_upper_cdf(x), labels=labels)


# ---------------------------------------------------------------------------
# Oráculos
# ---------------------------------------------------------------------------


def _path_labels(labels: ArrayLike | None, order: ArrayLike | None, size: int) -> np.ndarray:
    if labels is None:
        msg = "a FDP verdadeira exige rótulos"
        raise MissingLabelsError(msg)
    truth = np.asarray(labels, dtype=bool)
    idx = np.arange(truth.size) if order is None else np.asarray(order, dtype=np.int64)
    if idx.size != size:
        msg = f"ordem com {idx.size} elementos para um caminho de {size}"
        raise ShapeMismatchError(msg)
    return truth[idx]


def true_fdp(labels: ArrayLike | None, order: ArrayLike | None, selected: ArrayLike) -> np.ndarray:
    """
    FDP(R_k) = |R_k ∩ H₀| / (|R_k| ∨ 1) para caminhos encaixados.

    ``order[k]`` é a hipótese na posição k do caminho e ``selected[k]`` diz se ela
    entra em R_k (sempre True no top-k). Rótulos: True para alternativa.
    """
    chosen = np.asarray(selected, dtype=bool)
    truth = _path_labels(labels, order, chosen.size)
    false_hits = np.cumsum(chosen & ~truth)
    sizes = np.cumsum(chosen)
    return false_hits / np.maximum(sizes, 1)


def oracle_false_discoveries(
    pvalues: ArrayLike,
    labels: ArrayLike | None,
    ordering: ArrayLike | None,
    critical_values: ArrayLike,
) -> np.ndarray:
    """Σ_{i≤k} (1 − H_π(i))·1{p_π(i) ≤ α_i}."""
    alphas = np.asarray(critical_values, dtype=np.float64)
    truth = _path_labels(labels, ordering, alphas.size)
    p = np.asarray(pvalues, dtype=np.float64)
    path_p = p if ordering is None else p[np.asarray(ordering, dtype=np.int64)]
    return np.cumsum(~truth & (path_p <= alphas))


def oracle_vbar(
    pvalues: ArrayLike,
    labels: ArrayLike | None,
    ordering: ArrayLike | None,
    critical_values: ArrayLike,
    lam: float,
    delta: float,
) -> np.ndarray:
    """
    V̄_k = Σ(1 − H)·1{p > λ}·α_i/(1 − λ) + Δ(Σ(1 − H)·ν_i), ν_i = α_i(1 + min(α_i, λ)/(1 − λ)).

    Com probabilidade ≥ 1 − δ, V̄_k domina o número de falsas descobertas em todo k.
    """
    if not 0.0 <= lam < 1.0:
        msg = f"λ deve estar em [0, 1), recebido {lam}"
        raise DomainError(msg)
    alphas = np.asarray(critical_values, dtype=np.float64)
    truth = _path_labels(labels, ordering, alphas.size)
    p = np.asarray(pvalues, dtype=np.float64)
    path_p = p if ordering is None else p[np.asarray(ordering, dtype=np.int64)]
    null = ~truth
    estimated = np.cumsum(null * (path_p > lam) * alphas / (1.0 - lam))
    nu = alphas * (1.0 + np.minimum(alphas, lam) / (1.0 - lam))
    return estimated + freedman_delta(np.cumsum(null * nu), delta)


def freedman_violation_rate(
    n_paths: int,
    length: int,
    delta: float,
    seed: SeedLike,
    *,
    q: float = 0.5,
) -> float:
    """
    Frequência de {∃k : S_k > cota de Freedman costurada} para martingais com
    incrementos ξ_i = Bernoulli(q) − q ≤ 1 e variância condicional q(1 − q).
    """
    if not 0.0 < q < 1.0:
        msg = f"q deve estar em (0, 1), recebido {q}"
        raise DomainError(msg)
    rng = make_rng(seed)
    variance = q * (1.0 - q) * np.arange(1, length + 1, dtype=np.float64)
    threshold = stitched_freedman_bound(variance, 1.0, delta)
    violations = 0
    done = 0
    while done < n_paths:
        chunk = min(_PATH_CHUNK, n_paths - done)
        steps = (rng.random((chunk, length)) < q).astype(np.float64) - q
        paths = np.cumsum(steps, axis=1)
        violations += int(np.count_nonzero(np.any(paths > threshold, axis=1)))
        done += chunk
    rate = violations / n_paths
    logger.debug("Freedman MC | paths=%s | n=%s | delta=%s | taxa=%s", n_paths, length, delta, rate)
    return rate


# ---------------------------------------------------------------------------
# Limiares teóricos do BH
# ---------------------------------------------------------------------------


def bh_signal_cdf(cfg: GaussianLocationConfig, t: ArrayLike) -> np.ndarray:
    """G_m(t) = (m₀/m)·t + (m₁/m)·Φ̄(Φ̄⁻¹(t) − μ_m)."""
    ts = np.asarray(t, dtype=np.float64)
    alt = gauss_upper_cdf(gauss_upper_quantile(ts) - cfg.mu_m)
    return (cfg.m0 / cfg.m) * ts + (cfg.m1 / cfg.m) * alt


def _solve_slope(cfg: GaussianLocationConfig, slope: float, tol: ToleranceConfig) -> float:
    """Raiz de G_m(t) = slope·t em (0, 1]; 1 quando G_m(t) ≥ slope·t em todo o intervalo."""
    log_slope = math.log(slope)

    def gap(u: float) -> float:
        return math.log(float(bh_signal_cdf(cfg, min(math.exp(u), _T_CEIL)))) - log_slope - u

    if gap(0.0) >= 0.0:
        return 1.0
    if not gap(_LOG_T_FLOOR) > 0.0:
        msg = f"G_m(t) = {slope:.6g}·t sem mudança de sinal em (0, 1]"
        raise ConvergenceError(msg)
    rtol = max(tol.rel_tol, 4 * np.finfo(float).eps)
    root = brentq(gap, _LOG_T_FLOOR, 0.0, xtol=1e-14, rtol=rtol, maxiter=tol.max_iter)
    return math.exp(root)


def bh_theoretical_threshold(
    cfg: GaussianLocationConfig,
    alpha: float,
    tol: ToleranceConfig = DEFAULT_TOLERANCE,
) -> tuple[float, float]:
    """
    (t*, t♯): raízes de G_m(t) = 2t/α e G_m(t) = 0.5t/α.

    Ψ_m(t) = G_m(t)/t é decrescente, logo t* ≤ t♯; t♯ = 1 quando 0.5/α ≤ 1.
    """
    if not 0.0 < alpha < 1.0:
        msg = f"α deve estar em (0, 1), recebido {alpha}"
        raise DomainError(msg)
    t_star = _solve_slope(cfg, 2.0 / alpha, tol)
    t_sharp = _solve_slope(cfg, 0.5 / alpha, tol)
    logger.debug("Limiar BH | m=%s | alpha=%s | t_star=%s | t_sharp=%s", cfg.m, alpha, t_star, t_sharp)
    return t_star, t_sharp
