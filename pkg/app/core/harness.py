"""
Experimentos replicados: gera dados, roda o procedimento de referência
(BH, LF ou LORD), avalia as cotas e agrega quartis e cobertura por célula.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np
import pandas as pd
from tqdm import tqdm

from app.core.errors import InsufficientGridError, ReplicationError
from app.core.online import online_envelope_path, run_lord
from app.core.preordered import lf_fdp_bound, lf_select, preordered_envelope_variant
from app.core.simulation import gen_gaussian_topk, gen_online_mixture, gen_vct, true_fdp
from app.core.topk import bh_fdp_bound, bh_select, envelope_variant, m0_upper
from app.models.experiment import ConsistencySeries, ExperimentConfig, SummaryRow
from app.models.online import SpendingSequence
from app.models.preordered import PreorderedData
from app.models.pvalues import PATH_METHODS, Method, MethodVariant, PValueBatch, SortedPValues
from app.models.tolerance import DEFAULT_TOLERANCE, ToleranceConfig
from app.services.csv_io import trajectory_frame
from app.services.rng import replication_rng

logger = logging.getLogger(__name__)

_TINY = float(np.nextafter(0.0, 1.0))

# (m, α, variante, replicação, cota, coberto, rejeições, π̂₀, segundos)
Record = tuple[int, float, str, int, float, float, int, float, float]


def _active_variants(cfg: ExperimentConfig, m: int) -> list[MethodVariant]:
    return [v for v in cfg.variants if not (v.interpolated and m > cfg.interp_max_m)]


def _covers(fdp: np.ndarray, bounds: np.ndarray) -> float:
    return float(np.all(fdp <= bounds))


# ---------------------------------------------------------------------------
# Uma replicação por regime
# ---------------------------------------------------------------------------


def _replicate_topk(cfg: ExperimentConfig, m: int, rep: int, tol: ToleranceConfig) -> list[Record]:
    batch = gen_gaussian_topk(cfg.gaussian.with_m(m), replication_rng(cfg.seed, m, rep))
    srt = batch.sort()
    fdp = true_fdp(batch.labels, srt.perm, np.ones(m, dtype=bool)) if cfg.compute_coverage else None
    k_hats = {alpha: bh_select(batch, alpha, sorted_pvalues=srt) for alpha in cfg.alpha_grid}
    records: list[Record] = []
    for variant in _active_variants(cfg, m):
        start = time.perf_counter()
        env = None
        if variant.interpolated or fdp is not None:
            env = envelope_variant(
                variant.method,
                batch,
                cfg.delta,
                adaptive=variant.adaptive,
                interpolated=variant.interpolated,
                sorted_pvalues=srt,
                tol=tol,
            )
        covered = _covers(fdp, env.bounds) if fdp is not None else math.nan
        pi0_hat = math.nan
        if variant.adaptive:
            m_eff = env.m_eff if env is not None else _adaptive_m0(variant.method, batch, cfg.delta, srt)
            pi0_hat = m_eff / m
        shared = (time.perf_counter() - start) / len(cfg.alpha_grid)

        for alpha in cfg.alpha_grid:
            tick = time.perf_counter()
            k_hat = k_hats[alpha]
            if variant.interpolated:
                bound = float(env.bounds[k_hat - 1]) if k_hat > 0 else 0.0
            else:
                bound = bh_fdp_bound(
                    variant.method, batch, alpha, cfg.delta, variant.adaptive, sorted_pvalues=srt, tol=tol
                )
            elapsed = shared + time.perf_counter() - tick
            records.append((m, alpha, variant.tag, rep, bound, covered, k_hat, pi0_hat, elapsed))
    return records


def _adaptive_m0(method: Method, batch: PValueBatch, delta: float, srt: SortedPValues) -> float:
    if method is Method.HYBRID:
        half = delta / 2.0
        return max(
            m0_upper(Method.KR, batch, half, sorted_pvalues=srt),
            m0_upper(Method.WELLNER, batch, half, sorted_pvalues=srt),
        )
    return m0_upper(method, batch, delta, sorted_pvalues=srt)


def _replicate_preordered(cfg: ExperimentConfig, m: int, rep: int, tol: ToleranceConfig) -> list[Record]:
    del tol
    base = gen_vct(cfg.vct, m, replication_rng(cfg.seed, m, rep), s=cfg.threshold_s(cfg.alpha_grid[0]), lam=cfg.lam)
    variants = _active_variants(cfg, m)
    records: list[Record] = []
    coverage_cache: dict[tuple[float, str], tuple[float, np.ndarray]] = {}
    for alpha in cfg.alpha_grid:
        s = cfg.threshold_s(alpha)
        data = PreorderedData(pvalues=base.pvalues, s=s, lam=cfg.lam, labels=base.labels)
        selection = lf_select(data, alpha)
        fdp = true_fdp(data.labels, None, data.pvalues <= s) if cfg.compute_coverage else None
        for variant in variants:
            start = time.perf_counter()
            key = (s, variant.tag)
            if key not in coverage_cache and (variant.interpolated or fdp is not None):
                env = preordered_envelope_variant(variant.method, data, cfg.delta, interpolated=variant.interpolated)
                covered = _covers(fdp, env.bounds) if fdp is not None else math.nan
                coverage_cache[key] = (covered, env.bounds)
            covered, bounds = coverage_cache.get(key, (math.nan, None))
            if variant.interpolated:
                bound = float(bounds[selection.k_hat - 1]) if selection.k_hat > 0 else 0.0
            else:
                bound = lf_fdp_bound(variant.method, data, alpha, cfg.delta)
            elapsed = time.perf_counter() - start
            records.append((m, alpha, variant.tag, rep, bound, covered, selection.r_hat, math.nan, elapsed))
    return records


def _replicate_online(cfg: ExperimentConfig, m: int, rep: int, tol: ToleranceConfig) -> list[Record]:
    del tol
    stream = gen_online_mixture(cfg.online, replication_rng(cfg.seed, m, rep), length=m)
    variants = _active_variants(cfg, m)
    records: list[Record] = []
    for alpha in cfg.alpha_grid:
        trajectory = run_lord(stream.values, alpha, w0=cfg.w0_fraction * alpha, gamma=cfg.gamma)
        fdp = true_fdp(stream.labels, None, trajectory.rejected) if cfg.compute_coverage else None
        for variant in variants:
            start = time.perf_counter()
            env = online_envelope_path(variant.method, trajectory, cfg.delta, interpolated=variant.interpolated)
            covered = _covers(fdp, env.bounds) if fdp is not None else math.nan
            elapsed = time.perf_counter() - start
            rejections = trajectory.final_state.r
            records.append((m, alpha, variant.tag, rep, float(env.bounds[-1]), covered, rejections, math.nan, elapsed))
    return records


_REPLICATORS = {
    "topk": _replicate_topk,
    "preordered": _replicate_preordered,
    "online": _replicate_online,
}


def run_replication(
    cfg: ExperimentConfig,
    unit: tuple[int, int],
    tol: ToleranceConfig = DEFAULT_TOLERANCE,
) -> list[Record]:
    """Uma replicação (m, rep); qualquer falha aborta o experimento com ReplicationError."""
    m, rep = unit
    try:
        return _REPLICATORS[cfg.setting](cfg, m, rep, tol)
    except Exception as e:
        raise ReplicationError(cfg.setting, m, rep, reason=f"{type(e).__name__}: {e}") from e


# ---------------------------------------------------------------------------
# Execução e agregação
# ---------------------------------------------------------------------------


def _units(cfg: ExperimentConfig) -> list[tuple[int, int]]:
    return [(m, rep) for m in cfg.m_grid for rep in range(cfg.replications)]


def _collect(cfg: ExperimentConfig, tol: ToleranceConfig, progress: bool) -> Iterable[list[Record]]:
    units = _units(cfg)
    worker = partial(run_replication, cfg, tol=tol)
    bar = {"total": len(units), "desc": f"{cfg.setting}", "disable": None if progress else True}
    if cfg.workers == 1:
        yield from tqdm(map(worker, units), **bar)
        return
    chunk = max(1, len(units) // (8 * cfg.workers))
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        yield from tqdm(pool.map(worker, units, chunksize=chunk), **bar)


def replication_frame(records: Sequence[Record], cfg: ExperimentConfig) -> pd.DataFrame:
    """Registros brutos em ordem determinística (m, α, método, replicação)."""
    frame = pd.DataFrame.from_records(
        records,
        columns=["m", "alpha", "method", "rep", "bound", "covered", "rejections", "pi0_hat", "seconds"],
    )
    rank = {variant.tag: i for i, variant in enumerate(cfg.variants)}
    frame["method_rank"] = frame["method"].map(rank)
    return frame.sort_values(["m", "alpha", "method_rank", "rep"], kind="stable").reset_index(drop=True)


def _optional(value: float) -> float | None:
    return None if math.isnan(value) else float(value)


def summarize(frame: pd.DataFrame) -> list[SummaryRow]:
    rows: list[SummaryRow] = []
    for (m, alpha, method), cell in frame.groupby(["m", "alpha", "method"], sort=False):
        bounds = cell["bound"].to_numpy()
        q25, median, q75 = np.quantile(bounds, [0.25, 0.5, 0.75])
        covered = cell["covered"].to_numpy()
        rate = se = math.nan
        if not np.isnan(covered).any():
            rate = float(covered.mean())
            se = math.sqrt(rate * (1.0 - rate) / covered.size)
        pi0 = cell["pi0_hat"].to_numpy()
        pi0_median = float(np.median(pi0)) if not np.isnan(pi0).all() else math.nan
        rows.append(
            SummaryRow(
                m=int(m),
                alpha=float(alpha),
                method=str(method),
                q25=float(q25),
                median=float(median),
                q75=float(q75),
                coverage_rate=_optional(rate),
                coverage_se=_optional(se),
                mean_rejections=float(cell["rejections"].mean()),
                pi0_hat=_optional(pi0_median),
                wall_time=float(cell["seconds"].sum()),
            )
        )
    return rows


def run_experiment(
    cfg: ExperimentConfig,
    *,
    tol: ToleranceConfig = DEFAULT_TOLERANCE,
    progress: bool = True,
) -> list[SummaryRow]:
    """
    Executa todas as células (m, α, método) do experimento e devolve uma linha por célula.

    O resultado não depende do número de processos: cada replicação tem seu próprio
    gerador e a agregação ocorre após a ordenação determinística dos registros.
    """
    skipped = [v.tag for v in cfg.variants if v.interpolated and max(cfg.m_grid) > cfg.interp_max_m]
    if skipped:
        logger.warning("Variantes interpoladas omitidas para m > %s | métodos=%s", cfg.interp_max_m, skipped)
    logger.info(
        "Experimento | setting=%s | m=%s | alpha=%s | reps=%s | workers=%s",
        cfg.setting,
        cfg.m_grid,
        cfg.alpha_grid,
        cfg.replications,
        cfg.workers,
    )
    records = [record for batch in _collect(cfg, tol, progress) for record in batch]
    rows = summarize(replication_frame(records, cfg))
    logger.info("Experimento concluído | células=%s", len(rows))
    return rows


# ---------------------------------------------------------------------------
# Consistência
# ---------------------------------------------------------------------------


def consistency_curve(rows: Sequence[SummaryRow]) -> list[ConsistencySeries]:
    """
    Série (m, mediana − α) por (método, α) e a inclinação do ajuste log-log de |gap| contra m.
    """
    grid = sorted({row.m for row in rows})
    if len(grid) < 3:
        msg = f"a curva de consistência exige ao menos 3 valores de m, recebidos {len(grid)}"
        raise InsufficientGridError(msg)

    series: list[ConsistencySeries] = []
    groups: dict[tuple[str, float], list[SummaryRow]] = {}
    for row in rows:
        groups.setdefault((row.method, row.alpha), []).append(row)
    for (method, alpha), members in groups.items():
        ordered = sorted(members, key=lambda r: r.m)
        ms = np.array([r.m for r in ordered], dtype=np.float64)
        gaps = np.array([r.median - alpha for r in ordered])
        slope = math.nan
        if ms.size >= 3:
            slope = float(np.polyfit(np.log(ms), np.log(np.maximum(np.abs(gaps), _TINY)), 1)[0])
        series.append(
            ConsistencySeries(
                method=method,
                alpha=alpha,
                m=[int(m) for m in ms],
                gap=[float(g) for g in gaps],
                slope=slope,
            )
        )
        logger.debug("Consistência | método=%s | alpha=%s | slope=%s", method, alpha, slope)
    return series


# ---------------------------------------------------------------------------
# Dados reais e dumps
# ---------------------------------------------------------------------------


def real_data_trajectories(
    batch: PValueBatch,
    alpha_grid: Sequence[float],
    delta: float,
    *,
    w0_fraction: float = 0.5,
    gamma: SpendingSequence | None = None,
) -> pd.DataFrame:
    """LORD sobre um fluxo observado para cada α, com as três cotas por passo."""
    frames = []
    for alpha in alpha_grid:
        trajectory = run_lord(batch.values, alpha, w0=w0_fraction * alpha, gamma=gamma)
        bounds = {method: online_envelope_path(method, trajectory, delta).bounds for method in PATH_METHODS}
        frames.append(trajectory_frame(trajectory, bounds, alpha=alpha))
        logger.info("Dados reais | alpha=%s | n=%s | rejeições=%s", alpha, len(trajectory), trajectory.final_state.r)
    return pd.concat(frames, ignore_index=True)


def generated_data(cfg: ExperimentConfig, m: int, rep: int = 0) -> PValueBatch:
    """Os mesmos dados que a replicação (m, rep) usa, para o dump ``index,pvalue,label``."""
    rng = replication_rng(cfg.seed, m, rep)
    match cfg.setting:
        case "topk":
            return gen_gaussian_topk(cfg.gaussian.with_m(m), rng)
        case "preordered":
            data = gen_vct(cfg.vct, m, rng, s=cfg.threshold_s(cfg.alpha_grid[0]), lam=cfg.lam)
            return PValueBatch(values=data.pvalues, labels=data.labels)
        case _:
            return gen_online_mixture(cfg.online, rng, length=m)
