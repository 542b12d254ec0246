"""
Leitura e escrita de CSV (pandas): p-valores de entrada, tabelas de resumo,
trajetórias online e dumps de dados gerados.
"""

from __future__ import annotations

import logging
import sys
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np
import pandas as pd

from app.core.errors import MalformedRowError
from app.models.experiment import ConsistencySeries, SummaryRow
from app.models.online import OnlineTrajectory
from app.models.pvalues import Method, PValueBatch

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

SUMMARY_COLUMNS = [
    "m",
    "alpha",
    "method",
    "q25",
    "median",
    "q75",
    "coverage_rate",
    "coverage_se",
    "mean_rejections",
    "pi0_hat",
]
TRAJECTORY_COLUMNS = ["k", "alpha_k", "rejected", "R_k", "bound_freed", "bound_kr", "bound_kru"]
_BOUND_COLUMNS = {Method.FREEDMAN: "bound_freed", Method.KR: "bound_kr", Method.KRU: "bound_kru"}

_LABEL_VALUES = {
    "1": True,
    "true": True,
    "alternative": True,
    "0": False,
    "false": False,
    "null": False,
}


def _parse_float(raw: str, line: int) -> float:
    try:
        value = float(raw)
    except ValueError as e:
        msg = f"p-valor não numérico: {raw!r}"
        raise MalformedRowError(msg, line=line) from e
    if not 0.0 <= value <= 1.0:
        msg = f"p-valor fora de [0, 1]: {raw}"
        raise MalformedRowError(msg, line=line)
    return value


def _parse_label(raw: str, line: int) -> bool:
    key = raw.strip().lower()
    if key not in _LABEL_VALUES:
        msg = f"rótulo inválido: {raw!r} (use 0/1, true/false ou null/alternative)"
        raise MalformedRowError(msg, line=line)
    return _LABEL_VALUES[key]


def load_pvalues_csv(path: str | Path, *, column: str = "pvalue", require_index: bool = True) -> PValueBatch:
    """
    Lê ``index,pvalue[,label]`` com cabeçalho; os rótulos são opcionais.

    Erros de linha carregam o número da linha no arquivo (cabeçalho = 1).
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.ParserError as e:
        msg = f"CSV malformado: {e}"
        raise MalformedRowError(msg, line=0) from e
    except pd.errors.EmptyDataError as e:
        msg = "arquivo CSV vazio"
        raise MalformedRowError(msg, line=1) from e

    required = [column, "index"] if require_index else [column]
    missing = [name for name in required if name not in frame.columns]
    if missing:
        msg = f"colunas ausentes no cabeçalho: {', '.join(missing)}"
        raise MalformedRowError(msg, line=1)
    if frame.empty:
        msg = "o arquivo não contém p-valores"
        raise MalformedRowError(msg, line=2)
    # linhas curtas chegam como NaN mesmo com dtype=str
    short = frame[required].isna().any(axis=1).to_numpy()
    if short.any():
        msg = "linha com campos faltando"
        raise MalformedRowError(msg, line=int(np.flatnonzero(short)[0]) + 2)

    values = np.array([_parse_float(raw, i + 2) for i, raw in enumerate(frame[column])], dtype=np.float64)
    if require_index:
        for i, raw in enumerate(frame["index"]):
            if not raw.strip().lstrip("-").isdigit():
                msg = f"índice não inteiro: {raw!r}"
                raise MalformedRowError(msg, line=i + 2)

    labels = None
    # coluna de rótulos toda vazia equivale a ausente (dump sem oráculo)
    if "label" in frame.columns:
        raw_labels = frame["label"].fillna("")
        if raw_labels.str.strip().ne("").any():
            labels = np.array([_parse_label(raw, i + 2) for i, raw in enumerate(raw_labels)], dtype=bool)

    logger.info("CSV carregado | arquivo=%s | m=%s | rótulos=%s", path, values.size, labels is not None)
    return PValueBatch(values=values, labels=labels)


def emit_csv(table: pd.DataFrame, path: str | Path | None = None) -> None:
    """Escreve a tabela com 17 dígitos significativos; ``None`` escreve em stdout."""
    if path is None:
        table.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(target, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("CSV salvo | arquivo=%s | linhas=%s", target, len(table))


def read_table(path: str | Path) -> pd.DataFrame:
    """Lê uma tabela emitida por ``emit_csv`` sem perda de precisão."""
    return pd.read_csv(path, float_precision="round_trip")


def summary_frame(rows: Sequence[SummaryRow], *, timings: bool = False) -> pd.DataFrame:
    columns = [*SUMMARY_COLUMNS, "wall_time"] if timings else SUMMARY_COLUMNS
    records = [row.model_dump(include=set(columns)) for row in rows]
    return pd.DataFrame.from_records(records, columns=columns)


def rows_from_frame(frame: pd.DataFrame) -> list[SummaryRow]:
    """Reconstrói as linhas de resumo (entrada do ajuste de consistência)."""
    clean = frame.astype(object).where(frame.notna(), None)
    return [SummaryRow.model_validate(record) for record in clean.to_dict(orient="records")]


def consistency_frame(series: Sequence[ConsistencySeries]) -> pd.DataFrame:
    records = [
        {"method": s.method, "alpha": s.alpha, "m": m, "gap": gap, "slope": s.slope}
        for s in series
        for m, gap in zip(s.m, s.gap, strict=True)
    ]
    return pd.DataFrame.from_records(records, columns=["method", "alpha", "m", "gap", "slope"])


def trajectory_frame(
    trajectory: OnlineTrajectory,
    bounds: Mapping[Method, np.ndarray],
    *,
    alpha: float | None = None,
) -> pd.DataFrame:
    """Uma linha por passo do LORD com as três cotas; coluna ``alpha`` no modo de dados reais."""
    n = len(trajectory)
    data: dict[str, object] = {
        "k": np.arange(1, n + 1),
        "alpha_k": trajectory.alpha_k,
        "rejected": trajectory.rejected.astype(np.int64),
        "R_k": trajectory.rejections,
    }
    for method, name in _BOUND_COLUMNS.items():
        data[name] = bounds.get(method, np.full(n, np.nan))
    frame = pd.DataFrame(data, columns=TRAJECTORY_COLUMNS)
    if alpha is not None:
        frame.insert(0, "alpha", alpha)
    return frame


def dump_frame(batch: PValueBatch) -> pd.DataFrame:
    """Dados gerados no formato ``index,pvalue,label`` (label vazio sem rótulos)."""
    labels = batch.labels.astype(np.int64) if batch.labels is not None else [""] * batch.m
    return pd.DataFrame({"index": np.arange(batch.m), "pvalue": batch.values, "label": labels})


def load_stream(source: str | Path) -> PValueBatch:
    """Fluxo com um p-valor decimal por linha (sem cabeçalho); ``-`` lê de stdin."""
    if str(source) == "-":
        lines = sys.stdin.read().splitlines()
    else:
        lines = Path(source).read_text(encoding="utf-8").splitlines()
    values = [_parse_float(raw.strip(), i + 1) for i, raw in enumerate(lines) if raw.strip()]
    if not values:
        msg = "o fluxo não contém p-valores"
        raise MalformedRowError(msg, line=1)
    logger.info("Fluxo carregado | origem=%s | n=%s", source, len(values))
    return PValueBatch(values=np.array(values, dtype=np.float64))
