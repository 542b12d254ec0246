from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

import yaml
from colorama import Fore, Style
from colorama import init as colorama_init
from pydantic import ValidationError

from app.core.config import get_settings
from app.core.errors import ConfigFileError
from app.core.harness import consistency_curve, generated_data, real_data_trajectories, run_experiment
from app.core.logging import setup_logging
from app.models.experiment import ExperimentConfig, VctConfig
from app.models.online import SpendingSequence
from app.services.csv_io import (
    consistency_frame,
    dump_frame,
    emit_csv,
    load_pvalues_csv,
    load_stream,
    read_table,
    rows_from_frame,
    summary_frame,
)

# Inicializa colorama para Windows e TTYs
colorama_init(autoreset=True)

logger = logging.getLogger(__name__)

DEFAULT_M_GRID = {"topk": [200], "preordered": [500], "online": [5000]}
FULL_M_GRID = [100, 1_000, 10_000, 100_000, 1_000_000]
DEFAULT_ALPHA_GRID = [0.2]

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _status(message: str, color: str = Fore.GREEN) -> None:
    sys.stderr.write(f"{color}{message}{Style.RESET_ALL}\n")


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Lê um arquivo de experimento JSON (.json) ou YAML (.yaml/.yml)."""
    path_obj = Path(path)
    if not path_obj.exists():
        msg = f"arquivo de configuração não encontrado: {path}"
        raise ConfigFileError(msg)

    ext = path_obj.suffix.lower()
    with path_obj.open(encoding="utf-8") as f:
        if ext == ".json":
            data = json.load(f)
        elif ext in {".yaml", ".yml"}:
            data = yaml.safe_load(f)
        else:
            msg = f"formato de configuração não suportado: {ext or '(sem extensão)'}"
            raise ConfigFileError(msg)

    if not isinstance(data, dict):
        msg = "a configuração deve ser um objeto (mapa chave → valor)"
        raise ConfigFileError(msg)
    return data


def build_config(args: argparse.Namespace, setting: str) -> ExperimentConfig:
    """Arquivo de configuração (se houver) sobrescrito pelas flags explícitas."""
    settings = get_settings()
    data: dict[str, Any] = load_config_file(args.config) if args.config else {}
    data["setting"] = setting

    if args.m:
        data["m_grid"] = args.m
    elif args.full:
        data["m_grid"] = FULL_M_GRID
    data.setdefault("m_grid", DEFAULT_M_GRID[setting])
    if args.alpha:
        data["alpha_grid"] = args.alpha
    data.setdefault("alpha_grid", DEFAULT_ALPHA_GRID)

    overrides = {
        "delta": args.delta,
        "replications": args.reps,
        "seed": args.seed,
        "workers": args.workers,
        "lam": args.lam,
        "s": args.s,
        "s_alpha_multiple": args.s_alpha_multiple,
    }
    data.update({key: value for key, value in overrides.items() if value is not None})
    if args.methods:
        data["methods"] = args.methods
    if args.no_coverage:
        data["compute_coverage"] = False

    data.setdefault("delta", settings.default_delta)
    data.setdefault("replications", settings.default_replications)
    data.setdefault("seed", settings.default_seed)
    data.setdefault("workers", settings.workers)
    data.setdefault("interp_max_m", 10**9 if args.full else settings.interp_max_m)

    if args.raw_gamma:
        data["gamma"] = {**(data.get("gamma") or {}), "normalize": False}

    if setting == "topk" and (args.beta is not None or args.mu is not None):
        gaussian = dict(data.get("gaussian") or {"m": max(data["m_grid"])})
        if args.beta is not None:
            gaussian["beta"] = args.beta
        if args.mu is not None:
            gaussian["mu"] = args.mu
        data["gaussian"] = gaussian
    if setting == "preordered" and (args.vct_model is not None or args.beta is not None):
        beta = args.beta if args.beta is not None else 0.0
        preset = VctConfig.lf_setting if args.vct_model == "lf" else VctConfig.knockoff_setting
        data["vct"] = preset(beta).model_dump()

    return ExperimentConfig.model_validate(data)


def _experiment(args: argparse.Namespace, setting: str) -> int:
    cfg = build_config(args, setting)
    if args.dump:
        emit_csv(dump_frame(generated_data(cfg, cfg.m_grid[0])), args.dump)
    rows = run_experiment(cfg, tol=get_settings().tolerance(), progress=not args.quiet)
    table = summary_frame(rows, timings=args.timings)
    if args.command == "coverage":
        table = table[["m", "alpha", "method", "coverage_rate", "coverage_se"]]
    emit_csv(table, args.out)
    if args.out:
        _status(f"✔ {len(rows)} células salvas em {args.out}")
    return EXIT_OK


def cmd_topk(args: argparse.Namespace) -> int:
    return _experiment(args, "topk")


def cmd_preordered(args: argparse.Namespace) -> int:
    return _experiment(args, "preordered")


def cmd_online(args: argparse.Namespace) -> int:
    return _experiment(args, "online")


def cmd_coverage(args: argparse.Namespace) -> int:
    args.no_coverage = False
    return _experiment(args, args.setting)


def cmd_consistency(args: argparse.Namespace) -> int:
    if args.input:
        rows = rows_from_frame(read_table(args.input))
    else:
        cfg = build_config(args, args.setting)
        rows = run_experiment(cfg, tol=get_settings().tolerance(), progress=not args.quiet)
    series = consistency_curve(rows)
    emit_csv(consistency_frame(series), args.out)
    if args.out:
        _status(f"✔ {len(series)} séries salvas em {args.out}")
    return EXIT_OK


def cmd_real_data(args: argparse.Namespace) -> int:
    settings = get_settings()
    if args.format == "lines" or args.input == "-":
        batch = load_stream(args.input)
    else:
        batch = load_pvalues_csv(args.input, column=args.column, require_index=False)
    gamma = SpendingSequence(normalize=not args.raw_gamma)
    table = real_data_trajectories(
        batch,
        args.alpha or DEFAULT_ALPHA_GRID,
        args.delta if args.delta is not None else settings.default_delta,
        w0_fraction=args.w0_fraction,
        gamma=gamma,
    )
    emit_csv(table, args.out)
    if args.out:
        _status(f"✔ trajetória com {batch.m} passos salva em {args.out}")
    return EXIT_OK


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alpha", type=float, nargs="+", default=None, help="Níveis α (ex: 0.05 0.1 0.2)")
    common.add_argument("--delta", type=float, default=None, help="Nível δ dos envelopes (padrão 0.25)")
    common.add_argument("--raw-gamma", action="store_true", help="Não normaliza a sequência γ do LORD")
    common.add_argument("-o", "--out", default=None, help="Arquivo CSV de saída (padrão: stdout)")
    common.add_argument("--quiet", action="store_true", help="Esconde a barra de progresso")
    return common


def _experiment_options() -> argparse.ArgumentParser:
    exp = argparse.ArgumentParser(add_help=False)
    exp.add_argument("--m", type=int, nargs="+", default=None, help="Valores de m / comprimentos do fluxo")
    exp.add_argument("--reps", type=int, default=None, help="Replicações por célula (padrão 1000)")
    exp.add_argument(
        "--methods",
        nargs="+",
        default=None,
        help="Variantes: Simes, DKW, KR, Wellner, Hybrid, Freedman, KRU, com sufixos -adapt/-interp",
    )
    exp.add_argument("--seed", type=int, default=None, help="Semente mestra")
    exp.add_argument("--config", default=None, help="Arquivo de experimento (.json/.yaml)")
    exp.add_argument("--full", action="store_true", help="Grade completa m ∈ {10², …, 10⁶}, interpolação sem limite")
    exp.add_argument("--workers", type=int, default=None, help="Processos para as replicações")
    exp.add_argument("--timings", action="store_true", help="Inclui a coluna wall_time (não determinística)")
    exp.add_argument("--no-coverage", action="store_true", help="Não avalia o evento de cobertura")
    exp.add_argument("--beta", type=float, default=None, help="Esparsidade β do modelo")
    exp.add_argument("--mu", type=float, default=None, help="Sobrescreve μ_m no modelo top-k")
    exp.add_argument("--lam", type=float, default=None, help="Limiar λ (pré-ordenado)")
    exp.add_argument("--s", type=float, default=None, help="Limiar s fixo (pré-ordenado)")
    exp.add_argument("--s-alpha-multiple", type=float, default=None, help="s = múltiplo·α (pré-ordenado)")
    exp.add_argument(
        "--vct-model",
        choices=["knockoff", "lf"],
        default=None,
        help="Modelo pré-ordenado: knockoff (BC) ou lf (gaussiano, π exponencial)",
    )
    exp.add_argument("--dump", default=None, help="Salva os dados da replicação 0 (index,pvalue,label)")
    return exp


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="app",
        description=(
            "Envelopes de confiança para a FDP em caminhos top-k, pré-ordenados e online.\n\n"
            "Todas as saídas são CSV (stdout ou --out); erros saem como JSON em stderr."
        ),
        formatter_class=argparse.RawTextHelpFormatter,
    )
    parser.add_argument("--verbose", action="store_true", help="Ativa logs em nível DEBUG")

    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_options()
    exp = _experiment_options()

    p_topk = sub.add_parser("topk", parents=[common, exp], help="Cotas no BH (caminho top-k)")
    p_topk.set_defaults(func=cmd_topk)

    p_pre = sub.add_parser("preordered", parents=[common, exp], help="Cotas no LF/BC (caminho pré-ordenado)")
    p_pre.set_defaults(func=cmd_preordered)

    p_on = sub.add_parser("online", parents=[common, exp], help="Cotas no LORD (caminho online)")
    p_on.set_defaults(func=cmd_online)

    p_cov = sub.add_parser("coverage", parents=[common, exp], help="Cobertura uniforme em k por célula")
    p_cov.add_argument("--setting", choices=["topk", "preordered", "online"], default="topk", help="Regime")
    p_cov.set_defaults(func=cmd_coverage)

    p_cons = sub.add_parser("consistency", parents=[common, exp], help="Séries mediana − α e inclinação log-log")
    p_cons.add_argument("--setting", choices=["topk", "preordered", "online"], default="topk", help="Regime")
    p_cons.add_argument("--input", default=None, help="Tabela de resumo já calculada (CSV)")
    p_cons.set_defaults(func=cmd_consistency)

    p_real = sub.add_parser("real-data", parents=[common], help="LORD e envelopes sobre p-valores de um CSV")
    p_real.add_argument("input", help="CSV com uma coluna de p-valores, ou fluxo de uma linha por p-valor (- = stdin)")
    p_real.add_argument("--format", choices=["csv", "lines"], default="csv", help="Formato da entrada")
    p_real.add_argument("--column", default="pvalue", help="Nome da coluna de p-valores")
    p_real.add_argument("--w0-fraction", type=float, default=0.5, help="W₀ = fração·α")
    p_real.set_defaults(func=cmd_real_data)

    return parser


def _report_error(exc: BaseException) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    sys.stderr.write(json.dumps(payload, ensure_ascii=False) + "\n")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        settings = get_settings()
    except ValueError as e:
        # variável FDP_* inválida no ambiente ou no .env
        setup_logging(verbose=args.verbose)
        logger.exception("Ambiente inválido")
        _report_error(e)
        _status("✖ configuração inválida", Fore.RED)
        return EXIT_CONFIG

    setup_logging(verbose=args.verbose, level=settings.log_level)

    try:
        return args.func(args)  # type: ignore[attr-defined]
    except (ValidationError, ConfigFileError, json.JSONDecodeError, yaml.YAMLError) as e:
        logger.exception("Configuração inválida")
        _report_error(e)
        _status("✖ configuração inválida", Fore.RED)
        return EXIT_CONFIG
    except Exception as e:
        logger.exception("Falha na execução")
        _report_error(e)
        _status("✖ execução abortada", Fore.RED)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
