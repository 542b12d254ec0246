from __future__ import annotations

import logging
import sys

if sys.version_info >= (3, 11):
    _level_names_mapping = logging.getLevelNamesMapping
else:  # pragma: no cover - equivalente ao logging.getLevelNamesMapping do Python 3.11+
    def _level_names_mapping() -> dict[str, int]:
        return logging._nameToLevel.copy()


def setup_logging(verbose: bool = False, level: str | None = None) -> None:
    """
    Configura logging padrão em stderr (stdout fica livre para CSV).
    """
    if verbose:
        resolved = logging.DEBUG
    else:
        resolved = _level_names_mapping().get((level or "INFO").upper(), logging.INFO)

    handler = logging.StreamHandler(sys.stderr)
    formatter = logging.Formatter(
        fmt="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    handler.setFormatter(formatter)

    root = logging.getLogger()
    root.handlers.clear()
    root.addHandler(handler)
    root.setLevel(resolved)
