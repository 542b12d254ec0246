from __future__ import annotations


class FdpError(ValueError):
    """Erro de domínio da biblioteca de envelopes de FDP."""


class DomainError(FdpError):
    """Parâmetro fora do domínio de validade de uma fórmula."""


class ShapeMismatchError(FdpError):
    """Vetores com comprimentos incompatíveis."""


class MissingLabelsError(FdpError):
    """Operação de oráculo chamada sem rótulos de verdade (nula/alternativa)."""


class InsufficientGridError(FdpError):
    """Curva de consistência pedida com menos de três valores de m."""


class ConfigFileError(FdpError):
    """Arquivo de configuração ilegível ou em formato não suportado."""


class MalformedRowError(FdpError):
    """Linha inválida em um arquivo CSV de p-valores."""

    def __init__(self, message: str, *, line: int) -> None:
        super().__init__(f"linha {line}: {message}")
        self.message = message
        self.line = line

    def __reduce__(self) -> tuple[object, ...]:
        return _rebuild_malformed, (self.message, self.line)


class ConvergenceError(RuntimeError):
    """Método iterativo não convergiu (ou raiz não isolada)."""


class ReplicationError(RuntimeError):
    """Falha em uma replicação de experimento; a execução é abortada."""

    def __init__(self, setting: str, m: int, replication: int, reason: str = "") -> None:
        detail = f" | causa={reason}" if reason else ""
        super().__init__(f"replicação falhou | setting={setting} | m={m} | rep={replication}{detail}")
        self.reason = reason
        self.setting = setting
        self.m = m
        self.replication = replication

    def __reduce__(self) -> tuple[object, ...]:
        return type(self), (self.setting, self.m, self.replication, self.reason)


def _rebuild_malformed(message: str, line: int) -> MalformedRowError:
    return MalformedRowError(message, line=line)
