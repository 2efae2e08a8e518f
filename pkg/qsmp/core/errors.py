from __future__ import annotations


class QsmpError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


class ConfigError(QsmpError):
    pass


class WaitingTimeError(QsmpError):
    pass


class SolverError(QsmpError):
    pass


class CPCheckError(QsmpError):
    pass


class SimulationError(QsmpError):
    pass


def exit_code(exc: QsmpError) -> int:
    """CLI exit code: 2 for config problems, 3 for failures inside the numerics."""
    return 2 if isinstance(exc, ConfigError) else 3
