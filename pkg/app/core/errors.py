"""Exception hierarchy shared by the engine and the CLI."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for every error raised on purpose by the engine."""


class GraphParseError(EngineError, ValueError):
    def __init__(self, message: str, line_no: int) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class NodeRangeError(EngineError, IndexError):
    pass


class ParameterError(EngineError, ValueError):
    pass


class ContractError(EngineError, ValueError):
    """Shape or structure mismatch between values that must agree."""


class MeasurementError(EngineError, ValueError):
    pass


class ConfigError(EngineError, ValueError):
    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"{key}: {message}")
        self.key = key
