"""
Error types shared by every pipeline stage.
Each error carries the stage it was raised in and the process exit code the CLI reports.
"""

from typing import Optional


class PipelineError(Exception):
    """Base error for the cavitation detection pipeline."""

    exit_code = 1

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def __str__(self) -> str:
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


class ConfigError(PipelineError):
    """Invalid configuration value or config document."""

    exit_code = 2


class DataError(PipelineError):
    """Manifest, signal file or table content that cannot be used."""

    exit_code = 3


class SchemaError(DataError):
    """Column layout of a table does not match what a stage expects."""


class NumericError(PipelineError):
    """Non-finite values or invalid numeric arguments."""

    exit_code = 4
