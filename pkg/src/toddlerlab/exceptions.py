"""
Exception classes for toddlerlab.

Every error raised by the library derives from ToddlerLabException so callers
(and the CLI) can map failures to exit codes without string matching.
"""

from typing import Optional


class ToddlerLabException(Exception):
    """
    Base exception for all toddlerlab errors.
    """

    def __init__(self, message: str, cause: Optional[Exception] = None):
        super().__init__(message)
        self.message = message
        self.cause = cause


class ValidationException(ToddlerLabException):
    """
    Exception raised for invalid arguments to a public operation.
    """

    pass


class DimensionException(ValidationException):
    """
    Exception raised when tensor shapes disagree.
    The offending axis is named in the message and kept on the instance.
    """

    def __init__(self, message: str, axis: Optional[str] = None):
        super().__init__(f"{message} (axis: {axis})" if axis else message)
        self.axis = axis


class AutodiffException(ToddlerLabException):
    """
    Exception raised when the backward pass is misused:
    non-scalar loss, or a second backward over the same record.
    """

    pass


class NumericalException(ToddlerLabException):
    """
    Exception raised when a NaN or Inf shows up in a gradient, loss or value.
    """

    def __init__(
        self,
        message: str,
        block: Optional[str] = None,
        step: Optional[int] = None,
    ):
        details = []
        if block is not None:
            details.append(f"block={block}")
        if step is not None:
            details.append(f"step={step}")
        suffix = f" [{', '.join(details)}]" if details else ""
        super().__init__(f"{message}{suffix}")
        self.block = block
        self.step = step


class ProtocolException(ToddlerLabException):
    """
    Exception raised when the environment is driven out of protocol,
    e.g. step() after the episode has finished.
    """

    pass


class ConfigurationException(ToddlerLabException):
    """
    Exception raised for invalid run configuration.
    Carries the dotted key path and, for syntax errors, the line number.
    """

    def __init__(
        self,
        message: str,
        key_path: Optional[str] = None,
        line: Optional[int] = None,
        cause: Optional[Exception] = None,
    ):
        prefix = f"{key_path}: " if key_path else ""
        location = f" (line {line})" if line is not None else ""
        super().__init__(f"{prefix}{message}{location}", cause)
        self.key_path = key_path
        self.line = line


class CheckpointException(ConfigurationException):
    """
    Exception raised for unreadable checkpoints or checkpoints that do not
    match the requested use (e.g. an RL checkpoint given to the autoencoder regime).
    """

    def __init__(self, message: str, cause: Optional[Exception] = None):
        super().__init__(message, cause=cause)


class DatasetException(ToddlerLabException):
    """
    Exception raised for degenerate or corrupt datasets.
    """

    pass
