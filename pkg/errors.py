"""
Exception hierarchy shared by every module.

Each error carries the name of the module that raised it so the command line
can report a one-line, machine-parseable diagnostic.
"""
from typing import Optional


class GlvrError(Exception):
    """Base class for all errors raised by glvr."""

    def __init__(self, message: str, module: str = "glvr"):
        super().__init__(message)
        self.module = module

    def one_line(self) -> str:
        message = str(self).replace("\n", " ")
        return f"error: module={self.module} type={type(self).__name__} message={message}"


class ConfigError(GlvrError, ValueError):
    """Invalid configuration value, flag or JSON document."""

    def __init__(self, message: str, key: Optional[str] = None, module: str = "config"):
        if key:
            message = f"{key}: {message}"
        super().__init__(message, module)
        self.key = key


class CriterionSyntaxError(ConfigError):
    """Malformed resample criterion string."""

    def __init__(self, message: str):
        super().__init__(message, module="recovery")


class DimensionError(GlvrError, ValueError):
    """Shape mismatch between tensors, layers or files."""

    def __init__(self, message: str, expected=None, actual=None,
                 layer: Optional[int] = None, module: str = "diffcore"):
        if expected is not None or actual is not None:
            message = f"{message} (expected {expected}, got {actual})"
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message, module)
        self.expected = expected
        self.actual = actual
        self.layer = layer


class DivergenceError(GlvrError, ArithmeticError):
    """A loss became NaN or infinite."""

    def __init__(self, message: str, step: Optional[int] = None, module: str = "gantrain"):
        if step is not None:
            message = f"{message} at step {step}"
        super().__init__(message, module)
        self.step = step


class FormatError(GlvrError, ValueError):
    """A file could not be decoded."""

    def __init__(self, message: str, path=None, module: str = "storage"):
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message, module)
        self.path = path


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedFileError(FormatError):
    """Fewer bytes on disk than the header promises."""

    def __init__(self, expected: int, actual: int, path=None, module: str = "storage"):
        super().__init__(f"truncated file: expected {expected} bytes, got {actual}", path, module)
        self.expected = expected
        self.actual = actual


class ValidationError(FormatError):
    pass


class GeometryError(GlvrError, ValueError):
    """Latent-space operation undefined for its inputs (zero norm, antipodal pair)."""

    def __init__(self, message: str, module: str = "latentops"):
        super().__init__(message, module)


class TrialSetError(GlvrError, ValueError):
    """Trial records that cannot be compared: missing baseline, mismatched or duplicate trials."""

    def __init__(self, message: str, module: str = "harness"):
        super().__init__(message, module)
