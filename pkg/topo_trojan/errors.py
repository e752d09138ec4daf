from typing import Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class TopoTrojanError(Exception):
    """Base class for every error raised by the package."""

    exit_code = EXIT_DATA


class DimensionMismatchError(TopoTrojanError):
    def __init__(self, expected: int, actual: int, layer: Optional[int] = None, what: str = "input"):
        self.expected = expected
        self.actual = actual
        self.layer = layer
        self.what = what
        where = f" at layer {layer}" if layer is not None else ""
        super().__init__(f"{what} dimension mismatch{where}: expected {expected}, got {actual}")


class DegenerateDataError(TopoTrojanError):
    """Too few samples, neurons or classes to carry out the computation."""


class FormatError(TopoTrojanError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class NumericFailure(TopoTrojanError):
    exit_code = EXIT_NUMERIC

    def __init__(self, message: str, payload=None):
        self.payload = payload
        super().__init__(message)


class PipelineError(TopoTrojanError):
    def __init__(self, model_index: int, model_id: str, errors):
        self.model_index = model_index
        self.model_id = model_id
        self.errors = list(errors)
        super().__init__(f"model {model_index} ({model_id}) failed: {'; '.join(self.errors)}")
