"""Exception hierarchy shared by every kfvio module."""


class VioError(Exception):
    """Base class for all kfvio errors."""


class InvalidArgument(VioError, ValueError):
    pass


class ConfigError(VioError, ValueError):
    pass


class BehindCameraError(VioError, ValueError):
    pass


class TooFarError(VioError, ValueError):
    """Disparity at or below the triangulation threshold."""


class InsufficientDataError(VioError, ValueError):
    pass


class MissingFileError(VioError, FileNotFoundError):
    pass


class ParseError(VioError, ValueError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class StreamError(VioError, ValueError):
    """Out-of-order or otherwise inconsistent sensor stream."""


class DegenerateScenarioError(VioError, ValueError):
    pass


class CapacityError(VioError, RuntimeError):
    pass


class NotFoundError(VioError, KeyError):
    pass


class TrackAgeError(VioError, ValueError):
    pass


class MaskedWriteError(VioError, IndexError):
    pass


class IndefiniteMatrixError(VioError, ArithmeticError):
    def __init__(self, pivot, value):
        self.pivot = pivot
        self.value = value
        super().__init__(f"non-positive pivot {value!r} at index {pivot}")
