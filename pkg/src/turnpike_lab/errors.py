"""Exception hierarchy shared by all modules."""


class TurnpikeLabError(Exception):
    """Base class for every error raised by this package."""


class SingularMatrix(TurnpikeLabError):
    pass


class NotSymmetric(TurnpikeLabError):
    pass


class DimensionMismatch(TurnpikeLabError):
    pass


class ZeroWeight(TurnpikeLabError):
    pass


class SingularStepMatrix(TurnpikeLabError):
    """I + (h/2)A (or I + hA) is singular for some sample; a finer grid usually helps."""


class GridMismatch(TurnpikeLabError):
    pass


class SingularSample(TurnpikeLabError):
    def __init__(self, index: int, detail: str = ""):
        self.index = index
        msg = (
            f"sample {index}: A is singular, so A x = B u is not solvable for every u "
            "(the admissible set {v : B v in Range(A)} is not all of R^m)"
        )
        if detail:
            msg += f"; {detail}"
        super().__init__(msg)


class CgStalled(TurnpikeLabError):
    pass


class DoubleVariantRequiresSquareB(DimensionMismatch):
    pass


class TooManyGainEntries(TurnpikeLabError):
    pass


class ConfigError(TurnpikeLabError):
    """Config validation failure; ``path`` is the dotted location of the bad field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class IoError(TurnpikeLabError):
    def __init__(self, path, message: str):
        self.path = str(path)
        super().__init__(f"{path}: {message}")
