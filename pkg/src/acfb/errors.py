"""Exception types raised across the package."""


class ACFBError(Exception):
    """Base class for all package errors."""


class ValidationFailure(ACFBError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class BadInit(ACFBError):
    pass


class SymmetryMismatch(ACFBError):
    pass


class FormatError(ACFBError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class NonFiniteEnergy(ACFBError):
    pass


class DomainTooSmall(ACFBError):
    pass


class RadiusOutOfGrid(ACFBError):
    pass


class BallOutOfGrid(ACFBError):
    pass


class NotOnFreeBoundary(ACFBError):
    pass


class DegenerateFit(ACFBError):
    pass


class GridTooSmall(ACFBError):
    pass


class ConfigError(ACFBError):
    def __init__(self, key_path, message):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")
