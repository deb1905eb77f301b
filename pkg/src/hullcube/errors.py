"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class HullcubeError(Exception):
    """Base class; ``witness`` carries machine-readable context."""

    def __init__(self, message: str, witness: object = None) -> None:
        super().__init__(message)
        self.witness = witness


class InstanceFormatError(HullcubeError):
    pass


class ArgumentError(HullcubeError):
    pass


class GeometryError(HullcubeError):
    pass


class CapacityError(HullcubeError):
    pass


class ConfigurationError(HullcubeError):
    pass


class SetupError(HullcubeError):
    pass


class InfeasibleError(HullcubeError):
    pass


class CheckFailure(HullcubeError):
    """A verification step failed; ``witness`` names the clause or face."""
