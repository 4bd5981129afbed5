"""Exception hierarchy shared by every module.

All domain errors derive from :class:`DppcError` so the CLI can map them to
exit status 1 without catching programming errors.
"""


class DppcError(Exception):
    """Base class for domain errors."""


class DimensionError(DppcError, ValueError):
    """Shapes, lengths or indices do not match."""


class SingularityError(DppcError, ArithmeticError):
    """A matrix or minor that must be nonsingular is (numerically) singular."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class StructureError(DppcError):
    """A circuit lacks a structural property required by a query."""


class ParseError(DppcError, ValueError):
    """Malformed kernel or circuit file."""

    def __init__(self, reason, line=None, path=None):
        self.reason = reason
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {reason}".strip())


class DivergenceError(DppcError, ArithmeticError):
    """KL divergence is infinite (model assigns zero mass to target support)."""


class SizeGuardError(DppcError, ValueError):
    """Input exceeds an enumeration guard."""
