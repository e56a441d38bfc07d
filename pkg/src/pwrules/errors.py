"""Exception types raised by pipeline stages (CLI maps these to exit code 1)."""


class PWRulesError(Exception):
    """Base class for domain errors."""


class CombinatorialLimit(PWRulesError):
    pass


class EmptyLibrary(PWRulesError):
    pass


class EmptyProbe(PWRulesError):
    pass


class ShapeError(PWRulesError, ValueError):
    pass


class LengthError(PWRulesError, ValueError):
    pass


class UnknownProtein(PWRulesError, KeyError):
    pass


class EmptyDataset(PWRulesError):
    pass


class InsufficientEntities(PWRulesError):
    pass


class DivergenceError(PWRulesError, FloatingPointError):
    pass


class NoPositiveAttribution(PWRulesError):
    pass


class UnknownFragment(PWRulesError, KeyError):
    pass


class IdMismatch(PWRulesError):
    pass


class NoActives(PWRulesError):
    pass


class DegenerateTruth(PWRulesError):
    pass


class ParseError(PWRulesError, ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


class EmptySet(PWRulesError, ValueError):
    pass


class FormatError(PWRulesError, ValueError):
    """Malformed binary interchange file."""
