"""Exception hierarchy shared by every module."""

from __future__ import annotations


class HypidentError(Exception):
    """Base class for all package errors."""


class UsageError(HypidentError, ValueError):
    """Bad argument supplied by a caller (precision too small, bad flag...)."""


class DomainError(HypidentError, ArithmeticError):
    """Pole, branch point, or other input outside a function's domain."""


class ConvergenceError(HypidentError, ArithmeticError):
    """A numerical method failed to reach a usable result."""


class DivergentError(ConvergenceError):
    """The requested series does not converge."""


class ParseError(HypidentError, ValueError):
    """Syntax error in a DSL expression, carrying the byte offset."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class PatternError(HypidentError, ValueError):
    """Term does not fit the structured series pattern language."""


class RuleError(HypidentError, ValueError):
    """A transform rule's applicability check failed."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        prefix = f"step {index}: " if index is not None else ""
        super().__init__(prefix + message)


class CatalogError(HypidentError, ValueError):
    """Malformed catalog file or invalid record."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
