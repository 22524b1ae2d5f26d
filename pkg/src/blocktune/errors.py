"""Exception taxonomy shared across the package.

Library code raises these directly; the CLI maps them onto process exit
codes (usage/input/shape/parse -> 2, numeric -> 3, I/O -> 4).
"""


class ShapeError(ValueError):
    """Operand shapes do not agree."""


class InputError(ValueError):
    """A value is outside the operation's domain (bad label, unknown block id, ...)."""


class UsageError(ValueError):
    """The call itself is malformed (empty selection, bad fractions, missing artifact)."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


class ParseError(ValueError):
    """A config or results file could not be parsed."""
