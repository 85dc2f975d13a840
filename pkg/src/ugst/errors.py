"""Exception taxonomy shared across the package.

The CLI maps each class to a one-line diagnostic category and a nonzero
exit code, so raising the right type matters more than the message text.
"""


class StructureError(ValueError):
    """A contract violation: bad shapes, invalid masks, out-of-range ids."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where the math requires finite ones."""


class DataFormatError(ValueError):
    """An on-disk dataset file is missing, malformed, or inconsistent."""
