"""Exception hierarchy shared by every module.

Exit-code mapping used by the CLI lives on the classes so command wrappers
never need per-error tables: 2 = input/validation problem, 3 = numerical
degeneracy, 4 = internal invariant violation.
"""


class ToolkitError(Exception):
    exit_code = 4


class ValidationError(ToolkitError):
    """Bad input: malformed files, misaligned sets, out-of-range parameters."""

    exit_code = 2


class UndefinedCosineError(ValidationError):
    """Cosine similarity requested against a zero-norm vector."""


class DegenerateError(ToolkitError):
    """Numerically degenerate input, e.g. zero centered variance."""

    exit_code = 3


class InternalError(ToolkitError):
    """A self-check failed; indicates a bug, not a user mistake."""

    exit_code = 4
