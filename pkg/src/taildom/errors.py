"""Exception types shared across the package.

Everything derives from ValueError so sloppy callers that catch ValueError
still work; the finer classes exist so tests and the CLI can tell a bad
model apart from a bad matrix shape or a violated call contract.
"""


class TaildomError(ValueError):
    """Base class for all package errors."""


class ParameterError(TaildomError):
    """Invalid distribution or operation parameters."""


class ModelError(TaildomError):
    """Inconsistent random vector model (dims, norm pairing, spec fields)."""


class ShapeError(TaildomError):
    """Array shape incompatible with the requested operation."""


class DegenerateInputError(TaildomError):
    """Input is degenerate for the requested statistic (e.g. E Z = 0)."""


class ConfigError(TaildomError):
    """Bad experiment configuration (empty grids, malformed JSON, ...)."""


class ContractError(TaildomError):
    """A verifier was called with its preconditions not established."""
