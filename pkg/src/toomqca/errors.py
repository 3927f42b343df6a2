"""Exception types shared across the package.

Exit-code mapping used by the CLI: ConfigurationError -> 2, InvariantViolation -> 3.
"""


class ConfigurationError(ValueError):
    """A run configuration violates a stated precondition or parameter invariant."""


class InvariantViolation(RuntimeError):
    """A runtime invariant (marching-soldier gap, partition totality, ...) was broken."""


class UnsupportedGateError(ValueError):
    """A gadget circuit contains a gate tag the frame simulator cannot track."""


class UnsupportedGeometryError(ConfigurationError):
    """Lattice/block geometry outside the supported regime (e.g. block size < cycle length)."""
