"""Exception types shared across the toolkit.

Every error raised by the public API is a subclass of :class:`PlanarceError`
so callers (in particular the CLI) can catch one type and report a single
machine-parsable line.
"""

from __future__ import annotations


class PlanarceError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(PlanarceError):
    """An invalid frame configuration.

    Carries a machine-readable ``code`` naming the violated constraint:

    * ``DIMENSION``   - a dimension is non-positive or otherwise malformed.
    * ``PARTITION``   - U does not divide T (or T_P), or V does not divide N.
    * ``SOLVABILITY`` - too few pilot observations per sub-block to identify
      the per-user plane coefficients (requires N*T_P/(V*U) >= 3K).
    * ``PILOTS``      - pilot symbol indices out of range, not strictly
      increasing, or unevenly distributed over time sub-blocks.
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code


class DimensionMismatch(PlanarceError):
    """An array argument disagrees with the frame configuration."""


class EmptyProfile(PlanarceError):
    """A power-delay profile with no taps."""


class CpExceeded(PlanarceError):
    """A scaled path delay falls outside the cyclic prefix."""


class TooFewPilots(PlanarceError):
    """A sub-block contains no pilot rows."""


class MissingBlock(PlanarceError):
    """A per-sub-block container is missing one of the U*V blocks."""


class InsufficientData(PlanarceError):
    """Not enough calibration realizations to estimate priors."""


class RankDeficient(PlanarceError):
    """A least-squares system without full column rank."""


class NumericalFailure(PlanarceError):
    """A linear-algebra routine failed (non-finite input, factorization)."""


class ShapeMismatch(PlanarceError):
    """A tensor shape disagrees with the network layer specification."""


class WeightMismatch(PlanarceError):
    """A weight bundle is missing tensors or carries unexpected ones."""


class FormatError(PlanarceError):
    """A file does not conform to its declared binary or text format."""


class TruncatedFile(FormatError):
    """A binary file ends before the declared payload is complete."""


class ZeroTruth(PlanarceError):
    """NMSE requested against an all-zero reference."""
