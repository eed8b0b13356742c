"""Exception hierarchy.

Every error carries a short machine-readable ``code`` (e.g. ``"sigma1-zero"``)
so the CLI can map failures to exit codes and reports can name them.
"""

from __future__ import annotations


class MapChaosError(Exception):
    """Base class for all library errors."""

    code = "error"

    def __init__(self, message: str = "", code: str | None = None):
        if code is not None:
            self.code = code
        super().__init__(message or self.code)


class ValidationError(MapChaosError):
    """A model configuration violates one or more invariants.

    ``issues`` lists every violated invariant by code, not only the first.
    """

    code = "invalid-spec"

    def __init__(self, issues: list[str]):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues), code=self.issues[0] if self.issues else None)


class OrderTooHigh(MapChaosError):
    code = "order-too-high"


class NonFiniteMoment(MapChaosError):
    code = "nonfinite-moment"


class OrderZero(MapChaosError):
    code = "order-zero"


class MismatchedPath(MapChaosError):
    code = "mismatched-parent-path"


class PsdViolation(MapChaosError):
    code = "psd-violation"


class DegenerateDirection(MapChaosError):
    """Gram-Schmidt met a direction whose squared norm is numerically zero."""

    code = "degenerate-direction"

    def __init__(self, label: str, norm: float, scale: float):
        self.label = label
        self.norm = norm
        super().__init__(
            f"degenerate direction at basis label {label!r}: squared norm {norm:.3e} "
            f"below tolerance relative to max diagonal {scale:.3e}; drop this label"
        )


class MissingOrder(MapChaosError):
    code = "missing-order"


class DegreeCapExceeded(MapChaosError):
    code = "degree-cap-exceeded"


class JumpCollision(MapChaosError):
    """Two jump records landed on the same grid time (probability zero)."""

    code = "jump-collision"


class UnknownSuite(MapChaosError):
    code = "unknown-suite"
