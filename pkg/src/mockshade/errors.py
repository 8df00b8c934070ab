"""Exception types shared across the package."""

from __future__ import annotations


class MockshadeError(Exception):
    """Base class for this package's errors."""


class SceneIssue:
    """One validation problem, tagged with where it came from."""

    def __init__(self, kind: str, path: str, message: str):
        self.kind = kind
        self.path = path
        self.message = message

    def __repr__(self):
        return f"{self.kind}({self.path}): {self.message}"

    __str__ = __repr__


class SceneParseError(MockshadeError):
    """Aggregated scene validation failure; `issues` holds every problem found."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


# Issue kinds used by the scene parser
MISSING_CHANNEL = "MissingChannel"
BAD_REFERENCE = "BadReference"
INVARIANT_VIOLATION = "InvariantViolation"
BAD_DOCUMENT = "BadDocument"


class SolverDiverged(MockshadeError):
    """Iterative solve hit its iteration cap before reaching tolerance."""


class NotAMirror(MockshadeError):
    """Mirror reflection requested on a layer without a planar mirror."""


class ResolutionMismatch(MockshadeError):
    """Operands that must share a raster size do not."""


class NonLipschitzBasis(MockshadeError):
    """Robustness bounds are undefined for discontinuous weight bases."""


class UnknownLayer(MockshadeError):
    """A layer id was referenced that the scene does not contain."""
