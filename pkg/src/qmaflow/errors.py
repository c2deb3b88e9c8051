"""Exception hierarchy for qmaflow."""
from __future__ import annotations


class QmaflowError(Exception):
    """Base class for all qmaflow errors."""


class GeometryError(QmaflowError):
    """Invalid torus geometry parameters."""


class FieldShapeError(QmaflowError):
    """Field data does not match its geometry or declared kind."""


class SolvabilityError(QmaflowError):
    """Right-hand side violates a solvability condition (e.g. nonzero mean)."""


class ConventionError(QmaflowError):
    """An algebraic identity that pins the sign/index conventions failed.

    Raised e.g. when the wedge-power ratio acquires an imaginary part above
    tolerance; this almost always indicates a convention or aliasing bug
    rather than a data problem.
    """


class SnapshotError(QmaflowError):
    """Malformed or mismatched field snapshot file."""


class ConfigError(QmaflowError):
    """Invalid run configuration.

    ``pointer`` is a JSON-pointer-style path to the offending entry.
    """

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}")


class FlowBlowupError(QmaflowError):
    """Positivity of the evolving metric was lost.

    Carries the grid point where the smallest eigenvalue is most negative,
    the offending margin value, and (when raised from a stepper) the flow
    time and step index.
    """

    def __init__(self, point, margin, t=None, step=None, message=None):
        self.point = tuple(int(p) for p in point)
        self.margin = float(margin)
        self.t = t
        self.step = step
        text = message or (
            f"positivity lost at grid point {self.point}: margin={self.margin:.6e}"
        )
        if t is not None:
            text += f" (t={t:.6e}, step={step})"
        super().__init__(text)
