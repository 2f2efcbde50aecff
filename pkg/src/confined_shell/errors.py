"""Exception hierarchy shared by all modules."""


class ShellError(Exception):
    """Base class for every error raised by the package."""


class DegenerateFrame(ShellError):
    """Tangent vectors (or the 3D metric) are degenerate at an evaluation point."""


class InvalidBounds(ShellError):
    """A chart rectangle leaves the admissible parameter range."""


class InvalidLame(ShellError):
    """Lame constants violate lambda >= 0, mu > 0."""


class EmptyGamma0(ShellError):
    """No clamped edge was declared."""


class OddLayers(ShellError):
    """The number of transverse layers must be even and at least 2."""


class InfeasibleReference(ShellError):
    """The undeformed configuration violates the half-space constraint."""


class MaxIterations(ShellError):
    """An iterative solver exhausted its budget.

    The best iterate is attached as ``result`` (possibly ``None``).
    """

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class InfeasibleProblem(ShellError):
    """The feasible set of a quadratic program is empty."""


class SingularMatrix(ShellError):
    """A linear system could not be factorized."""


class TooManyRows(ShellError):
    """Brute-force enumeration refused: too many constraint rows."""


class ExtensionTooSmall(ShellError):
    """The reflection strip is narrower than the mollifier radius."""


class DegenerateDeformedFrame(ShellError):
    """Deformed tangent vectors are parallel; the deformed normal is undefined."""


class HypothesisFailed(ShellError):
    """A geometric hypothesis (positive margin or normal alignment) fails."""


class EigenSolverStall(ShellError):
    """Inverse iteration did not converge."""


class ConfigError(ShellError):
    """Missing or malformed experiment configuration entry."""
