"""Exception hierarchy shared by the numerical modules and the CLI."""


class PlegError(Exception):
    """Base class for all library errors."""

    exit_code = 3


class ValidationError(PlegError):
    """Bad user input: grids, boundary specs, config values."""

    exit_code = 1


class ConvergenceFailure(PlegError):
    """An iterative solve did not reach its residual tolerance."""

    exit_code = 2


class SliceNotConvex(PlegError):
    """A time slice lost the strict convexity needed to invert the map."""

    exit_code = 3

    def __init__(self, slice_index: int, margin: float):
        self.slice_index = slice_index
        self.margin = margin
        super().__init__(
            f"slice {slice_index} has convexity margin {margin:.6g} <= 0"
        )


class ConvexityLost(PlegError):
    """A Newton iterate left the admissible convex cone."""

    exit_code = 3


class ResidualTooLarge(PlegError):
    """A solve finished but its equation residual exceeds the configured bound."""

    exit_code = 3


class InvariantViolation(PlegError):
    """A result violated one of its declared invariants (diagnostic, fatal)."""

    exit_code = 3
