"""Exception types shared across the toolkit."""


class RiemcovError(Exception):
    pass


class DimensionMismatch(RiemcovError, ValueError):
    pass


class GridTooLarge(RiemcovError, ValueError):
    """Raised instead of allocating a grid above the configured cell cap."""

    def __init__(self, cells, limit):
        self.cells = cells
        self.limit = limit
        super().__init__(
            f"grid would have {cells} cells, above the limit of {limit}; "
            "lower the depth or raise max_cells"
        )


class NonFiniteValue(RiemcovError, ArithmeticError):
    """A user function returned inf or nan at a sample point."""

    def __init__(self, what, point):
        self.what = what
        self.point = tuple(float(v) for v in point)
        super().__init__(f"{what} is not finite at {self.point}")


class SingularDerivative(RiemcovError, ValueError):
    pass


class MaxDepthExceeded(RiemcovError):
    """Cousin bisection hit its depth limit; `witness` is a cube with no admissible tag."""

    def __init__(self, witness, depth, remaining):
        self.witness = witness
        self.depth = depth
        self.remaining = remaining
        super().__init__(
            f"no admissible tag for {remaining} cube(s) at depth {depth}; "
            f"witness: center={witness.center}, half_width={witness.half_width:g}"
        )
