"""Exception types shared across the package."""


class DimensionMismatch(ValueError):
    """A realization block has the wrong shape."""

    def __init__(self, block, expected, actual):
        self.block = block
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        super().__init__(
            f"block {block}: expected shape {self.expected}, got {self.actual}"
        )


class NonpositiveStepsize(ValueError):
    pass


class ConditionsViolated(ValueError):
    """Fixed-point existence conditions do not hold for this realization."""


class GradientSumNonzero(ValueError):
    """Per-agent gradients at the optimum must sum to zero."""


class EmptyIntersection(RuntimeError):
    """The consensus-identity subspace is trivial; nothing to certify on."""


class SolverFailure(RuntimeError):
    """Conic backend broke down (distinct from a clean infeasibility report)."""


class InfeasibleScheme(ValueError):
    """Gossip scheme cannot realize joint connectivity within the claimed B."""


class InvariantViolated(ValueError):
    """Initial state breaks the algorithm's linear state-input invariant."""


class AlgebraicLoop(ValueError):
    """Realization has feedthrough terms that make simulation implicit."""


class InsufficientDecay(RuntimeError):
    """Error trajectory underflows before the tail-fit window."""


class NonpositiveV0(ValueError):
    """Initial Lyapunov value is nonpositive for a nonzero state."""


class ParseError(ValueError):
    """Malformed structured-text input."""
