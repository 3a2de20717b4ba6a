"""Exception types shared across the package."""


class ConstructionError(RuntimeError):
    """An instance builder could not satisfy its acceptance check."""


class NumericalError(ArithmeticError):
    """A linear-algebra or floating-point failure (non-finite values, bad factorization)."""


class SamplerDivergenceError(NumericalError):
    """The Langevin chain left the admissible region.

    ``iteration`` is the 1-based iteration at which the chain was stopped.
    """

    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration
