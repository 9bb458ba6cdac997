class ContractError(ValueError):
    """Input violates an operation's preconditions (shapes, indices, ranges)."""


class NumericalOverflowError(FloatingPointError):
    """A log-amplitude or estimator came out non-finite."""


class GradientBlowupError(FloatingPointError):
    """The overlap estimate vanished; the fidelity gradient is undefined.

    Usually means the variational state was initialised (numerically)
    orthogonal to the target. Re-initialise closer to the target.
    """


class SolverError(RuntimeError):
    """The regularised SR linear system could not be solved."""


class EdgeListError(ValueError):
    """Malformed edge-list file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
