class ContractError(ValueError):
    """Raised when an operation's preconditions are violated."""


class ShapeError(ContractError):
    pass


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


class LeakageError(RuntimeError):
    """A generated or training record collides with the frozen test split."""
