"""Exception types shared across the package."""


class DeliCocoError(Exception):
    pass


class ContractViolation(DeliCocoError, ValueError):
    """An input broke an operation's precondition (shape, symmetry, ...)."""


class ConfigurationError(DeliCocoError, ValueError):
    """A user-supplied parameter is outside its valid range."""


class IngestionError(DeliCocoError, OSError):
    """A dataset file could not be parsed."""

    def __init__(self, path, offset, reason):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{self.path} (byte offset {offset}): {reason}")


class DivergenceError(DeliCocoError, ArithmeticError):
    def __init__(self, iteration, value, hint=""):
        self.iteration = iteration
        self.value = value
        msg = f"diverged at iteration {iteration} (objective {value!r})"
        if hint:
            msg = f"{msg}; {hint}"
        super().__init__(msg)


class DisconnectedGraphWarning(UserWarning):
    """The mixing matrix has no spectral gap, so consensus cannot be reached."""


class OutsideRegimeWarning(UserWarning):
    """A bound was evaluated with fewer gossip steps than the theory requires."""
