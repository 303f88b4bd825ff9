"""Exception hierarchy shared across the package.

The CLI maps these onto its exit codes, so each class carries the code it
should surface as.
"""


class HA2FError(Exception):
    exit_code = 1


class ConfigError(HA2FError, ValueError):
    """Invalid configuration values or unreadable config files."""

    exit_code = 2


class ContractError(HA2FError, ValueError):
    """An operation was called with inputs that violate its preconditions."""

    exit_code = 2


class ShapeError(ContractError):
    pass


class NumericError(HA2FError, ArithmeticError):
    exit_code = 3


class TrainingAborted(NumericError):
    def __init__(self, step, lr, loss):
        self.step, self.lr, self.loss = step, lr, loss
        super().__init__(f"non-finite loss at step {step}: loss={loss!r}, lr={lr:.6g}")


class LoadError(HA2FError, IOError):
    exit_code = 2


class GenerationError(HA2FError, RuntimeError):
    exit_code = 2


class CompatibilityError(HA2FError):
    exit_code = 4
