"""Exception types shared across the toolkit.

The CLI maps :class:`ContractViolation` to exit code 1 and
:class:`ConfigurationError` to exit code 2.
"""


class DistractorGenError(Exception):
    pass


class ContractViolation(DistractorGenError, ValueError):
    """An operation was called with inputs outside its precondition."""


class ConfigurationError(DistractorGenError):
    """Bad flags, unreadable files, unknown variants and the like."""


class InsufficientCorpus(ContractViolation):
    pass


class TrainingDiverged(DistractorGenError, RuntimeError):
    def __init__(self, step, batch_id, loss):
        super().__init__(
            f"non-finite loss {loss!r} at step {step} (batch {batch_id})")
        self.step = step
        self.batch_id = batch_id
        self.loss = loss
