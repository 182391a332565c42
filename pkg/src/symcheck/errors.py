"""Exception types shared across the package."""


class SymcheckError(Exception):
    """Base class for all library errors."""


class ValidationError(SymcheckError):
    """Malformed or inconsistent input data (knowledge base, records, requests)."""


class UsageError(SymcheckError):
    """An API was called outside its contract (illegal action, bad argument)."""


class CompatibilityError(SymcheckError):
    """Checkpoints or models disagree on symptom/disease orderings or dimensions."""


class TrainingDivergedError(SymcheckError):
    """A training loop produced a non-finite loss."""

    def __init__(self, stage, diagnostics=None):
        self.stage = stage
        self.diagnostics = diagnostics or {}
        super().__init__(f"training diverged in stage '{stage}': {self.diagnostics}")
