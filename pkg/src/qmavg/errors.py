"""Exception hierarchy shared by the inference and experiment modules."""


class QmavgError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(QmavgError, ValueError):
    pass


class InvalidConfigurationError(QmavgError, ValueError):
    pass


class ZeroEvidenceError(QmavgError):
    """Every particle assigned zero likelihood to an observed outcome."""

    def __init__(self, outcome, context=None, model=None):
        self.outcome = outcome
        self.context = context
        self.model = model
        where = f" in model {model!r}" if model is not None else ""
        super().__init__(
            f"zero evidence{where} for outcome {outcome!r} (context {context!r})"
        )


class EnsembleZeroEvidenceError(QmavgError):
    """Every model in an ensemble has zero evidence."""


class DegenerateStateError(QmavgError, ValueError):
    """Parameters do not define a density matrix (e.g. all zero)."""


class NoSupportError(QmavgError):
    """No particle has finite log-likelihood on the data."""
