"""Exception types shared across the package.

The CLI maps these onto distinct exit codes (parse / validation / numeric /
I/O), so new failure modes should subclass one of the four roots below
rather than raising bare ValueError.
"""


class CorpusParseError(ValueError):
    """A line of an input file does not match its documented format."""

    def __init__(self, message, line_no=None, path=None):
        self.line_no = line_no
        self.path = path
        prefix = ""
        if path is not None:
            prefix += f"{path}:"
        if line_no is not None:
            prefix += f"{line_no}: "
        super().__init__(prefix + message)


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class LengthError(ValidationError):
    """Token sequence longer than the admitted matrix width."""


class ShapeError(ValidationError):
    """Array shapes are inconsistent with the layer stack."""


class NoTrainingDataError(ValidationError):
    """Corpus contains nothing to train on (e.g. no alignment links)."""


class NoCandidateError(LookupError):
    """Negative sampling found no candidate distinct from the positive."""


class PoolExhaustedError(NoCandidateError):
    """The pool selected by the mixture sampler is empty."""


class StagePoolError(ValidationError):
    """A curriculum stage requires a pool that is empty."""

    def __init__(self, stage, message=None):
        self.stage = stage
        super().__init__(message or f"stage {stage!r} requires a non-empty pool")


class NumericError(ArithmeticError):
    """Non-finite loss or gradient; training is aborted."""


class TapeReuseError(RuntimeError):
    """An activation tape was consumed by backward more than once."""


class KinkProximityError(RuntimeError):
    """Gradient check rejected the probe point: too close to a ReLU kink,
    a pooling tie, or the hinge boundary. Caller should resample."""
