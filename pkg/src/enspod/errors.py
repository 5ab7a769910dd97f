"""Exception types raised across the package."""


class EnsPodError(Exception):
    """Base class for all package errors."""


class InvalidGeometry(EnsPodError):
    pass


class ParseError(EnsPodError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SingularMatrix(EnsPodError):
    def __init__(self, message, pivot=None):
        self.pivot = pivot
        if pivot is not None:
            message = f"{message} (pivot {pivot})"
        super().__init__(message)


class Asymmetric(EnsPodError):
    pass


class RankDeficient(EnsPodError):
    def __init__(self, requested, effective_rank):
        self.requested = requested
        self.effective_rank = effective_rank
        super().__init__(
            f"requested {requested} modes but numerical rank is {effective_rank}"
        )


class ConfigError(EnsPodError):
    pass


class InvariantViolation(EnsPodError):
    def __init__(self, message, sample=None):
        self.sample = sample
        if sample is not None:
            message = f"sample {sample}: {message}"
        super().__init__(message)


class DegenerateEpsilon(EnsPodError):
    pass


class PhaseError(EnsPodError):
    """Wraps an error raised inside one phase of an experiment run."""

    def __init__(self, phase, cause):
        self.phase = phase
        self.cause = cause
        super().__init__(f"[{phase}] {type(cause).__name__}: {cause}")
