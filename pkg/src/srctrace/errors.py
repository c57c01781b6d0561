"""Exception hierarchy. Every error carries a stable class name so the CLI can
print a single machine-parsable line."""


class SourceTraceError(Exception):
    pass


class ShapeError(SourceTraceError, ValueError):
    pass


class DegenerateVectorError(SourceTraceError, ValueError):
    pass


class EmptyInputError(SourceTraceError, ValueError):
    pass


class EvaluationError(SourceTraceError, ValueError):
    """A function produced a non-finite value where a finite one was required."""


class ArityError(SourceTraceError, ValueError):
    pass


class ConfigError(SourceTraceError, ValueError):
    pass


class TrialError(SourceTraceError, ValueError):
    pass


class DataError(SourceTraceError, ValueError):
    pass


class PhaseError(SourceTraceError, ValueError):
    pass


class SamplingError(SourceTraceError, ValueError):
    pass


class DependencyError(SourceTraceError, RuntimeError):
    pass


class MissingIdError(SourceTraceError, KeyError):
    """An utterance id could not be resolved."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DegenerateEvaluationError(SourceTraceError, ValueError):
    pass


class CheckpointError(SourceTraceError, ValueError):
    pass
