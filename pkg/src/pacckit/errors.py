"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not match what an operation requires."""


class DomainError(ValueError):
    """A value lies outside an operation's admissible range."""


class StateError(RuntimeError):
    """Operation called in the wrong order, e.g. backward before forward."""


class ConfigError(ValueError):
    """Invalid configuration. Collects every problem so the user sees all
    offending keys at once rather than one per run."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class LogParseError(ValueError):
    """A log file row failed to parse; carries the 1-based line number."""

    def __init__(self, line_no, message):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class TrainingError(RuntimeError):
    """Training diverged or hit an invalid state."""


class CheckpointError(ValueError):
    """Checkpoint file is malformed or inconsistent with its metadata."""


class MetricUndefinedError(ValueError):
    """The metric has no defined value on this input (e.g. single-class AUC)."""
