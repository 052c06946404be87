"""Exception hierarchy.

Each engine failure carries the CLI exit code it maps to, so the front end
never has to guess.
"""

from __future__ import annotations


class RareBayesError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigError(RareBayesError, ValueError):
    """Invalid run configuration or parameter value."""

    exit_code = 2

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CorruptStateError(RareBayesError, ValueError):
    """A state vector contains non-finite components."""

    exit_code = 5


class PlateauError(RareBayesError):
    """Distinct samples share the threshold value, so the level cannot be split."""

    exit_code = 3

    def __init__(self, level: int, threshold: float, n_above: int, n_required: int):
        self.level = level
        self.threshold = threshold
        self.n_above = n_above
        self.n_required = n_required
        super().__init__(
            f"plateau at level {level}: only {n_above} of the required {n_required} "
            f"samples lie strictly above the threshold {threshold!r}; "
            "the driving variable is flat over a set of positive probability"
        )


class StalledLevelError(PlateauError):
    """The population collapsed onto repeated copies of a few states.

    The chains no longer move, so the threshold cannot advance. Typical when
    the target lies above the maximum of the driving variable.
    """

    def __init__(self, level: int, threshold: float, n_unique: int):
        self.n_unique = n_unique
        RareBayesError.__init__(
            self,
            f"level {level} stalled: its samples are copies of {n_unique} states and the "
            f"threshold cannot rise above {threshold!r}",
        )
        self.level = level
        self.threshold = threshold
        self.n_above = 0
        self.n_required = 0


class LevelCapError(RareBayesError):
    """The level cap was reached before the stopping condition held.

    ``partial`` holds whatever the engine had produced (levels, a-sequence...).
    """

    exit_code = 4

    def __init__(self, message: str, partial=None, last_a: float | None = None):
        self.partial = partial
        self.last_a = last_a
        super().__init__(message)


class ModelEvaluationError(RareBayesError):
    """The likelihood (or any user callable) failed on a specific sample."""

    exit_code = 5

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message)
