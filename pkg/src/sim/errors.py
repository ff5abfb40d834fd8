"""
Exception hierarchy for the ion-trap simulator.

Every error carries an optional machine-readable ``code`` and a ``details``
dict, and a class-level ``exit_code`` the CLI uses to pick the process status:

- ConfigError (2): malformed or inconsistent run configuration and data files
- ModelError (3): a physics model was asked for something it cannot produce
- FitError (4): the least-squares engine did not converge
"""

from typing import Any, Optional


class IonTrapError(Exception):
    """Base exception for simulator errors."""

    exit_code: int = 1

    def __init__(
        self,
        message: str,
        code: Optional[str] = None,
        details: Optional[dict[str, Any]] = None,
    ):
        super().__init__(message)
        self.code = code
        self.details = details or {}


# Configuration errors


class ConfigError(IonTrapError):
    """Run configuration could not be used."""

    exit_code = 2


class ParseError(ConfigError):
    """Config text is not in the sectioned key-value format."""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message, code="parse_error", details={"line": line})
        self.line = line


class UnknownKey(ConfigError):
    """A section contains a key the schema does not know."""

    pass


class MissingSection(ConfigError):
    """A required section or field is absent."""

    pass


class SchemaMismatch(ConfigError):
    """A data file does not have the columns the model expects."""

    pass


# Model errors


class ModelError(IonTrapError):
    """A physics model rejected its inputs."""

    exit_code = 3


class UnstableTrap(ModelError):
    """Trap parameters lie outside the Mathieu stability region."""

    pass


class NoSolution(ModelError):
    """Calibration targets cannot be reproduced by the trap model."""

    pass


class InvalidGrid(ModelError):
    """A scan grid is empty, unsorted, or otherwise unusable."""

    pass


class UnknownTransition(ModelError):
    """A laser field addresses a level pair the scheme does not declare."""

    pass


class DegenerateSteadyState(ModelError):
    """The Liouvillian has more than one stationary state."""

    def __init__(self, message: str, null_space: Any = None):
        dimension = 0 if null_space is None else len(null_space)
        super().__init__(
            message, code="degenerate", details={"null_dimension": dimension}
        )
        # list of 8x8 matrices spanning the numerical null space
        self.null_space = null_space if null_space is not None else []


class IndistinguishableStates(ModelError):
    """Bright and dark count rates are equal."""

    pass


class TruncationTooSmall(ModelError):
    """Fock truncation leaves too much thermal probability outside."""

    pass


class ExpansionInvalid(ModelError):
    """The second-order Lamb-Dicke expansion does not hold."""

    pass


# Fit errors


class FitError(IonTrapError):
    """Nonlinear least-squares problems."""

    exit_code = 4


class MaxIterationsExceeded(FitError):
    """Iteration budget exhausted before the tolerances were met."""

    def __init__(self, message: str, result: Any = None):
        super().__init__(message, code="max_iterations")
        self.result = result


class NotConverged(FitError):
    """An operation needs a converged fit result."""

    pass


class ModelEvaluationError(FitError):
    """The model raised or returned non-finite values during a fit."""

    exit_code = 3
