"""Exception hierarchy shared by every module.

Each class carries an ``exit_code`` so the command line front end can map
failures onto its documented status codes without a lookup table.
"""


class EmulatorError(Exception):
    """Base class for all package errors."""

    exit_code = 1
    kind = "runtime"


class InputError(EmulatorError, ValueError):
    """Malformed, mismatched or out-of-range input."""

    exit_code = 2
    kind = "input"


class ParameterError(EmulatorError, ValueError):
    """Hyper-parameter outside its admissible domain."""

    exit_code = 2
    kind = "parameter"


class NumericalError(EmulatorError, ArithmeticError):
    """A factorization or decomposition failed."""

    kind = "numerical"


class UpdateFailedError(NumericalError):
    """A low-rank inverse update could not be applied; refactor densely."""

    kind = "update_failed"


class ResourceError(EmulatorError):
    """A requested computation exceeds the configured size cap."""

    kind = "resource"


class StateError(EmulatorError):
    """An object was used before it was ready (e.g. predicting unfitted)."""

    kind = "state"
