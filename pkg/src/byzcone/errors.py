"""Exception hierarchy shared across the package."""


class ByzconeError(Exception):
    """Base class for all errors raised by byzcone."""


class AlphabetError(ByzconeError):
    """An agent id, label, copy number, or timestamp falls outside the
    finite alphabet declared by the scenario."""


class FormatError(ByzconeError):
    """A hap was used in the wrong format slot (e.g. an event where an
    action is required)."""


class HapParseError(ByzconeError):
    """A hap or formula string does not match the documented grammar."""

    def __init__(self, message, text=None, pos=None):
        if text is not None:
            message = f"{message} (in {text!r}" + (
                f" at position {pos})" if pos is not None else ")"
            )
        super().__init__(message)
        self.text = text
        self.pos = pos


class ValidationError(ByzconeError):
    """A scenario or protocol violates a declared invariant."""


class ChoiceError(ByzconeError):
    """An adversary choice index is out of range for the offered range."""


class ResourceError(ByzconeError):
    """A combinatorial budget was exceeded."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class HorizonError(ByzconeError):
    """A timestamp lies beyond the configured horizon."""


class PreconditionError(ByzconeError):
    """A documented operation precondition does not hold."""


class IntegrityError(ByzconeError):
    """Internal consistency violation, e.g. an undecodable message id in
    a run that should only contain well-formed ones."""
