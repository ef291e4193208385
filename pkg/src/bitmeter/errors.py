"""Exception hierarchy shared by all bitmeter modules."""


class BitmeterError(Exception):
    """Base class for all library errors."""


class ValidationError(BitmeterError, ValueError):
    """An input violates a documented invariant."""


class EnumerationTooLarge(BitmeterError):
    """Exhaustive enumeration requested beyond the width guard."""


class ChannelTooLarge(BitmeterError):
    """Exact channel construction or solving would exceed the size guard.

    Use a closed-form or sampled path instead.
    """


class NotConverged(BitmeterError):
    def __init__(self, message, gap):
        super().__init__(message)
        self.gap = gap


class UndefinedEfficiency(BitmeterError, ZeroDivisionError):
    """Efficiency ratio requested against a zero capacity."""
