"""Exception types shared across the codec modules."""


class InvalidInputError(ValueError):
    """An argument violates an operation's precondition."""


class DomainError(ValueError):
    """Inputs are well-formed but the requested quantity is undefined for them."""


class StreamError(RuntimeError):
    """A bitstream is truncated, corrupted, or inconsistent with its header."""

    def __init__(self, message: str, position=None):
        if position is not None:
            message = f"{message} (at {position})"
        super().__init__(message)
        self.position = position
