"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class ProtocolParseError(ValidationError):
    """A trial protocol file is malformed; carries the offending line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class AudioReadError(IOError):
    """An audio container could not be read or decoded."""


class ShapeError(ValidationError):
    """A tensor does not match its expected shape."""

    def __init__(self, what, expected, actual):
        super().__init__(f"{what}: expected shape {tuple(expected)}, got {tuple(actual)}")
        self.expected = tuple(expected)
        self.actual = tuple(actual)
