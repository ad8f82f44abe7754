"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid configuration (bad order, class count out of range, ...)."""


class EmptyCorpusError(ValueError):
    """The training corpus contained no tokens."""


class ParseError(ValueError):
    """A serialized artifact could not be parsed."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class IntegrityError(ValueError):
    """An artifact does not match the vocabulary it claims to be built from."""
