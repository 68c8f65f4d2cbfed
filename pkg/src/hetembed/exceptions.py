"""Exception hierarchy shared by every hetembed module."""


class HetEmbedError(Exception):
    """Base class for all errors raised by hetembed."""


class GraphError(HetEmbedError, ValueError):
    """Invalid graph data: unknown types, schema violations, duplicates.

    ``path`` and ``lineno`` are set when the error comes from file ingestion.
    """

    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        if lineno is not None:
            where = f"{path}:{lineno}" if path else f"line {lineno}"
            message = f"{where}: {message}"
        super().__init__(message)


class WalkError(HetEmbedError, ValueError):
    """A walk could not be generated as requested."""


class EncoderError(HetEmbedError, ValueError):
    """Shape or input problems in the text encoder."""


class ConfigError(HetEmbedError, ValueError):
    """Inconsistent or incomplete run configuration."""


class NumericalError(HetEmbedError, FloatingPointError):
    """Training produced non-finite losses or gradients."""

