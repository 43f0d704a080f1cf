"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """A caller passed a value outside an operation's contract."""


class PlanError(ValueError):
    """A distributed plan (e.g. a DFFT stage layout) cannot be constructed."""


class ProtocolError(RuntimeError):
    """Workers disagreed about the sequence of collective operations."""


class LaunchError(RuntimeError):
    """A worker raised during :func:`dfno.runtime.launch`.

    The failing rank is available as ``rank`` and the original exception as
    ``__cause__``.
    """

    def __init__(self, rank, exc):
        super().__init__(f"worker {rank} failed: {type(exc).__name__}: {exc}")
        self.rank = rank
        self.original = exc


class InvalidState(RuntimeError):
    """An object was used in a state that forbids the operation."""


class FormatError(ValueError):
    """A chunked tensor file has a bad header."""
