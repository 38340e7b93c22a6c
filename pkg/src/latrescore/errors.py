"""Exception types shared across the toolkit."""


class LatticeFormatError(ValueError):
    """A lattice / emission / transcript file violates its schema."""


class InvalidLatticeError(ValueError):
    """An operation received a lattice that fails validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        kinds = ", ".join(sorted({v.kind for v in self.violations}))
        super().__init__(f"invalid lattice: {kinds}")


class PathLimitExceededError(RuntimeError):
    """Path enumeration was refused because the lattice is too large."""

    def __init__(self, count, limit):
        self.count = count
        self.limit = limit
        super().__init__(
            f"lattice has {count} paths, above the enumeration limit {limit}"
        )


class DecodeError(RuntimeError):
    """Beam-search decoding cannot proceed on the given inputs."""


class ScorerError(RuntimeError):
    """Base class for scorer failures; carries the request id when known."""

    def __init__(self, message, request_id=None):
        super().__init__(message)
        self.request_id = request_id


class MalformedResponseError(ScorerError):
    """A response line was not valid JSON or had the wrong shape."""


class ResponseIdMismatchError(ScorerError):
    """A response arrived for an id that was never requested (or already answered)."""


class ScoreLengthMismatchError(ScorerError):
    """A response carried a different number of scores than targets."""


class ScorerTimeoutError(ScorerError):
    """No response arrived within the configured timeout."""


class BackendError(ScorerError):
    """The scorer backend reported an error for a request."""
