"""Exception hierarchy shared across the package."""


class FaceFocalError(Exception):
    """Base class for all package errors."""


class DegenerateRegionError(FaceFocalError):
    """Landmarks collapse to a zero-width or zero-height face region."""


class SamplingExhaustedError(FaceFocalError):
    """Rejection sampling ran out of attempts before filling the box set."""

    def __init__(self, message: str, accepted: int, requested: int):
        super().__init__(message)
        self.accepted = accepted
        self.requested = requested


class ConfigurationError(FaceFocalError):
    """A template set, registry, or config file is missing or inconsistent."""


class OutOfBoundsError(FaceFocalError):
    """A region lies entirely outside the image it is applied to."""


class ImageDecodeError(FaceFocalError):
    """The image file could not be decoded."""


class UnparseableLabelError(FaceFocalError):
    """No label of the requested task could be extracted from model text.

    Callers record the failure and score the sample as wrong; this error
    must never abort an evaluation run.
    """


class BindingError(FaceFocalError):
    """A prompt template was rendered without a required placeholder value."""


class RegistryError(ConfigurationError):
    """The prompt template registry is incomplete or malformed."""


class ProtocolError(FaceFocalError):
    """Judge protocol invoked with the wrong number of captions."""


class IncompleteInputError(FaceFocalError):
    """A dataset build is missing required annotations or inputs."""

    def __init__(self, message: str, offenders: list[str]):
        super().__init__(message)
        self.offenders = offenders


class BuildIntegrityError(FaceFocalError):
    """Record counts disagree with the manifest expectation."""


class ShortfallError(FaceFocalError):
    """The sample pool cannot satisfy the requested test-split counts."""

    def __init__(self, message: str, deficits: dict[str, int]):
        super().__init__(message)
        self.deficits = deficits


class EndpointError(FaceFocalError):
    """A chat endpoint request failed after exhausting retries."""


class AuthError(EndpointError):
    """The endpoint rejected our credentials; the run aborts immediately."""


class EmptyReportError(FaceFocalError):
    """Aggregation was asked to summarize zero parsed verdicts."""


class ConflictError(FaceFocalError):
    """A review decision raced an earlier one; first write wins."""
