"""Exception hierarchy for the lifting pipeline.

Parsers raise the Malformed*/RasterFormat errors, calibration raises the
depth-degeneracy errors, and the camera module raises the gravity errors.
The batch pipeline catches all of these per scene and converts them into
machine-readable rejection reasons instead of aborting the run.
"""


class SceneLiftError(Exception):
    """Base class for all library errors."""


class ContractViolationError(SceneLiftError):
    """An operation was called with arguments that violate its preconditions."""


class MalformedJsonError(SceneLiftError):
    """Annotation or camera JSON could not be parsed."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class MalformedRleError(SceneLiftError):
    """RLE counts do not encode exactly width*height pixels."""


class RasterFormatError(SceneLiftError):
    """Raster bytes do not match the declared header."""


class InsufficientValidPointsError(SceneLiftError):
    """Fewer valid pixels than the policy minimum; the scene is not liftable."""


class DegenerateRelativeDepthError(SceneLiftError):
    """Mean relative depth over the valid set is not strictly positive."""


class GravityUnavailableError(SceneLiftError):
    """No finite up vector could be extracted from the gravity prediction."""


class DegenerateGravityError(SceneLiftError):
    """Up vector is parallel to the optical axis; yaw is unconstrained."""


class ManifestError(SceneLiftError):
    """Manifest is malformed or contains duplicate scene ids."""
