"""Exception types shared across the package.

Every error that can cross a module or wire boundary has its own class so
callers (and session rejection messages) can name it precisely. The wire
reason string for an error is its class name.
"""


class SpatialPromptError(Exception):
    """Base class for all package errors."""

    @property
    def reason(self) -> str:
        return type(self).__name__


# --- sketch document ---

class UnknownStroke(SpatialPromptError):
    pass


class DuplicateStrokeId(SpatialPromptError):
    pass


class DegenerateStroke(SpatialPromptError):
    pass


class NonFiniteCoordinate(SpatialPromptError):
    pass


class NonPositiveScale(SpatialPromptError):
    pass


class NonPositiveSpacing(SpatialPromptError):
    pass


class NonPositiveLength(SpatialPromptError):
    pass


class MalformedOp(SpatialPromptError):
    pass


class MalformedDocument(SpatialPromptError):
    pass


# --- constraint compiler ---

class NonPositiveEpsilon(SpatialPromptError):
    pass


class EmptyPointSet(SpatialPromptError):
    pass


class NonFinitePoint(SpatialPromptError):
    pass


class EmptySketch(SpatialPromptError):
    pass


class MalformedConstraintSet(SpatialPromptError):
    pass


# --- prompt assembly ---

class MissingSemanticPrompt(SpatialPromptError):
    pass


class InvalidConstraintSet(SpatialPromptError):
    pass


class MalformedRequest(SpatialPromptError):
    pass


# --- generation backend ---

class BackendError(SpatialPromptError):
    pass


class TaskTimeout(BackendError):
    pass


class BackendRejected(BackendError):
    pass


class NetworkError(BackendError):
    pass


class MalformedAsset(BackendError):
    pass


class AssetTooLarge(BackendError):
    pass


class GenerationFailed(BackendError):
    pass


class ConfigurationError(SpatialPromptError):
    pass


class EmptyConstraintSet(SpatialPromptError):
    pass


class DegenerateMesh(SpatialPromptError):
    pass


# --- mesh / validation ---

class MalformedObj(SpatialPromptError):
    pass


class EmptyMesh(SpatialPromptError):
    pass


# --- collaborative session ---

class SessionFull(SpatialPromptError):
    pass


class DuplicateParticipantId(SpatialPromptError):
    pass


class NotAParticipant(SpatialPromptError):
    pass


class GenerationBusy(SpatialPromptError):
    pass


class UnknownSession(SpatialPromptError):
    pass


class ProtocolError(SpatialPromptError):
    pass


class SequenceGap(SpatialPromptError):
    pass
