"""Exception hierarchy shared across the pipeline modules."""


class ChartBlenderError(Exception):
    """Base class for all errors raised by this package."""


# geometry
class NonPositiveDepth(ChartBlenderError):
    pass


class PixelOutOfBounds(ChartBlenderError):
    pass


class BehindCamera(ChartBlenderError):
    pass


# depth ingestion / sampling
class MissingFrame(ChartBlenderError):
    def __init__(self, frame_index, message=None):
        self.frame_index = frame_index
        super().__init__(message or f"missing depth frame {frame_index}")


class DimensionMismatch(ChartBlenderError):
    pass


class CorruptFile(ChartBlenderError):
    def __init__(self, path, message=None):
        self.path = str(path)
        super().__init__(message or f"corrupt depth file: {path}")


class NoValidDepth(ChartBlenderError):
    pass


# camera tracking
class InsufficientCorrespondences(ChartBlenderError):
    def __init__(self, count, required, message=None):
        self.count = count
        self.required = required
        super().__init__(
            message or f"{count} correspondences after robust fitting, need {required}"
        )


class DegenerateGeometry(ChartBlenderError):
    pass


class TrackingFailed(ChartBlenderError):
    def __init__(self, frame_index, message=None):
        self.frame_index = frame_index
        super().__init__(message or f"tracking failed on pair {frame_index}->{frame_index + 1}")


# object tracking
class IngestFormatError(ChartBlenderError):
    pass


class SeedOutOfBounds(ChartBlenderError):
    pass


class AllSamplesInvalid(ChartBlenderError):
    def __init__(self, frame_range, message=None):
        self.frame_range = frame_range
        super().__init__(message or f"no valid depth samples in frames {frame_range}")


class LengthMismatch(ChartBlenderError):
    pass


# charts
class EmptyData(ChartBlenderError):
    pass


class DuplicateColumn(ChartBlenderError):
    pass


class UnparseableCell(ChartBlenderError):
    def __init__(self, row, col, message=None):
        self.row = row
        self.col = col
        super().__init__(message or f"unparseable cell at row {row}, column {col!r}")


class MappingError(ChartBlenderError):
    pass


# compositing / rendering
class MissingTrajectory(ChartBlenderError):
    pass


class MissingDepth(ChartBlenderError):
    pass


# synthetic scenes
class InvalidSceneSpec(ChartBlenderError):
    pass


# persistence / service
class UnsupportedVersion(ChartBlenderError):
    pass


class ValidationError(ChartBlenderError):
    def __init__(self, field, message=None):
        self.field = field
        super().__init__(message or f"invalid project field: {field}")
