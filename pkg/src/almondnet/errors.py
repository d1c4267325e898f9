"""Exception types shared across the package.

Every error raised by library code derives from AlmondNetError so callers
(notably the CLI) can map failures to a single exit code.
"""


class AlmondNetError(Exception):
    pass


# --- annotation ingest ---

class MalformedXml(AlmondNetError):
    pass


class MissingField(AlmondNetError):
    pass


class InvalidBox(AlmondNetError):
    pass


class DimensionMismatch(AlmondNetError):
    pass


# --- image kernels ---

class InvalidKernel(AlmondNetError):
    pass


class InvalidRadius(AlmondNetError):
    pass


class InvalidBlockSize(AlmondNetError):
    pass


class InvalidThresholds(AlmondNetError):
    pass


# --- dataset ---

class EmptyClass(AlmondNetError):
    pass


class TooFewSamples(AlmondNetError):
    pass


class InvalidSize(AlmondNetError):
    pass


class SchemaMismatch(AlmondNetError):
    pass


# --- nn core ---

class ShapeMismatch(AlmondNetError):
    pass


class InvalidRate(AlmondNetError):
    pass


class ZeroBatch(AlmondNetError):
    pass


class NonFiniteGradient(AlmondNetError):
    pass


class StaleCache(AlmondNetError):
    pass


# --- model building / persistence ---

class ShapeUnderflow(AlmondNetError):
    pass


class VersionMismatch(AlmondNetError):
    pass


# --- training / evaluation ---

class DivergedLoss(AlmondNetError):
    def __init__(self, message: str, epoch: int, checkpoint_path=None):
        super().__init__(message)
        self.epoch = epoch
        self.checkpoint_path = checkpoint_path


class LabelMismatch(AlmondNetError):
    pass


class EmptyTestSet(AlmondNetError):
    pass


class EmptyMatrix(AlmondNetError):
    pass
