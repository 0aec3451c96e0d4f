"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
BackendError (and subclasses) -> 4.
"""


class CropmatchError(Exception):
    pass


class ConfigError(CropmatchError):
    """Invalid crop/run configuration."""


class DataError(CropmatchError):
    """Malformed manifests, undecodable images, bad schema."""


class BackendError(CropmatchError):
    """Embedding backend failures."""


class TransportError(BackendError):
    """Remote backend unreachable or a batch failed.

    ``failed_indices`` lists the positions (into the caller's input list)
    whose items could not be embedded.
    """

    def __init__(self, message, failed_indices=()):
        super().__init__(message)
        self.failed_indices = tuple(failed_indices)


class ProtocolError(BackendError):
    """Remote backend answered with data violating the wire contract."""


class SimilarityError(CropmatchError):
    """Undefined similarity: zero vector or dimension mismatch."""


class SegmentationError(CropmatchError):
    """Text segmentation failures (empty scene graph, bad input)."""


class SegmentParseError(SegmentationError):
    """Language-model output could not be parsed into a segment list."""

    def __init__(self, message, raw_text=""):
        super().__init__(message)
        self.raw_text = raw_text
