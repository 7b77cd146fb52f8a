"""Exception taxonomy shared by the library, the CLI, and the service.

Exit-code contract used by the CLI:
    0  success
    1  usage error (bad arguments, invalid request parameters)
    2  data error (unreadable images, malformed manifests, degenerate inputs)
    3  model error (bad magic, unsupported version, checksum failure)
"""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_MODEL = 3


class WbaugError(Exception):
    """Base class for all library errors."""


class InvalidInputError(WbaugError, ValueError):
    """An argument violates an operation's preconditions."""


class DegenerateInputError(WbaugError, ValueError):
    """Input is structurally valid but carries no usable information

    (rank-deficient color sets, all-dark images, zero-variance data).
    """


class GrayscaleImageError(DegenerateInputError):
    """Image failed the grayscale screen; carries the skip reason."""

    def __init__(self, mean_diff: float):
        self.mean_diff = mean_diff
        super().__init__(
            "grayscale image skipped: mean inter-channel difference "
            f"{mean_diff:.3g} is below 1/255"
        )


class InvalidStateError(WbaugError, RuntimeError):
    """Operation on an object that is not in a usable state."""


class ModelFormatError(WbaugError):
    """Problems with the model container file."""


class CorruptModelError(ModelFormatError):
    """Bad magic, failed checksum, or truncated/overlong payload."""


class UnsupportedVersionError(ModelFormatError):
    """Model file declares a format version this build cannot read."""
