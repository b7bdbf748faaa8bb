"""Exception hierarchy shared across the toolchain."""


class RoadgenError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RoadgenError):
    """Invalid configuration value or malformed config file."""


class IngestionError(RoadgenError):
    """Map-data acquisition failed.

    ``retryable`` is True for transient transport failures and False for
    permanent problems (bad cache, offline miss).
    """

    def __init__(self, message, retryable=False):
        super().__init__(message)
        self.retryable = retryable


class ServiceResponseError(RoadgenError):
    """Map-data service returned a response we could not interpret."""


class GeometryError(RoadgenError):
    """Degenerate or out-of-contract geometric input."""


class TrainingDivergedError(RoadgenError):
    """Loss became non-finite during training."""

    def __init__(self, step, param_norms):
        super().__init__(
            f"non-finite loss at step {step}; parameter norms: "
            + ", ".join(f"{k}={v:.3e}" for k, v in sorted(param_norms.items()))
        )
        self.step = step
        self.param_norms = param_norms


class SamplingDivergedError(RoadgenError):
    """Reverse diffusion produced a non-finite state."""

    def __init__(self, step):
        super().__init__(f"non-finite state while denoising at step {step}")
        self.step = step


class CheckpointError(RoadgenError):
    """Base class for checkpoint container problems."""


class CheckpointVersionError(CheckpointError):
    """Bad magic bytes or unsupported container version."""


class CheckpointTruncatedError(CheckpointError):
    """File ends before the declared payload."""


class CheckpointIntegrityError(CheckpointError):
    """Manifest and payload disagree (offsets, sizes, duplicate names)."""


class XodrError(RoadgenError):
    """Base class for OpenDRIVE serialization problems."""


class XodrDocumentError(XodrError):
    """Document violates its own invariants; refused by the serializer."""


class XodrParseError(XodrError):
    """Input is not well-formed XML or lacks required structure."""


class XodrMissingAttributeError(XodrParseError):
    """A required attribute is absent from an element."""


class XodrUnsupportedElementError(XodrParseError):
    """The document uses a geometry or structural element outside the subset."""

    def __init__(self, element, context=""):
        msg = f"unsupported element '{element}'"
        if context:
            msg += f" ({context})"
        super().__init__(msg)
        self.element = element


class XodrContinuityError(XodrParseError):
    """s-offsets or segment endpoints do not line up."""
