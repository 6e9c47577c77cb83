"""Exception types shared across the pipeline."""


class FormatError(ValueError):
    """A file does not conform to its declared layout.

    Carries the offending path and, where known, the byte offset at which
    parsing failed.
    """

    def __init__(self, msg, path=None, offset=None):
        self.path = path
        self.offset = offset
        parts = [msg]
        if path is not None:
            parts.append(f"path={path}")
        if offset is not None:
            parts.append(f"offset={offset}")
        super().__init__(": ".join(str(p) for p in parts))


class InvalidDepthError(ValueError):
    """A depth value of zero (no sensor return) was used where a positive
    depth is required."""


class ConfigError(ValueError):
    """A configuration value violates a documented invariant."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss; message names epoch and batch."""
