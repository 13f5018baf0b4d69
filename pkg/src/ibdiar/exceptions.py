"""Exception hierarchy shared by all ibdiar modules."""


class DiarizationError(Exception):
    """Base class for errors raised by ibdiar."""


class ParameterError(DiarizationError, ValueError):
    """Invalid argument, configuration value or input shape."""


class FeatureFileError(DiarizationError, ValueError):
    """A feature file could not be parsed or failed validation."""


class CheckpointError(DiarizationError, ValueError):
    """A model checkpoint is malformed or incompatible."""


class TransferStoreError(DiarizationError):
    """Invalid operation on a transfer store."""
