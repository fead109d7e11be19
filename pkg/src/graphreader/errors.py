"""Exception types shared across the package."""


class GraphReaderError(Exception):
    """Base class for all package errors."""


class DimensionError(GraphReaderError):
    """Tensor shapes are inconsistent with the requested operation."""


class ContractError(GraphReaderError):
    """A caller violated an operation's precondition."""


class EmptySupportError(GraphReaderError):
    """A softmax was asked to normalize over an empty support."""


class NonFiniteError(GraphReaderError):
    """A forward computation produced NaN or Inf."""


class DataError(GraphReaderError):
    """An input file violates its schema."""


class ParseError(DataError):
    """A file could not be parsed; message names the offending line."""


class ConfigError(GraphReaderError):
    """A run configuration is invalid."""


class CheckpointError(GraphReaderError):
    """A checkpoint is missing, corrupt, or inconsistent with the config."""
