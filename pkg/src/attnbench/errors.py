"""Exception types shared across the toolkit."""


class DimensionError(ValueError):
    """Shapes or extents do not satisfy an operation's contract."""


class ContractError(RuntimeError):
    """An operation was called outside its allowed state or with bad values."""


class ConfigurationError(ValueError):
    """Invalid or unknown configuration."""


class IngestionError(ValueError):
    """Dataset directory or file cannot be ingested."""


class EvaluationError(ValueError):
    """A metric is undefined for the given inputs."""


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""
