class ConfigError(ValueError):
    """Invalid or unknown configuration value."""


class DataError(ValueError):
    """Input data (log, index, checkpoint) violates its format or contract."""


class NumericError(RuntimeError):
    """A tensor became non-finite during a forward or backward pass."""

    def __init__(self, tensor: str):
        super().__init__(f"non-finite values in {tensor}")
        self.tensor = tensor
