"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration/model parameters."""


class InvalidAction(ValueError):
    """Action violates the allocation invariants."""


class InfeasiblePower(RuntimeError):
    """Sustaining the fixed active rate would exceed the transmit power cap."""


class ShapeError(ValueError):
    """Tensor shapes are inconsistent with the network layout."""


class InsufficientData(RuntimeError):
    """A replay buffer was sampled before it held enough transitions."""


class EmptyMask(ValueError):
    """An action mask excluded every mode."""


class EmptyInput(ValueError):
    """An aggregation was asked to summarize nothing."""
