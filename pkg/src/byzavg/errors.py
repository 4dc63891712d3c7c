"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised when parameters violate a documented precondition."""


class InfeasibleConfigError(ConfigurationError):
    """Raised when (n, f) admits no valid protocol configuration."""


class DeliveryViolation(RuntimeError):
    """Raised when an adversary's round delivery breaks the network model.

    Carries the structured ``report`` produced by ``validate_delivery``.
    """

    def __init__(self, report):
        super().__init__(str(report))
        self.report = report
