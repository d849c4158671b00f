"""Error hierarchy shared by the simulator modules and the commands."""


class LcraError(Exception):
    """Base class for every error raised by the simulator."""


class ConfigError(LcraError, ValueError):
    """A configuration value is missing, malformed or inconsistent."""

    def __init__(self, key, message):
        self.key = key
        self.message = message
        super().__init__(f"{key}: {message}")


class PreconditionError(LcraError, ValueError):
    pass


class DomainError(LcraError, ValueError):
    pass


class MomentOverflowError(LcraError, OverflowError):
    pass


class InfeasiblePlanError(LcraError):
    """The target SNR cannot be met for the weakest layer."""


class UsageError(LcraError):
    pass
