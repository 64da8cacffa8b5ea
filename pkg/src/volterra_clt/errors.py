"""Exception types shared across the package."""


class VolterraError(Exception):
    """Base class for all package-specific errors."""


class DomainError(VolterraError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConvergenceError(VolterraError, RuntimeError):
    """A series or iteration failed to converge within its budget."""


class ContractError(VolterraError, ValueError):
    """Mismatched shapes, grids or other caller-side contract violations."""


class DivergenceError(VolterraError, RuntimeError):
    """A simulated state exceeded the divergence threshold.

    Carries the first offending step index so failures are actionable.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ConfigError(VolterraError, ValueError):
    """Invalid experiment configuration; carries all collected messages."""

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))
