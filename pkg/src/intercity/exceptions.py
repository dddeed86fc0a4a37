"""Exception hierarchy shared by every module of the package."""


class ConfigurationError(ValueError):
    """A model specification, parameter file or scenario cannot be resolved."""


class ValidationError(ConfigurationError):
    """Input failed validation; ``messages`` holds every problem found."""

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class DomainError(ValueError):
    """An operation was called outside its mathematical domain."""


class NumericError(ArithmeticError):
    """A non-finite value or zero probability appeared during evaluation."""
