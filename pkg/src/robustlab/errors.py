class ConfigError(ValueError):
    """Invalid configuration or parameters."""


class ContractError(ValueError):
    """A precondition of an operation does not hold."""


class CapabilityError(TypeError):
    """The object lacks a capability an operation needs (e.g. settable state)."""


class DivergenceError(FloatingPointError):
    """Training produced non-finite parameters."""


class ParseError(ConfigError):
    """Malformed input file; ``lineno`` is 1-based when known."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)
