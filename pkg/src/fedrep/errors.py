"""Exception hierarchy shared across the package."""


class FedrepError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(FedrepError, ValueError):
    """Vector lengths or coordinate indices disagree with the model dimension."""


class ConfigError(FedrepError, ValueError):
    """Invalid experiment configuration."""


class UnknownKeyError(ConfigError):
    pass


class SparsityBudgetError(ConfigError):
    """K is not a positive multiple of m, or K/m exceeds d."""


class BufferSizeError(ConfigError):
    """Buffer size s does not divide the client count m."""


class ByzantineFractionError(ConfigError):
    """Byzantine fraction is not in [0, 1/2)."""


class PrivacyParameterError(FedrepError, ValueError):
    """The obfuscation probability makes the privacy bound undefined."""


class AggregationError(FedrepError, ValueError):
    pass


class IntegrityError(FedrepError):
    """A secure sum decoded to a value that can only come from wraparound."""


class ProtocolError(FedrepError, RuntimeError):
    """An internal protocol invariant was violated during a round."""


class DivergenceError(ProtocolError):
    pass
