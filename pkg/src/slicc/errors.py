"""Exception types shared across the package."""


class SliccError(Exception):
    pass


class DimensionError(SliccError, ValueError):
    """Array shape or index is incompatible with the game/network."""


class InputError(SliccError, ValueError):
    """A value is out of its domain (non-finite reward, bad action index, ...)."""


class StateError(SliccError, RuntimeError):
    """Operation is invalid in the current state, e.g. stepping a finished episode."""


class InsufficientDataError(SliccError, RuntimeError):
    pass


class ConfigError(SliccError, ValueError):
    pass
