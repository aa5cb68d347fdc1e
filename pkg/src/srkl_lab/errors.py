"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ShapeError(ValueError):
    """Array arguments have incompatible shapes."""


class EmptyInput(ValueError):
    pass


class ConfigMismatch(ValueError):
    pass


class ConfigError(ValueError):
    """Invalid run configuration (maps to exit status 1 on the command line)."""


class StaleRollouts(RuntimeError):
    """Rollouts were sampled from a different policy version than the one being updated."""


class GroupTooSmall(ValueError):
    pass


class OutOfRange(ValueError):
    pass


class BracketError(RuntimeError):
    pass


class NonConvergence(RuntimeError):
    pass


class EmptyResponse(ValueError):
    pass
