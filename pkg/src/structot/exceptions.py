"""Exception types shared across the package."""


class InputError(ValueError):
    """Raised when caller-supplied data violates a documented precondition."""


class NotCertifiedWarning(RuntimeWarning):
    """An iterative routine hit its iteration cap before meeting its tolerance."""
