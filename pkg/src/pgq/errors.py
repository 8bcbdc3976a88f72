"""Exception types shared across the package."""


class UsageError(ValueError):
    """Caller violated a precondition (bad shapes, bad parameters, bad config).

    The CLI maps this to exit code 2.
    """


class FormatError(UsageError):
    """A binary file or manifest failed to parse."""
