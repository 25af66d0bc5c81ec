"""Exception hierarchy shared by all pipeline stages."""


class SaadError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SaadError, ValueError):
    """Bad argument, config value or violated precondition."""


class DataError(ValidationError):
    """Input data cannot be turned into a usable dataset."""


class MissingColumnError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class UnseenCategoryError(DataError):
    pass


class ComputationError(SaadError, RuntimeError):
    """A numerical stage failed on otherwise valid input."""
