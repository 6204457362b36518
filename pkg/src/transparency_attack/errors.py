"""Exception types raised across the toolkit."""


class ImageFormatError(ValueError):
    """File decoded, but is not the kind of image the caller needs."""


class DomainError(ValueError):
    """Input lies outside the domain where an operation is defined."""
