"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ResourceError(RuntimeError):
    """A configured resource cap (edge storage, box size) would be exceeded."""


class InsufficientDataError(ValueError):
    """Too few replicas or data points for a meaningful estimate."""


class SearchError(RuntimeError):
    """A root/crossing search could not bracket its target."""


class NoReferenceData(LookupError):
    """No tabulated reference exponents exist for the requested dimension."""


class ConfigError(ValueError):
    """A run configuration failed schema validation."""

    def __init__(self, message, path=()):
        self.path = tuple(path)
        where = "/".join(str(p) for p in self.path) or "<root>"
        super().__init__(f"{where}: {message}")
