"""Exception hierarchy shared across the package."""


class KgfError(Exception):
    """Base class for every error raised by kgf."""


class ConfigError(KgfError):
    """A configuration key is missing, malformed or refers to a missing file."""


class StageError(KgfError):
    """A pipeline stage failed hard."""
