class ConfigError(ValueError):
    """Invalid parameters or configuration (CLI exit code 2)."""


class WalkAbort(RuntimeError):
    """A run hit a hard runtime limit (CLI exit code 3)."""


class CouplingError(RuntimeError):
    """A coupling invariant was violated; always indicates a bug."""
