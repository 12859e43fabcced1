"""Error types that map to the CLI's exit codes."""


class ConfigError(ValueError):
    """Invalid configuration or input files (CLI exit code 1)."""


class NumericError(RuntimeError):
    """Numeric failure such as a non-finite loss (CLI exit code 2)."""
