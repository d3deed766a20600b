"""Exception hierarchy shared by all pipeline stages."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PipelineError):
    """Bad inputs or contract violations (CLI exit code 1)."""


class InputError(PipelineError):
    """I/O failures: missing or unreadable files (CLI exit code 2)."""
