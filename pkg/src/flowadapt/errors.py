"""Shared exception types, mapped to CLI exit codes in cli.py."""


class ConfigurationError(ValueError):
    """Bad or missing configuration input (CLI exit code 2)."""


class StateError(ValueError):
    """Physically inadmissible state (density/pressure at or below floor)."""


class NonConvergenceError(RuntimeError):
    """Newton or pseudo-time iteration failed to converge (CLI exit code 3)."""


class ArtifactError(RuntimeError):
    """Run artifact missing, corrupt, or inconsistent (CLI exit code 4)."""
