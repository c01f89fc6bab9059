"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code so that every failing pipeline stage
can be told apart from the shell.
"""


class VkrodError(Exception):
    """Base class; carries the exit code used by the CLI."""

    exit_code = 1
    stage = "vkrod"


class ConfigError(VkrodError):
    exit_code = 2
    stage = "config"

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class MeshError(VkrodError):
    exit_code = 3
    stage = "mesh"


class FieldError(VkrodError):
    """Bad 3D field data (file format, degenerate gradients, missing samples)."""

    exit_code = 3
    stage = "field"


class SolverError(VkrodError):
    exit_code = 4
    stage = "solver"


class NewtonError(SolverError):
    """Newton iteration did not reach tolerance; usually the timestep is too large."""

    stage = "newton"


class OutputError(VkrodError):
    exit_code = 5
    stage = "io"
