"""Local implicit shape priors: encoding, meshing and metrics."""

from ._deepls import (
    ConfigError,
    ContractError,
    DataError,
    EncodedScene,
    FormatError,
    NumericalError,
    accuracy,
    blob,
    chamfer,
    completion,
    icosphere,
    load_mesh,
    run_cli,
    sample_surface,
    save_mesh,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "EncodedScene",
    "FormatError",
    "NumericalError",
    "accuracy",
    "blob",
    "chamfer",
    "CliError",
    "cli",
    "completion",
    "icosphere",
    "load_mesh",
    "run_cli",
    "sample_surface",
    "save_mesh",
]


class CliError(RuntimeError):
    def __init__(self, code, stderr):
        super().__init__(f"exit code {code}: {stderr.strip()}")
        self.code = code
        self.stderr = stderr


def cli(*args):
    """Run a subcommand; returns stdout and raises CliError on a nonzero exit."""
    code, out, err = run_cli([str(a) for a in args])
    if code != 0:
        raise CliError(code, err)
    return out
