"""Python access to the mfac core: configs, exact oracle tables and the CLI commands."""

import json

from . import _mfac
from ._mfac import (
    CapExceeded,
    ConfigError,
    IoError,
    ModelError,
    NonConvergence,
    NotALift,
    TwoLayerNet,
    compositions,
    lift_policy,
    recover_individual,
    version,
)

__version__ = version()


def default_config():
    return json.loads(_mfac.default_config())


def resolve_config(user=None, sets=()):
    """Merge a partial config (dict) onto the defaults, applying key=value overrides."""
    return json.loads(_mfac.resolve_config(json.dumps(user or {}), list(sets)))


def run(command, config=None, sets=(), out=None):
    """Run a CLI subcommand in-process. Returns (exit_code, stdout, stderr)."""
    cfg = resolve_config(config, sets)
    if out is not None:
        cfg["output_dir"] = str(out)
    return _mfac.run_command(command, json.dumps(cfg))


def run_criterion(criterion, config=None, sets=()):
    return json.loads(_mfac.run_criterion(criterion, json.dumps(resolve_config(config, sets))))


class Oracle(_mfac.Oracle):
    """Exact tables for the configured instance and policy."""

    def __init__(self, config=None, sets=()):
        super().__init__(json.dumps(resolve_config(config, sets)))


__all__ = [
    "CapExceeded",
    "ConfigError",
    "IoError",
    "ModelError",
    "NonConvergence",
    "NotALift",
    "Oracle",
    "TwoLayerNet",
    "compositions",
    "default_config",
    "lift_policy",
    "recover_individual",
    "resolve_config",
    "run",
    "run_criterion",
    "version",
]
