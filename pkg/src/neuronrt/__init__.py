"""Desk-scale embodied-agent runtime.

Message definitions become validated tools, tools drive a typed pub/sub bus,
and an orchestrator routes instructions either straight to topic publishes or
through capability lifecycles (camera, action model, arm controller) running
as isolated nodes against simulated hardware.
"""

__version__ = "0.1.0"

from . import errors, idl, tools, validation  # noqa: F401

ASSETS_DIRNAME = "assets"


def asset_path(*parts: str):
    """Path to a packaged asset (message tree, urdf fixtures, default configs)."""
    from importlib.resources import files

    p = files(__package__).joinpath(ASSETS_DIRNAME)
    for part in parts:
        p = p.joinpath(part)
    return p
