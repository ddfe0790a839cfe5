from __future__ import annotations

from pathlib import Path

import pytest

import neuronrt

REPO_ROOT = Path(__file__).resolve().parents[1]
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def message_root() -> Path:
    return Path(str(neuronrt.asset_path("messages")))


@pytest.fixture(scope="session")
def bindings_path() -> Path:
    return Path(str(neuronrt.asset_path("configs", "bindings.yaml")))


@pytest.fixture(scope="session")
def urdf_dir() -> Path:
    return Path(str(neuronrt.asset_path("urdf")))


@pytest.fixture(scope="session")
def type_catalog(message_root):
    from neuronrt.idl import load_interface_tree
    from neuronrt.validation import TypeCatalog

    return TypeCatalog.from_interfaces(load_interface_tree(message_root))


@pytest.fixture(scope="session")
def library(message_root, bindings_path):
    from neuronrt.tools import build_tool_library

    return build_tool_library(message_root, bindings_path)
