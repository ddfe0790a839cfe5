"""Tool generation from message definitions, library building, golden catalogs."""

from __future__ import annotations

import json

import pytest

from conftest import GOLDEN_DIR
from neuronrt import idl, tools, validation
from neuronrt.errors import ConfigError, NameCollisionError


def _resolved_twist():
    reg = {
        "geometry/Vector3": idl.parse_message_source(
            "float64 x\nfloat64 y\nfloat64 z\n", "geometry/Vector3"
        ),
        "geometry/Twist": idl.parse_message_source(
            "Vector3 linear\nVector3 angular\n", "geometry/Twist"
        ),
    }
    return idl.resolve("geometry/Twist", reg)


def test_default_publisher_names():
    assert tools.default_publisher_name("geometry/Twist") == "pub_twist"
    assert tools.default_publisher_name("arm/EECommand") == "pub_eecommand"
    assert tools.default_service_tool_name("arm/SolveIk") == "call_solveik"


def test_publisher_tool_shape():
    builder = tools.ToolLibraryBuilder()
    tool = builder.add_publisher(_resolved_twist(), "/cmd_vel")
    assert tool.name == "pub_twist"
    assert tool.binding == tools.PublishBinding("/cmd_vel", "geometry/Twist")
    assert "/cmd_vel" in tool.title
    assert "linear.x" in tool.description
    assert isinstance(tool.input_schema, validation.ObjectSpec)


def test_explicit_name_override():
    builder = tools.ToolLibraryBuilder()
    tool = builder.add_publisher(_resolved_twist(), "/cmd_vel", name="drive")
    assert tool.name == "drive"


def test_name_collision_rejected():
    builder = tools.ToolLibraryBuilder()
    builder.add_publisher(_resolved_twist(), "/cmd_vel", name="pub_twist")
    with pytest.raises(NameCollisionError):
        builder.add_publisher(_resolved_twist(), "/other", name="pub_twist")


def test_collision_across_tool_kinds():
    builder = tools.ToolLibraryBuilder()
    builder.add_lifecycle(
        "pub_twist", "camera", "t", "d", validation.ObjectSpec(())
    )
    with pytest.raises(NameCollisionError):
        builder.add_publisher(_resolved_twist(), "/cmd_vel")


def test_build_library_from_packaged_corpus(message_root, bindings_path):
    library = tools.build_tool_library(message_root, bindings_path)
    assert library.tool_names() == ["pub_twist", "pub_eecommand", "call_solveik"]
    pub_twist = library.tools[0]
    assert pub_twist.binding.topic == "/cmd_vel"
    report = validation.validate(pub_twist.input_schema, {
        "linear": {"x": 0.5, "y": 0.0, "z": 0.0},
        "angular": {"x": 0.0, "y": 0.0, "z": 0.0},
    })
    assert report.ok
    # the library carries validation specs for every corpus type
    assert "sensor/Image" in library.catalog.messages


def test_library_build_is_deterministic(message_root, bindings_path):
    a = tools.serialize_catalog(tools.build_tool_library(message_root, bindings_path).tools)
    b = tools.serialize_catalog(tools.build_tool_library(message_root, bindings_path).tools)
    assert a == b


def test_catalog_matches_golden(message_root, bindings_path):
    library = tools.build_tool_library(message_root, bindings_path)
    golden = (GOLDEN_DIR / "catalog.json").read_bytes()
    assert tools.serialize_catalog(library.tools).encode() == golden


def test_rich_catalog_matches_golden(message_root):
    bindings = {
        "publishers": [
            {"message": "std/ColorRGBA", "topic": "/marker_color"},
            {"message": "sensor/Image", "topic": "/camera/image"},
            {"message": "geometry/PoseStamped", "topic": "/goal"},
            {"message": "world/Fleet", "topic": "/world/vehicles"},
            {"message": "sensor/JointState", "topic": "/joint_states"},
        ],
        "services": [
            {"service": "std/Trigger", "name": "/world/reset", "tool": "call_reset"},
        ],
    }
    library = tools.build_tool_library(message_root, bindings)
    golden = (GOLDEN_DIR / "catalog_rich.json").read_bytes()
    assert tools.serialize_catalog(library.tools).encode() == golden


def test_binding_against_unknown_type_rejected(message_root):
    with pytest.raises(ConfigError):
        tools.build_tool_library(
            message_root, {"publishers": [{"message": "nope/Type", "topic": "/t"}]}
        )


def test_unknown_bindings_key_rejected(message_root):
    with pytest.raises(ConfigError):
        tools.build_tool_library(message_root, {"publishes": []})


def test_parser_errors_keep_file_provenance(tmp_path):
    pkg = tmp_path / "bad" / "msg"
    pkg.mkdir(parents=True)
    (pkg / "Broken.msg").write_text("uint8[0] data\n")
    with pytest.raises(Exception) as err:
        tools.build_tool_library(tmp_path, {"publishers": []})
    assert "Broken.msg" in str(err.value)


def test_serialized_tool_entry_shape(message_root, bindings_path):
    library = tools.build_tool_library(message_root, bindings_path)
    doc = json.loads(tools.serialize_catalog(library.tools))
    entry = doc["tools"][0]
    assert list(entry) == ["name", "title", "description", "input_schema", "binding"]
    assert entry["binding"] == {
        "kind": "publish", "topic": "/cmd_vel", "type": "geometry/Twist"
    }
    srv = doc["tools"][2]
    assert srv["binding"] == {
        "kind": "service", "service": "/arm/solve_ik", "type": "arm/SolveIk"
    }
