"""Validation tree construction and exhaustive argument checking."""

from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import corpus_helpers as ch
from neuronrt import idl, validation


def _resolved(sources: dict, root: str):
    reg = {q: idl.parse_message_source(src, q) for q, src in sources.items()}
    return idl.resolve(root, reg)


TWIST = _resolved(
    {
        "geometry/Vector3": "float64 x\nfloat64 y\nfloat64 z\n",
        "geometry/Twist": "Vector3 linear\nVector3 angular\n",
    },
    "geometry/Twist",
)
TWIST_SPEC = validation.schema_to_validation(TWIST)

RGBA = _resolved({"std/ColorRGBA": "uint8 MAX=255\nuint8[4] rgba\n"}, "std/ColorRGBA")
RGBA_SPEC = validation.schema_to_validation(RGBA)


def _twist(x=0.5):
    return {
        "linear": {"x": x, "y": 0.0, "z": 0.0},
        "angular": {"x": 0.0, "y": 0.0, "z": 0.0},
    }


# --- structure ----------------------------------------------------------------

def test_validation_tree_mirrors_message_structure():
    assert isinstance(TWIST_SPEC, validation.ObjectSpec)
    names = [n for n, _ in TWIST_SPEC.fields]
    assert names == ["linear", "angular"]
    linear = TWIST_SPEC.field_map()["linear"]
    assert isinstance(linear, validation.ObjectSpec)
    assert [n for n, _ in linear.fields] == ["x", "y", "z"]


@pytest.mark.parametrize("type_name,lo,hi", [
    ("int8", -128, 127),
    ("uint8", 0, 255),
    ("int16", -32768, 32767),
    ("uint16", 0, 65535),
    ("int32", -(2 ** 31), 2 ** 31 - 1),
    ("uint32", 0, 2 ** 32 - 1),
    ("int64", -(2 ** 63), 2 ** 63 - 1),
    ("uint64", 0, 2 ** 64 - 1),
])
def test_integer_widths_carry_exact_ranges(type_name, lo, hi):
    spec = validation.primitive_spec(type_name)
    assert (spec.minimum, spec.maximum) == (lo, hi)


def test_bounded_array_length_in_spec():
    rgba = RGBA_SPEC.field_map()["rgba"]
    assert isinstance(rgba, validation.ArraySpec)
    assert rgba.length == 4


# --- acceptance/rejection -----------------------------------------------------

def test_valid_twist_accepted():
    report = validation.validate(TWIST_SPEC, _twist())
    assert report.ok
    assert report.violations == ()


def test_int_literal_accepted_for_float_field():
    payload = _twist()
    payload["linear"]["x"] = 1
    assert validation.validate(TWIST_SPEC, payload).ok


def test_missing_field_reported():
    payload = _twist()
    del payload["linear"]["y"]
    report = validation.validate(TWIST_SPEC, payload)
    assert not report.ok
    assert [v.path for v in report.violations] == ["linear.y"]
    assert report.violations[0].got == "missing"


def test_unknown_field_reported():
    payload = _twist()
    payload["linear"]["w"] = 1.0
    report = validation.validate(TWIST_SPEC, payload)
    assert [v.path for v in report.violations] == ["linear.w"]
    assert report.violations[0].got == "unexpected field"


def test_wrong_kind_reported_with_path():
    payload = _twist()
    payload["angular"] = "fast"
    report = validation.validate(TWIST_SPEC, payload)
    assert [v.path for v in report.violations] == ["angular"]
    assert report.violations[0].expected == "object"


def test_nan_and_inf_rejected():
    for bad in (float("nan"), float("inf"), float("-inf")):
        payload = _twist()
        payload["linear"]["z"] = bad
        report = validation.validate(TWIST_SPEC, payload)
        assert [v.path for v in report.violations] == ["linear.z"]


def test_bool_rejected_for_numeric_fields():
    payload = _twist()
    payload["linear"]["x"] = True
    assert not validation.validate(TWIST_SPEC, payload).ok

    report = validation.validate(RGBA_SPEC, {"rgba": [0, True, 2, 3]})
    assert [v.path for v in report.violations] == ["rgba[1]"]


def test_float_literal_rejected_for_int_field():
    report = validation.validate(RGBA_SPEC, {"rgba": [0, 1, 2.0, 3]})
    assert [v.path for v in report.violations] == ["rgba[2]"]


def test_int_out_of_range_rejected():
    report = validation.validate(RGBA_SPEC, {"rgba": [0, 1, 2, 256]})
    assert [v.path for v in report.violations] == ["rgba[3]"]
    assert "[0, 255]" in report.violations[0].expected


def test_wrong_array_length_rejected():
    report = validation.validate(RGBA_SPEC, {"rgba": [0, 1, 2]})
    assert [v.path for v in report.violations] == ["rgba"]
    assert report.violations[0].expected == "length 4"


def test_validation_is_exhaustive_not_fail_fast():
    payload = {
        "linear": {"x": "oops", "y": 0.0},          # wrong kind + missing z
        "angular": {"x": 0.0, "y": 0.0, "z": 0.0, "w": 1.0},  # unknown w
    }
    report = validation.validate(TWIST_SPEC, payload)
    paths = sorted(v.path for v in report.violations)
    assert paths == ["angular.w", "linear.x", "linear.z"]


def test_ok_iff_no_violations():
    good = validation.validate(TWIST_SPEC, _twist())
    bad = validation.validate(TWIST_SPEC, {})
    assert good.ok and not good.violations
    assert not bad.ok and bad.violations


def test_bytes_accepted_for_uint8_arrays():
    spec = validation.ObjectSpec(
        (("data", validation.ArraySpec(validation.primitive_spec("uint8"))),))
    assert validation.validate(spec, {"data": b"\x00\xff\x10"}).ok
    assert validation.validate(spec, {"data": bytearray(b"ab")}).ok


def test_bytes_rejected_for_non_uint8_arrays():
    spec = validation.ObjectSpec(
        (("values", validation.ArraySpec(validation.primitive_spec("float64"))),))
    report = validation.validate(spec, {"values": b"\x01\x02"})
    assert [v.path for v in report.violations] == ["values"]
    assert report.violations[0].got == "bytes"


def test_bytes_length_checked_for_bounded_arrays():
    spec = validation.ObjectSpec(
        (("rgba", validation.ArraySpec(validation.primitive_spec("uint8"), 4)),))
    assert validation.validate(spec, {"rgba": b"\x00\x01\x02\x03"}).ok
    report = validation.validate(spec, {"rgba": b"\x00\x01"})
    assert report.violations[0].expected == "length 4"


def test_optional_and_open_object_specs():
    spec = validation.ObjectSpec(
        (("camera_id", validation.primitive_spec("string")),
         ("config", validation.ObjectSpec((), open=True))),
        optional=frozenset({"config"}),
    )
    assert validation.validate(spec, {"camera_id": "synthetic0"}).ok
    assert validation.validate(
        spec, {"camera_id": "synthetic0", "config": {"anything": 1}}
    ).ok
    report = validation.validate(spec, {})
    assert [v.path for v in report.violations] == ["camera_id"]


# --- json schema rendering ----------------------------------------------------

def test_json_schema_for_twist():
    rendered = validation.to_json_schema(TWIST_SPEC)
    vec = {
        "type": "object",
        "properties": {
            "x": {"type": "number"},
            "y": {"type": "number"},
            "z": {"type": "number"},
        },
        "required": ["x", "y", "z"],
    }
    assert rendered == {
        "type": "object",
        "properties": {"linear": vec, "angular": vec},
        "required": ["linear", "angular"],
    }


def test_json_schema_bounded_array_and_int_range():
    rendered = validation.to_json_schema(RGBA_SPEC)
    assert rendered["properties"]["rgba"] == {
        "type": "array",
        "items": {"type": "integer", "minimum": 0, "maximum": 255},
        "minItems": 4,
        "maxItems": 4,
    }


def test_json_schema_uses_only_contract_keys():
    allowed = {
        "type", "properties", "required", "items",
        "minimum", "maximum", "minItems", "maxItems",
    }

    def walk(node):
        assert set(node) <= allowed
        for sub in node.get("properties", {}).values():
            walk(sub)
        if "items" in node:
            walk(node["items"])

    walk(validation.to_json_schema(TWIST_SPEC))
    walk(validation.to_json_schema(RGBA_SPEC))


# --- packaged corpus catalog ----------------------------------------------------

def test_type_catalog_from_packaged_corpus(message_root):
    interfaces = idl.load_interface_tree(message_root)
    catalog = validation.TypeCatalog.from_interfaces(interfaces)
    assert set(catalog.messages) == set(interfaces.messages)
    req, resp = catalog.service("arm/SolveIk")
    assert validation.validate(req, {
        "target": {
            "position": {"x": 0.3, "y": 0.0, "z": 0.4},
            "orientation": {"w": 1.0, "x": 0.0, "y": 0.0, "z": 0.0},
        },
        "seed": [],
    }).ok
    assert not validation.validate(resp, {"converged": "yes"}).ok


# --- properties ----------------------------------------------------------------

def _spec_pool(message_root=None):
    from neuronrt import idl as _idl
    import neuronrt

    root = str(neuronrt.asset_path("messages"))
    interfaces = _idl.load_interface_tree(root)
    registry = interfaces.registry_with_service_parts()
    specs = {}
    for qname in interfaces.messages:
        resolved = _idl.resolve(qname, registry)
        index = _idl.flatten(resolved)
        if index.entries:
            specs[qname] = (validation.schema_to_validation(resolved), index)
    return specs


_SPECS = _spec_pool()


@given(
    qname=st.sampled_from(sorted(_SPECS)),
    seed=st.integers(min_value=0, max_value=2 ** 32 - 1),
)
@settings(max_examples=120)
def test_generated_valid_payloads_accepted_and_decodable(qname, seed):
    """Soundness: accepted trees decode leaf-by-leaf against the field index."""
    spec, index = _SPECS[qname]
    rng = random.Random(seed)
    payload = ch.gen_valid(spec, rng)
    assert validation.validate(spec, payload).ok
    for path in ch.leaf_paths(spec, payload):
        value = ch.get_leaf(payload, path)
        assert isinstance(value, (bool, int, float, str))


@given(
    qname=st.sampled_from(sorted(_SPECS)),
    seed=st.integers(min_value=0, max_value=2 ** 32 - 1),
)
@settings(max_examples=120)
def test_single_leaf_corruption_always_caught(qname, seed):
    """Completeness: corrupting one leaf yields a violation naming that leaf."""
    spec, _ = _SPECS[qname]
    rng = random.Random(seed)
    payload = ch.gen_valid(spec, rng)
    path = ch.corrupt_one_leaf(spec, payload, rng)
    if path is None:
        return
    report = validation.validate(spec, payload)
    assert not report.ok
    assert any(v.path == path for v in report.violations), (
        f"corrupted {path}, got {[v.path for v in report.violations]}"
    )
