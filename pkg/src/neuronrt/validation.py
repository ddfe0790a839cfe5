"""Validation trees derived from resolved message schemas.

Integer widths carry their exact ranges, floats must be finite, objects are
closed (unknown fields are violations) unless a spec is explicitly opened for
hand-built tool arguments. Validation is exhaustive: every violation in the
argument tree is reported, not just the first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import idl
from .errors import NeuronError


@dataclass(frozen=True)
class PrimitiveSpec:
    kind: str  # 'bool' | 'int' | 'float' | 'string'
    type_name: str
    minimum: int | None = None
    maximum: int | None = None


@dataclass(frozen=True)
class ArraySpec:
    item: object
    length: int | None = None  # None = unbounded


@dataclass(frozen=True)
class ObjectSpec:
    fields: tuple[tuple[str, object], ...]
    optional: frozenset[str] = frozenset()
    open: bool = False

    def field_map(self) -> dict[str, object]:
        return dict(self.fields)


@dataclass(frozen=True)
class Violation:
    path: str
    expected: str
    got: str

    def as_dict(self) -> dict:
        return {"path": self.path, "expected": self.expected, "got": self.got}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(f"{v.path}: expected {v.expected}, got {v.got}" for v in self.violations)


def primitive_spec(type_name: str) -> PrimitiveSpec:
    if type_name == "bool":
        return PrimitiveSpec("bool", type_name)
    if type_name in idl.INT_RANGES:
        lo, hi = idl.INT_RANGES[type_name]
        return PrimitiveSpec("int", type_name, lo, hi)
    if type_name in idl.FLOAT_TYPES:
        return PrimitiveSpec("float", type_name)
    if type_name == "string":
        return PrimitiveSpec("string", type_name)
    raise ValueError(f"not a primitive type: {type_name!r}")


def schema_to_validation(resolved: idl.ResolvedSchema) -> ObjectSpec:
    """Build the validation tree for a resolved message type."""

    def build_object(qname: str) -> ObjectSpec:
        schema = resolved.nodes[qname]
        out = []
        for f in schema.fields:
            if f.type_name in idl.PRIMITIVES:
                spec = primitive_spec(f.type_name)
            else:
                target = idl.resolve_type_name(f.type_name, schema.package, resolved.nodes)
                spec = build_object(target)
            if f.arity.is_array:
                spec = ArraySpec(spec, f.arity.length)
            out.append((f.name, spec))
        return ObjectSpec(tuple(out))

    return build_object(resolved.root)


def _kind_of(value) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "string"
    if isinstance(value, dict):
        return "object"
    if isinstance(value, (list, tuple)):
        return "array"
    if value is None:
        return "null"
    return type(value).__name__


def _describe(value) -> str:
    kind = _kind_of(value)
    if kind in ("object", "array"):
        return kind
    return f"{kind} ({value!r})"


def _expected(spec) -> str:
    if isinstance(spec, ObjectSpec):
        return "object"
    if isinstance(spec, ArraySpec):
        return "array"
    if spec.kind == "int":
        return f"{spec.type_name} in [{spec.minimum}, {spec.maximum}]"
    if spec.kind == "float":
        return f"finite {spec.type_name}"
    return spec.type_name


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _check_primitive(spec: PrimitiveSpec, value, path: str, out: list[Violation]):
    if spec.kind == "bool":
        if not isinstance(value, bool):
            out.append(Violation(path, _expected(spec), _describe(value)))
        return
    if spec.kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            out.append(Violation(path, _expected(spec), _describe(value)))
            return
        if not spec.minimum <= value <= spec.maximum:
            out.append(Violation(path, _expected(spec), _describe(value)))
        return
    if spec.kind == "float":
        # an int literal is fine for a float field, bools are not
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            out.append(Violation(path, _expected(spec), _describe(value)))
            return
        if not math.isfinite(value):
            out.append(Violation(path, _expected(spec), _describe(value)))
        return
    if not isinstance(value, str):
        out.append(Violation(path, _expected(spec), _describe(value)))


def _array_fast_ok(item: PrimitiveSpec, values: list) -> bool:
    """Cheap all-valid test for big primitive arrays; falls back on failure."""
    if item.kind == "int":
        lo, hi = item.minimum, item.maximum
        return all(type(v) is int and lo <= v <= hi for v in values)
    if item.kind == "float":
        return all(
            type(v) in (int, float) and math.isfinite(v) for v in values
        )
    if item.kind == "bool":
        return all(type(v) is bool for v in values)
    return all(type(v) is str for v in values)


def _check(spec, value, path: str, out: list[Violation]):
    if isinstance(spec, ObjectSpec):
        if not isinstance(value, dict):
            out.append(Violation(path or "<root>", "object", _describe(value)))
            return
        declared = spec.field_map()
        for name, sub in spec.fields:
            if name not in value:
                if name not in spec.optional:
                    out.append(Violation(_join(path, name), _expected(sub), "missing"))
            else:
                _check(sub, value[name], _join(path, name), out)
        if not spec.open:
            for key in value:
                if key not in declared:
                    out.append(Violation(_join(path, key), "no such field", "unexpected field"))
        return
    if isinstance(spec, ArraySpec):
        if isinstance(value, (bytes, bytearray)):
            # raw buffers stand in for uint8[]; every byte is in range by
            # construction so only the length needs checking
            item = spec.item
            if not (isinstance(item, PrimitiveSpec) and item.kind == "int"
                    and item.minimum == 0 and item.maximum == 255):
                out.append(Violation(path, _expected(spec), "bytes"))
            elif spec.length is not None and len(value) != spec.length:
                out.append(Violation(path, f"length {spec.length}", f"length {len(value)}"))
            return
        if not isinstance(value, (list, tuple)):
            out.append(Violation(path, "array", _describe(value)))
            return
        if spec.length is not None and len(value) != spec.length:
            out.append(Violation(path, f"length {spec.length}", f"length {len(value)}"))
        if isinstance(spec.item, PrimitiveSpec) and _array_fast_ok(spec.item, value):
            return
        for i, item in enumerate(value):
            _check(spec.item, item, f"{path}[{i}]", out)
        return
    _check_primitive(spec, value, path, out)


def validate(spec, value) -> ValidationReport:
    """Validate an argument tree against a spec, reporting every violation."""
    out: list[Violation] = []
    _check(spec, value, "", out)
    return ValidationReport(tuple(out))


def to_json_schema(spec) -> dict:
    """Render a validation spec with JSON-Schema-compatible keys."""
    if isinstance(spec, ObjectSpec):
        schema = {"type": "object", "properties": {}}
        required = []
        for name, sub in spec.fields:
            schema["properties"][name] = to_json_schema(sub)
            if name not in spec.optional:
                required.append(name)
        if required:
            schema["required"] = required
        return schema
    if isinstance(spec, ArraySpec):
        schema = {"type": "array", "items": to_json_schema(spec.item)}
        if spec.length is not None:
            schema["minItems"] = spec.length
            schema["maxItems"] = spec.length
        return schema
    if spec.kind == "bool":
        return {"type": "boolean"}
    if spec.kind == "int":
        return {"type": "integer", "minimum": spec.minimum, "maximum": spec.maximum}
    if spec.kind == "float":
        return {"type": "number"}
    return {"type": "string"}


@dataclass(frozen=True)
class TypeCatalog:
    """Validation specs for every known message type and service pair."""

    messages: dict[str, ObjectSpec] = field(default_factory=dict)
    services: dict[str, tuple[ObjectSpec, ObjectSpec]] = field(default_factory=dict)

    @classmethod
    def from_interfaces(cls, interfaces: idl.InterfaceSet) -> "TypeCatalog":
        registry = interfaces.registry_with_service_parts()
        messages = {}
        for qname in interfaces.messages:
            messages[qname] = schema_to_validation(idl.resolve(qname, registry))
        services = {}
        for qname, srv in interfaces.services.items():
            req = schema_to_validation(idl.resolve(srv.request.qualified_name, registry))
            resp = schema_to_validation(idl.resolve(srv.response.qualified_name, registry))
            services[qname] = (req, resp)
        return cls(messages, services)

    def message(self, type_name: str) -> ObjectSpec:
        try:
            return self.messages[type_name]
        except KeyError:
            raise NeuronError(f"unknown message type {type_name!r}") from None

    def service(self, type_name: str) -> tuple[ObjectSpec, ObjectSpec]:
        try:
            return self.services[type_name]
        except KeyError:
            raise NeuronError(f"unknown service type {type_name!r}") from None
