"""Parser for ROS-style message (.msg) and service (.srv) definitions.

One declaration per line. A line is either a field (`type[arity]? name default?`),
a constant (`primitive NAME=VALUE`), a comment (`#` to end of line, outside
quotes), or blank. Message types are referenced as `pkg/Type`; a bare `Type`
resolves within the referencing package first.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    CyclicReferenceError,
    DuplicateFieldError,
    IdlSyntaxError,
    UnresolvedReferenceError,
)

PRIMITIVES = frozenset({
    "bool",
    "int8", "uint8", "int16", "uint16", "int32", "uint32", "int64", "uint64",
    "float32", "float64",
    "string",
})

INT_RANGES = {
    "int8": (-(2 ** 7), 2 ** 7 - 1),
    "uint8": (0, 2 ** 8 - 1),
    "int16": (-(2 ** 15), 2 ** 15 - 1),
    "uint16": (0, 2 ** 16 - 1),
    "int32": (-(2 ** 31), 2 ** 31 - 1),
    "uint32": (0, 2 ** 32 - 1),
    "int64": (-(2 ** 63), 2 ** 63 - 1),
    "uint64": (0, 2 ** 64 - 1),
}

FLOAT_TYPES = frozenset({"float32", "float64"})

_FIELD_NAME_RE = re.compile(r"^[a-z][a-z0-9_]*$")
_CONST_NAME_RE = re.compile(r"^[A-Z][A-Z0-9_]*$")
_TYPE_TOKEN_RE = re.compile(
    r"^([A-Za-z_][A-Za-z0-9_]*(?:/[A-Za-z_][A-Za-z0-9_]*)?)(?:\[(\d*)\])?$"
)
_QUALIFIED_NAME_RE = re.compile(r"^[a-z][a-z0-9_]*/[A-Za-z_][A-Za-z0-9_]*$")
_CONSTANT_LINE_RE = re.compile(r"^(\S+)\s+([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")


@dataclass(frozen=True)
class Arity:
    """Scalar, fixed-length array, or unbounded array."""

    kind: str  # 'scalar' | 'bounded' | 'unbounded'
    length: int | None = None

    def __post_init__(self):
        if self.kind not in ("scalar", "bounded", "unbounded"):
            raise ValueError(f"bad arity kind {self.kind!r}")
        if (self.kind == "bounded") != (self.length is not None):
            raise ValueError("bounded arity requires a length, others forbid it")

    @property
    def is_array(self) -> bool:
        return self.kind != "scalar"

    def suffix(self) -> str:
        if self.kind == "scalar":
            return ""
        if self.kind == "unbounded":
            return "[]"
        return f"[{self.length}]"


SCALAR = Arity("scalar")
UNBOUNDED = Arity("unbounded")


def bounded(n: int) -> Arity:
    return Arity("bounded", n)


@dataclass(frozen=True)
class FieldSpec:
    name: str
    type_name: str
    arity: Arity = SCALAR
    default: object = None


@dataclass(frozen=True)
class Constant:
    name: str
    type_name: str
    value: object


@dataclass(frozen=True)
class MessageSchema:
    qualified_name: str
    fields: tuple[FieldSpec, ...] = ()
    constants: tuple[Constant, ...] = ()

    @property
    def package(self) -> str:
        return self.qualified_name.split("/", 1)[0]


@dataclass(frozen=True)
class ServiceSchema:
    qualified_name: str
    request: MessageSchema
    response: MessageSchema


@dataclass(frozen=True)
class ResolvedSchema:
    """A root type plus every transitively referenced schema, cycle-free."""

    root: str
    nodes: dict[str, MessageSchema]


@dataclass(frozen=True)
class FieldEntry:
    path: str
    type_name: str
    arity: Arity


@dataclass(frozen=True)
class FieldIndex:
    root: str
    entries: tuple[FieldEntry, ...]

    def paths(self) -> list[str]:
        return [e.path for e in self.entries]


def _strip_comment(line: str) -> str:
    out = []
    quote = None
    for ch in line:
        if quote is not None:
            out.append(ch)
            if ch == quote:
                quote = None
        elif ch in ("'", '"'):
            quote = ch
            out.append(ch)
        elif ch == "#":
            break
        else:
            out.append(ch)
    return "".join(out)


def _unquote(text: str) -> str:
    if len(text) >= 2 and text[0] == text[-1] and text[0] in ("'", '"'):
        return text[1:-1]
    return text


def parse_literal(type_name: str, text: str, line_no: int, source: str | None = None):
    """Parse a constant/default literal for a primitive type."""
    text = text.strip()
    if type_name == "bool":
        low = text.lower()
        if low in ("true", "1"):
            return True
        if low in ("false", "0"):
            return False
        raise IdlSyntaxError(line_no, f"bad bool literal {text!r}", source)
    if type_name in INT_RANGES:
        try:
            value = int(text, 10)
        except ValueError:
            raise IdlSyntaxError(line_no, f"bad {type_name} literal {text!r}", source)
        lo, hi = INT_RANGES[type_name]
        if not lo <= value <= hi:
            raise IdlSyntaxError(
                line_no, f"{type_name} literal {value} outside [{lo}, {hi}]", source
            )
        return value
    if type_name in FLOAT_TYPES:
        try:
            value = float(text)
        except ValueError:
            raise IdlSyntaxError(line_no, f"bad {type_name} literal {text!r}", source)
        if value != value or value in (float("inf"), float("-inf")):
            raise IdlSyntaxError(line_no, "float literals must be finite", source)
        return value
    if type_name == "string":
        return _unquote(text)
    raise IdlSyntaxError(line_no, f"no literals for type {type_name!r}", source)


def format_literal(type_name: str, value: object) -> str:
    if type_name == "bool":
        return "true" if value else "false"
    return str(value)


def _parse_type_token(token: str, line_no: int, source: str | None) -> tuple[str, Arity]:
    m = _TYPE_TOKEN_RE.match(token)
    if not m:
        raise IdlSyntaxError(line_no, f"bad type token {token!r}", source)
    base, length = m.group(1), m.group(2)
    if length is None:
        arity = SCALAR
    elif length == "":
        arity = UNBOUNDED
    else:
        n = int(length)
        if n < 1:
            raise IdlSyntaxError(line_no, "bounded array length must be >= 1", source)
        arity = bounded(n)
    return base, arity


def _parse_block(text: str, qualified_name: str, source: str | None,
                 first_line: int = 1) -> MessageSchema:
    fields: list[FieldSpec] = []
    constants: list[Constant] = []
    seen: set[str] = set()

    for offset, raw in enumerate(text.splitlines()):
        line_no = first_line + offset
        line = _strip_comment(raw).strip()
        if not line:
            continue

        cm = _CONSTANT_LINE_RE.match(line)
        if cm:
            type_tok, name, value_text = cm.group(1), cm.group(2), cm.group(3)
            if type_tok not in PRIMITIVES:
                raise IdlSyntaxError(
                    line_no, f"constants require a primitive type, got {type_tok!r}", source
                )
            if not _CONST_NAME_RE.match(name):
                raise IdlSyntaxError(
                    line_no, f"constant names are UPPER_SNAKE, got {name!r}", source
                )
            if not value_text.strip():
                raise IdlSyntaxError(line_no, "constant has no value", source)
            if name in seen:
                raise DuplicateFieldError(name, line_no, source)
            seen.add(name)
            constants.append(
                Constant(name, type_tok, parse_literal(type_tok, value_text, line_no, source))
            )
            continue

        tokens = line.split()
        if len(tokens) not in (2, 3):
            raise IdlSyntaxError(line_no, f"malformed declaration {line!r}", source)
        base, arity = _parse_type_token(tokens[0], line_no, source)
        name = tokens[1]
        if not _FIELD_NAME_RE.match(name):
            raise IdlSyntaxError(
                line_no, f"field names are lower_snake, got {name!r}", source
            )
        if name in seen:
            raise DuplicateFieldError(name, line_no, source)
        seen.add(name)

        default = None
        if len(tokens) == 3:
            if base not in PRIMITIVES:
                raise IdlSyntaxError(
                    line_no, "defaults are only allowed on primitive fields", source
                )
            if arity.is_array:
                raise IdlSyntaxError(
                    line_no, "defaults are not allowed on array fields", source
                )
            default = parse_literal(base, tokens[2], line_no, source)

        fields.append(FieldSpec(name, base, arity, default))

    return MessageSchema(qualified_name, tuple(fields), tuple(constants))


def parse_message_source(text: str, qualified_name: str,
                         source: str | None = None) -> MessageSchema:
    """Parse one .msg body into a MessageSchema.

    Raises IdlSyntaxError / DuplicateFieldError with 1-based line numbers.
    """
    if not _QUALIFIED_NAME_RE.match(qualified_name):
        raise ValueError(f"qualified name must look like pkg/Type, got {qualified_name!r}")
    return _parse_block(text, qualified_name, source)


def parse_service_source(text: str, qualified_name: str,
                         source: str | None = None) -> ServiceSchema:
    """Parse one .srv body (request --- response) into a ServiceSchema."""
    if not _QUALIFIED_NAME_RE.match(qualified_name):
        raise ValueError(f"qualified name must look like pkg/Type, got {qualified_name!r}")

    lines = text.splitlines()
    separators = [
        i for i, raw in enumerate(lines) if _strip_comment(raw).strip() == "---"
    ]
    if len(separators) != 1:
        raise IdlSyntaxError(
            len(lines) if lines else 1,
            f"service needs exactly one '---' separator, found {len(separators)}",
            source,
        )
    cut = separators[0]
    request = _parse_block("\n".join(lines[:cut]), qualified_name + "_Request", source)
    response = _parse_block(
        "\n".join(lines[cut + 1:]), qualified_name + "_Response", source,
        first_line=cut + 2,
    )
    return ServiceSchema(qualified_name, request, response)


def render_message_source(schema: MessageSchema) -> str:
    """Pretty-print a schema back to .msg text (constants first, then fields)."""
    lines = []
    for c in schema.constants:
        lines.append(f"{c.type_name} {c.name}={format_literal(c.type_name, c.value)}")
    for f in schema.fields:
        line = f"{f.type_name}{f.arity.suffix()} {f.name}"
        if f.default is not None:
            line += f" {format_literal(f.type_name, f.default)}"
        lines.append(line)
    return "\n".join(lines) + ("\n" if lines else "")


def render_service_source(schema: ServiceSchema) -> str:
    return (
        render_message_source(schema.request)
        + "---\n"
        + render_message_source(schema.response)
    )


def resolve_type_name(name: str, package: str, available) -> str:
    """Map a (possibly bare) type reference to a qualified name in `available`."""
    if "/" in name:
        if name in available:
            return name
        raise UnresolvedReferenceError(name, None)
    candidate = f"{package}/{name}"
    if candidate in available:
        return candidate
    raise UnresolvedReferenceError(name, None)


def resolve(root: str, registry: dict[str, MessageSchema]) -> ResolvedSchema:
    """Collect the root schema and everything it references, depth-first.

    Raises UnresolvedReferenceError for missing types and CyclicReferenceError
    (with the offending path) for reference cycles.
    """
    if root not in registry:
        raise UnresolvedReferenceError(root, None)

    nodes: dict[str, MessageSchema] = {}

    def visit(qname: str, path: list[str]):
        if qname in path:
            cycle = path[path.index(qname):] + [qname]
            raise CyclicReferenceError(cycle)
        if qname in nodes:
            return
        schema = registry[qname]
        for f in schema.fields:
            if f.type_name in PRIMITIVES:
                continue
            try:
                target = resolve_type_name(f.type_name, schema.package, registry)
            except UnresolvedReferenceError:
                raise UnresolvedReferenceError(f.type_name, qname)
            visit(target, path + [qname])
        nodes[qname] = schema

    visit(root, [])
    # present root-first for readability; dict order is deterministic
    ordered = {root: nodes[root]}
    ordered.update((k, v) for k, v in nodes.items() if k != root)
    return ResolvedSchema(root, ordered)


def flatten(resolved: ResolvedSchema) -> FieldIndex:
    """Depth-first dot-joined leaf index of a resolved schema.

    Primitive fields and arrays of primitives are leaves; an array of messages
    is kept as a single composite leaf carrying its arity.
    """
    entries: list[FieldEntry] = []

    def walk(qname: str, prefix: str):
        schema = resolved.nodes[qname]
        for f in schema.fields:
            path = prefix + f.name
            if f.type_name in PRIMITIVES:
                entries.append(FieldEntry(path, f.type_name, f.arity))
                continue
            target = resolve_type_name(f.type_name, schema.package, resolved.nodes)
            if f.arity.is_array:
                entries.append(FieldEntry(path, target, f.arity))
            else:
                walk(target, path + ".")

    walk(resolved.root, "")
    return FieldIndex(resolved.root, tuple(entries))


@dataclass(frozen=True)
class InterfaceSet:
    """All message/service schemas found under one definition root."""

    messages: dict[str, MessageSchema] = field(default_factory=dict)
    services: dict[str, ServiceSchema] = field(default_factory=dict)

    def registry_with_service_parts(self) -> dict[str, MessageSchema]:
        reg = dict(self.messages)
        for srv in self.services.values():
            reg[srv.request.qualified_name] = srv.request
            reg[srv.response.qualified_name] = srv.response
        return reg


def load_interface_tree(root: str | Path) -> InterfaceSet:
    """Load every `<root>/<pkg>/msg/*.msg` and `<root>/<pkg>/srv/*.srv`."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"message root {root} is not a directory")
    messages: dict[str, MessageSchema] = {}
    services: dict[str, ServiceSchema] = {}
    for pkg_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        pkg = pkg_dir.name
        msg_dir = pkg_dir / "msg"
        if msg_dir.is_dir():
            for path in sorted(msg_dir.glob("*.msg")):
                qname = f"{pkg}/{path.stem}"
                messages[qname] = parse_message_source(
                    path.read_text(), qname, source=str(path)
                )
        srv_dir = pkg_dir / "srv"
        if srv_dir.is_dir():
            for path in sorted(srv_dir.glob("*.srv")):
                qname = f"{pkg}/{path.stem}"
                services[qname] = parse_service_source(
                    path.read_text(), qname, source=str(path)
                )
    return InterfaceSet(messages, services)
