"""Tool definitions generated from message/service definitions.

Tools are plain data: a name, prose for the model, a validation tree, and a
binding that tells the executor what the call means (publish on a topic, call
a service, or drive a capability lifecycle). Nothing here emits source code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from . import idl, validation
from .errors import ConfigError, NameCollisionError


@dataclass(frozen=True)
class PublishBinding:
    topic: str
    type_name: str

    kind = "publish"

    def as_dict(self) -> dict:
        return {"kind": "publish", "topic": self.topic, "type": self.type_name}


@dataclass(frozen=True)
class ServiceBinding:
    service: str
    type_name: str

    kind = "service"

    def as_dict(self) -> dict:
        return {"kind": "service", "service": self.service, "type": self.type_name}


@dataclass(frozen=True)
class LifecycleBinding:
    capability: str

    kind = "lifecycle"

    def as_dict(self) -> dict:
        return {"kind": "lifecycle", "capability": self.capability}


@dataclass(frozen=True)
class ToolDefinition:
    name: str
    title: str
    description: str
    input_schema: validation.ObjectSpec
    binding: object

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "title": self.title,
            "description": self.description,
            "input_schema": validation.to_json_schema(self.input_schema),
            "binding": self.binding.as_dict(),
        }


def default_publisher_name(type_name: str) -> str:
    return "pub_" + type_name.rsplit("/", 1)[-1].lower()


def default_service_tool_name(type_name: str) -> str:
    return "call_" + type_name.rsplit("/", 1)[-1].lower()


def _field_summary(index: idl.FieldIndex, limit: int = 12) -> str:
    parts = []
    for e in index.entries[:limit]:
        parts.append(f"{e.path}: {e.type_name}{e.arity.suffix()}")
    if len(index.entries) > limit:
        parts.append("...")
    return ", ".join(parts)


class ToolLibraryBuilder:
    """Accumulates tool definitions, refusing name collisions."""

    def __init__(self):
        self._tools: list[ToolDefinition] = []
        self._names: set[str] = set()

    def _claim(self, name: str):
        if name in self._names:
            raise NameCollisionError(name)
        self._names.add(name)

    def add(self, tool: ToolDefinition) -> ToolDefinition:
        self._claim(tool.name)
        self._tools.append(tool)
        return tool

    def add_publisher(self, resolved: idl.ResolvedSchema, topic: str,
                      name: str | None = None) -> ToolDefinition:
        """Generate a publish tool for a resolved message type."""
        tool_name = name or default_publisher_name(resolved.root)
        schema = validation.schema_to_validation(resolved)
        index = idl.flatten(resolved)
        tool = ToolDefinition(
            name=tool_name,
            title=f"Publish {resolved.root} to {topic}",
            description=(
                f"Publish one {resolved.root} message on topic {topic}. "
                f"Fields: {_field_summary(index)}."
            ),
            input_schema=schema,
            binding=PublishBinding(topic, resolved.root),
        )
        return self.add(tool)

    def add_service(self, srv: idl.ServiceSchema, service_name: str,
                    registry: dict[str, idl.MessageSchema],
                    name: str | None = None) -> ToolDefinition:
        tool_name = name or default_service_tool_name(srv.qualified_name)
        resolved_req = idl.resolve(srv.request.qualified_name, registry)
        schema = validation.schema_to_validation(resolved_req)
        index = idl.flatten(resolved_req)
        tool = ToolDefinition(
            name=tool_name,
            title=f"Call {srv.qualified_name} at {service_name}",
            description=(
                f"Call service {service_name} ({srv.qualified_name}). "
                f"Request fields: {_field_summary(index)}."
            ),
            input_schema=schema,
            binding=ServiceBinding(service_name, srv.qualified_name),
        )
        return self.add(tool)

    def add_lifecycle(self, name: str, capability: str, title: str, description: str,
                      input_schema: validation.ObjectSpec) -> ToolDefinition:
        tool = ToolDefinition(
            name=name,
            title=title,
            description=description,
            input_schema=input_schema,
            binding=LifecycleBinding(capability),
        )
        return self.add(tool)

    def build(self) -> tuple[ToolDefinition, ...]:
        return tuple(self._tools)


@dataclass(frozen=True)
class ToolLibrary:
    """Tools plus the type knowledge needed to execute them."""

    tools: tuple[ToolDefinition, ...]
    interfaces: idl.InterfaceSet
    catalog: validation.TypeCatalog

    def tool_names(self) -> list[str]:
        return [t.name for t in self.tools]


def load_bindings(source) -> dict:
    """Load a bindings config (dict, YAML text, or path to a YAML file).

    Recognized keys:
      publishers: list of {message, topic, name?}
      services:   list of {service, name, tool?}
    """
    if isinstance(source, dict):
        data = source
    else:
        path = Path(source)
        data = yaml.safe_load(path.read_text())
    if not isinstance(data, dict):
        raise ConfigError("bindings config must be a mapping")
    for key in data:
        if key not in ("publishers", "services"):
            raise ConfigError(f"unknown bindings key {key!r}")
    for entry in data.get("publishers", []) or []:
        missing = {"message", "topic"} - set(entry)
        if missing:
            raise ConfigError(f"publisher binding missing keys: {sorted(missing)}")
    for entry in data.get("services", []) or []:
        missing = {"service", "name"} - set(entry)
        if missing:
            raise ConfigError(f"service binding missing keys: {sorted(missing)}")
    return data


def build_tool_library(message_root: str | Path, bindings) -> ToolLibrary:
    """Parse a definition tree and produce tools for every binding, in config order.

    Parser and resolver errors keep their file provenance.
    """
    interfaces = idl.load_interface_tree(message_root)
    registry = interfaces.registry_with_service_parts()
    config = load_bindings(bindings)

    builder = ToolLibraryBuilder()
    for entry in config.get("publishers", []) or []:
        type_name = entry["message"]
        if type_name not in interfaces.messages:
            raise ConfigError(f"binding references unknown message type {type_name!r}")
        resolved = idl.resolve(type_name, registry)
        builder.add_publisher(resolved, entry["topic"], entry.get("name"))
    for entry in config.get("services", []) or []:
        type_name = entry["service"]
        if type_name not in interfaces.services:
            raise ConfigError(f"binding references unknown service type {type_name!r}")
        builder.add_service(
            interfaces.services[type_name], entry["name"], registry, entry.get("tool")
        )

    catalog = validation.TypeCatalog.from_interfaces(interfaces)
    return ToolLibrary(builder.build(), interfaces, catalog)


def serialize_catalog(tools, revision: int | None = None) -> str:
    """Canonical JSON for a tool catalog; key order is fixed by construction."""
    doc: dict = {}
    if revision is not None:
        doc["revision"] = revision
    doc["tools"] = [t.as_dict() for t in tools]
    return json.dumps(doc, indent=2) + "\n"
