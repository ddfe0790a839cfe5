"""Exception hierarchy shared across the runtime."""

from __future__ import annotations


class NeuronError(Exception):
    """Base class for every error raised by this package."""


# --- message definition parsing / resolution ---------------------------------

class IdlSyntaxError(NeuronError):
    def __init__(self, line: int, reason: str, source: str | None = None):
        self.line = line
        self.reason = reason
        self.source = source
        prefix = f"{source}:" if source else "line "
        super().__init__(f"{prefix}{line}: {reason}")


class DuplicateFieldError(NeuronError):
    def __init__(self, name: str, line: int, source: str | None = None):
        self.name = name
        self.line = line
        self.source = source
        prefix = f"{source}:" if source else "line "
        super().__init__(f"{prefix}{line}: duplicate field name {name!r}")


class UnresolvedReferenceError(NeuronError):
    def __init__(self, name: str, referenced_from: str | None):
        self.name = name
        self.referenced_from = referenced_from
        where = f" (referenced from {referenced_from})" if referenced_from else ""
        super().__init__(f"unresolved type reference {name!r}{where}")


class CyclicReferenceError(NeuronError):
    def __init__(self, cycle: list[str]):
        self.cycle = list(cycle)
        super().__init__("cyclic type reference: " + " -> ".join(self.cycle))


# --- tool generation ----------------------------------------------------------

class NameCollisionError(NeuronError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"tool name {name!r} already registered")


# --- bus ----------------------------------------------------------------------

class UnknownTopicError(NeuronError):
    def __init__(self, topic: str):
        self.topic = topic
        super().__init__(f"topic {topic!r} is not advertised")


class TypeMismatchError(NeuronError):
    def __init__(self, detail: str, violations=None):
        self.violations = violations or []
        super().__init__(detail)


class UnknownServiceError(NeuronError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"service {name!r} is not advertised")


class ServiceCallError(NeuronError):
    def __init__(self, detail: str, name: str | None = None):
        self.name = name
        super().__init__(detail)


class DuplicateNodeIdError(NeuronError):
    def __init__(self, node_id: str):
        self.node_id = node_id
        super().__init__(f"node id {node_id!r} already exists")


class UnknownNodeError(NeuronError):
    def __init__(self, node_id: str):
        self.node_id = node_id
        super().__init__(f"no node with id {node_id!r}")


class SpawnFailureError(NeuronError):
    def __init__(self, reason: str, node_id: str | None = None):
        self.node_id = node_id
        self.reason = reason
        super().__init__(reason)


# --- kinematics ---------------------------------------------------------------

class UrdfError(NeuronError):
    def __init__(self, element: str, reason: str):
        self.element = element
        self.reason = reason
        super().__init__(f"urdf {element}: {reason}")


class DimensionMismatchError(NeuronError):
    pass


# --- capability wrappers ------------------------------------------------------

class NotOpenError(NeuronError):
    pass


class UnsupportedKindError(NeuronError):
    def __init__(self, kind: str, supported):
        self.kind = kind
        self.supported = tuple(supported)
        super().__init__(
            f"unsupported platform kind {kind!r}; supported: {', '.join(self.supported)}")


class NotLoadedError(NeuronError):
    pass


class DuplicateBackendError(NeuronError):
    def __init__(self, model_id: str, backend_id: str):
        super().__init__(f"backend ({model_id}, {backend_id}) already registered")


class UnknownBackendError(NeuronError):
    def __init__(self, model_id: str, backend_id: str, available):
        self.available = sorted(available)
        listing = ", ".join(f"{m}/{b}" for m, b in self.available) or "<none>"
        super().__init__(
            f"no backend registered for ({model_id}, {backend_id}); available: {listing}"
        )


# --- planner / orchestration ----------------------------------------------------

class NoApplicableRuleError(NeuronError):
    def __init__(self, instruction: str):
        self.instruction = instruction
        super().__init__(f"no planner rule matches instruction: {instruction!r}")


class CapabilityError(NeuronError):
    """Lifecycle operation failed in a way the caller can act on."""


class ConfigError(NeuronError):
    pass
