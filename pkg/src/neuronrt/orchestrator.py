"""Tool execution against a live runtime.

This is the layer between "a model asked for pub_twist" and messages
actually moving: it validates arguments against the tool's schema, routes
by binding kind (publish, service, capability lifecycle), and manages the
nodes a session needs. Capability starts are strict (starting something
already running is an error, prerequisites are checked before spawning);
stops are idempotent so cleanup can never fail twice.

Sessions tie it together: an instruction goes through the planner, the
resulting steps execute in order, and any capability started before a
failure is torn down in reverse order unless the plan asked to keep nodes
alive.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from .errors import NeuronError, NoApplicableRuleError, UnknownNodeError
from .kinematics import parse_urdf
from .nodes import image_topic_for
from .planner import PlannerContext, RulePlanner
from .runtime import NodeSpec
from .tools import ToolLibraryBuilder, serialize_catalog
from .validation import ObjectSpec, primitive_spec, validate
from .world import SceneConfig
from .wrappers import default_registry

# JSON-RPC error codes these map to on the wire
UNKNOWN_TOOL = "UNKNOWN_TOOL"
INVALID_ARGS = "INVALID_ARGS"
CAPABILITY_ERROR = "CAPABILITY_ERROR"
INTERNAL = "INTERNAL"

RPC_CODES = {
    UNKNOWN_TOOL: -32601,
    INVALID_ARGS: -32602,
    CAPABILITY_ERROR: -32000,
    INTERNAL: -32603,
}

WORLD_ID = "world"
VLA_ID = "vla-inference"
CONTROLLER_ID = "arm-controller"

ARM_STATUS_TOPIC = "/world/arm"
ACTION_TOPIC = "/vla/action"
EE_TOPIC = "/ee_cmd"

_POLL_S = 0.002
READY_TIMEOUT_S = 5.0
STALL_TIMEOUT_S = 5.0  # wall seconds without sim progress counts as a hang

CATALOG_REVISION = 1


class ToolCallError(NeuronError):
    """A tool call that could not be completed, tagged for the wire."""

    def __init__(self, code: str, message: str, data: dict | None = None):
        super().__init__(message)
        self.code = code
        self.rpc_code = RPC_CODES[code]
        self.data = data


def _schema(fields=(), optional=()) -> ObjectSpec:
    return ObjectSpec(tuple(fields), frozenset(optional))


def add_lifecycle_tools(builder: ToolLibraryBuilder) -> None:
    """The capability tools every deployment gets, independent of the
    message definitions: node lifecycle plus the two waiting primitives
    plans are built from."""
    string = primitive_spec("string")
    seconds = primitive_spec("float64")
    builder.add_lifecycle(
        "start_camera", "start_camera", "Start camera",
        "Start a camera capability streaming frames of the arm workspace. "
        "Runs until stopped.",
        _schema([("camera_id", string)], optional=["camera_id"]))
    builder.add_lifecycle(
        "stop_camera", "stop_camera", "Stop camera",
        "Stop a running camera capability. Safe to call if it is not running.",
        _schema([("camera_id", string)], optional=["camera_id"]))
    builder.add_lifecycle(
        "start_vla_inference", "start_vla_inference", "Start visuomotor inference",
        "Start a vision-language-action model that watches camera frames and "
        "publishes end-effector action deltas for the given task.",
        _schema([("task", string), ("camera_id", string),
                 ("model_id", string), ("backend_id", string)],
                optional=["camera_id", "model_id", "backend_id"]))
    builder.add_lifecycle(
        "stop_vla_inference", "stop_vla_inference", "Stop visuomotor inference",
        "Stop the running inference capability. Safe to call if it is not running.",
        _schema())
    builder.add_lifecycle(
        "start_controller", "start_controller", "Start arm controller",
        "Start the arm controller that turns action deltas and timed "
        "end-effector commands into joint velocities.",
        _schema())
    builder.add_lifecycle(
        "stop_controller", "stop_controller", "Stop arm controller",
        "Stop the arm controller; it commands zero velocity on the way out. "
        "Safe to call if it is not running.",
        _schema())
    builder.add_lifecycle(
        "wait_task_done", "wait_task_done", "Wait for grasp",
        "Block until the arm reports the object grasped, or fail after "
        "timeout_s simulated seconds (default 30).",
        _schema([("timeout_s", seconds)], optional=["timeout_s"]))
    builder.add_lifecycle(
        "wait_sim_time", "wait_sim_time", "Wait in simulation time",
        "Block until the platform clock has advanced by the given number of "
        "simulated seconds.",
        _schema([("seconds", seconds)]))


class ToolRegistry:
    """Name-indexed view over the generated tools plus the lifecycle set."""

    def __init__(self, library, revision: int = CATALOG_REVISION):
        builder = ToolLibraryBuilder()
        for tool in library.tools:
            builder.add(tool)
        add_lifecycle_tools(builder)
        self.library = library
        self.tools = builder.build()
        self.revision = revision
        self._by_name = {t.name: t for t in self.tools}

    def get(self, name: str):
        tool = self._by_name.get(name)
        if tool is None:
            raise ToolCallError(UNKNOWN_TOOL, f"unknown tool {name!r}")
        return tool

    def names(self) -> list[str]:
        return [t.name for t in self.tools]

    def catalog_json(self) -> str:
        return serialize_catalog(self.tools, self.revision)

    def catalog(self) -> dict:
        return {"revision": self.revision,
                "tools": [t.as_dict() for t in self.tools]}


@dataclass
class SessionStep:
    tool: str
    arguments: dict
    ok: bool
    result: dict | None = None
    error: dict | None = None
    wall_ms: float = 0.0

    def as_dict(self) -> dict:
        doc = {"tool": self.tool, "arguments": self.arguments, "ok": self.ok,
               "wall_ms": self.wall_ms}
        if self.ok:
            doc["result"] = self.result
        else:
            doc["error"] = self.error
        return doc


@dataclass
class SessionTranscript:
    instruction: str
    path_decision: str  # 'direct' | 'capability' | 'unplanned'
    outcome: str        # 'completed' | 'error'
    keep_alive: bool = False
    steps: list = field(default_factory=list)
    cleanup: list = field(default_factory=list)
    error: str | None = None

    def as_dict(self) -> dict:
        doc = {
            "instruction": self.instruction,
            "path_decision": self.path_decision,
            "outcome": self.outcome,
            "keep_alive": self.keep_alive,
            "steps": [s.as_dict() for s in self.steps],
            "cleanup": [s.as_dict() for s in self.cleanup],
        }
        if self.error is not None:
            doc["error"] = self.error
        return doc


# start tool -> (stop tool, argument keys carried over)
_CLEANUP_FOR = {
    "start_camera": ("stop_camera", ("camera_id",)),
    "start_vla_inference": ("stop_vla_inference", ()),
    "start_controller": ("stop_controller", ()),
}


class Orchestrator:
    """Owns the platform node and executes tool calls against it."""

    def __init__(self, runtime, library, scene: SceneConfig | None = None,
                 planner=None):
        self.runtime = runtime
        self.bus = runtime.bus
        self.scene = scene or SceneConfig()
        self.registry = ToolRegistry(library)
        self.planner = planner or RulePlanner(
            PlannerContext.from_scene(self.scene))
        self._platform_lock = threading.Lock()

    # --- platform ---------------------------------------------------------

    def ensure_platform(self) -> None:
        # concurrent clients may race the first call; one spawn wins
        with self._platform_lock:
            if not self.runtime.is_running(WORLD_ID):
                self.runtime.spawn(NodeSpec(
                    WORLD_ID, "platform", "neuronrt.world:world_node",
                    params={"scene": self.scene.to_dict()}))
        # arm status is the last topic in a tick, so one envelope on it
        # means a full world step has run
        if not self._wait_for(lambda: self.bus.has_topic(ARM_STATUS_TOPIC)
                              and self.bus.read_latest(ARM_STATUS_TOPIC)
                              is not None):
            self._raise_node_trouble(WORLD_ID, "platform did not come up")

    def _wait_for(self, predicate, timeout: float = READY_TIMEOUT_S) -> bool:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if predicate():
                return True
            time.sleep(_POLL_S)
        return predicate()

    def _raise_node_trouble(self, node_id: str, fallback: str):
        try:
            snap = self.runtime.handle(node_id)
        except UnknownNodeError:
            raise ToolCallError(CAPABILITY_ERROR, fallback) from None
        reason = snap.get("reason")
        detail = f"{node_id} is {snap['state']}" + (f": {reason}" if reason else "")
        raise ToolCallError(CAPABILITY_ERROR, f"{fallback} ({detail})")

    def _wait_ready(self, node_id: str, topic: str, want_data: bool) -> None:
        def ready():
            if not self.runtime.is_running(node_id):
                return None  # terminal; fall through to the error path
            if not self.bus.has_topic(topic):
                return False
            return (not want_data
                    or self.bus.read_latest(topic) is not None)

        deadline = time.monotonic() + READY_TIMEOUT_S
        while time.monotonic() < deadline:
            state = ready()
            if state:
                return
            if state is None:
                break
            time.sleep(_POLL_S)
        self._raise_node_trouble(node_id, f"{node_id} did not become ready")

    def _sim_now(self) -> float:
        env = self.bus.read_latest(ARM_STATUS_TOPIC)
        if env is None:
            raise ToolCallError(CAPABILITY_ERROR, "platform is not running")
        return float(env.payload["sim_time"])

    # --- call dispatch ----------------------------------------------------

    def call_tool(self, name: str, arguments: dict | None = None) -> dict:
        tool = self.registry.get(name)
        args = {} if arguments is None else arguments
        if not isinstance(args, dict):
            raise ToolCallError(
                INVALID_ARGS, f"arguments for {name} must be an object",
                data={"violations": [{"path": "", "expected": "object",
                                      "got": type(args).__name__}]})
        report = validate(tool.input_schema, args)
        if not report.ok:
            raise ToolCallError(
                INVALID_ARGS, f"invalid arguments for {name}: {report.summary()}",
                data={"violations": [v.as_dict() for v in report.violations]})

        binding = tool.binding
        try:
            if binding.kind == "publish":
                return self._run_publish(binding, args)
            if binding.kind == "service":
                return self._run_service(binding, args)
            return self._run_capability(binding.capability, args)
        except ToolCallError:
            raise
        except NeuronError as e:
            raise ToolCallError(CAPABILITY_ERROR, str(e)) from e
        except Exception as e:  # noqa: BLE001 - report, never crash the loop
            raise ToolCallError(INTERNAL, f"{type(e).__name__}: {e}") from e

    def _run_publish(self, binding, args: dict) -> dict:
        self.ensure_platform()
        if not self.bus.has_topic(binding.topic):
            self.bus.advertise(binding.topic, binding.type_name)
        env = self.bus.publish(binding.topic, args)
        return {"topic": binding.topic, "seq": env.seq,
                "stamp_ns": env.stamp_ns}

    def _run_service(self, binding, args: dict) -> dict:
        self.ensure_platform()
        return self.bus.call_service(binding.service, args)

    def _run_capability(self, capability: str, args: dict) -> dict:
        handler = getattr(self, "_cap_" + capability, None)
        if handler is None:
            raise ToolCallError(INTERNAL, f"no handler for capability {capability!r}")
        return handler(args)

    # --- capabilities -----------------------------------------------------

    def _default(self, key: str, fallback: str) -> str:
        defaults = self.scene.orchestration.get("defaults") or {}
        return defaults.get(key, fallback)

    def _camera_node_id(self, args: dict) -> tuple[str, str]:
        camera_id = args.get("camera_id") or self._default("camera_id", "synthetic0")
        return camera_id, f"camera-{camera_id}"

    def _require_not_running(self, node_id: str, what: str):
        if self.runtime.is_running(node_id):
            raise ToolCallError(CAPABILITY_ERROR, f"{what} is already running")

    def _cap_start_camera(self, args: dict) -> dict:
        camera_id, node_id = self._camera_node_id(args)
        self._require_not_running(node_id, f"camera {camera_id!r}")
        self.ensure_platform()
        camera_cfg = dict(self.scene.camera)
        camera_cfg.setdefault("seed", self.scene.seed)
        self.runtime.spawn(NodeSpec(
            node_id, "perception", "neuronrt.nodes:camera_node",
            params={"camera_id": camera_id, "camera": camera_cfg}))
        topic = image_topic_for(camera_id)
        self._wait_ready(node_id, topic, want_data=True)
        return {"node_id": node_id, "camera_id": camera_id,
                "image_topic": topic}

    def _cap_stop_camera(self, args: dict) -> dict:
        _, node_id = self._camera_node_id(args)
        return self._stop(node_id)

    def _cap_start_vla_inference(self, args: dict) -> dict:
        self._require_not_running(VLA_ID, "inference")
        camera_id = args.get("camera_id") or self._default("camera_id", "synthetic0")
        model_id = args.get("model_id") or self._default("model_id", "scripted_grasp")
        backend_id = args.get("backend_id") or self._default("backend_id", "reference")
        models = default_registry()
        if (model_id, backend_id) not in models:
            pairs = ", ".join("/".join(p) for p in models.available())
            raise ToolCallError(
                CAPABILITY_ERROR,
                f"no backend for ({model_id}, {backend_id}); available: {pairs}")
        image_topic = image_topic_for(camera_id)
        if not self.bus.has_topic(image_topic):
            raise ToolCallError(
                CAPABILITY_ERROR,
                f"no frames on {image_topic} (start the camera first)")
        self.runtime.spawn(NodeSpec(
            VLA_ID, "inference", "neuronrt.nodes:inference_node",
            params={"model_id": model_id, "backend_id": backend_id,
                    "camera_id": camera_id, "task": args["task"],
                    "camera": dict(self.scene.camera),
                    "policy": dict(self.scene.policy)}))
        self._wait_ready(VLA_ID, ACTION_TOPIC, want_data=True)
        return {"node_id": VLA_ID, "action_topic": ACTION_TOPIC,
                "model_id": model_id, "backend_id": backend_id}

    def _cap_stop_vla_inference(self, args: dict) -> dict:
        return self._stop(VLA_ID)

    def _cap_start_controller(self, args: dict) -> dict:
        self._require_not_running(CONTROLLER_ID, "controller")
        # surface bad arm configs here instead of as an async node failure
        parse_urdf(self.scene.urdf_path().read_text())
        self.ensure_platform()
        self.runtime.spawn(NodeSpec(
            CONTROLLER_ID, "control", "neuronrt.control:control_node",
            params={"scene": self.scene.to_dict()}))
        self._wait_ready(CONTROLLER_ID, EE_TOPIC, want_data=False)
        return {"node_id": CONTROLLER_ID, "ee_topic": EE_TOPIC,
                "action_topic": ACTION_TOPIC}

    def _cap_stop_controller(self, args: dict) -> dict:
        return self._stop(CONTROLLER_ID)

    def _stop(self, node_id: str) -> dict:
        try:
            snap = self.runtime.stop(node_id)
        except UnknownNodeError:
            return {"node_id": node_id, "stopped": False}
        return {"node_id": node_id, "stopped": True, "state": snap["state"]}

    def _cap_wait_task_done(self, args: dict) -> dict:
        timeout_s = float(args.get("timeout_s", 30.0))
        start = self._sim_now()
        last, last_progress = start, time.monotonic()
        while True:
            env = self.bus.read_latest(ARM_STATUS_TOPIC)
            payload = env.payload
            now = float(payload["sim_time"])
            if payload["grasped"]:
                return {"done": True, "sim_time": now,
                        "elapsed_s": now - start}
            if now - start >= timeout_s:
                raise ToolCallError(
                    CAPABILITY_ERROR,
                    f"task not done after {timeout_s:g} simulated seconds")
            if now > last:
                last, last_progress = now, time.monotonic()
            elif time.monotonic() - last_progress > STALL_TIMEOUT_S:
                self._raise_node_trouble(WORLD_ID, "simulation stalled")
            time.sleep(_POLL_S)

    def _cap_wait_sim_time(self, args: dict) -> dict:
        seconds = float(args["seconds"])
        self.ensure_platform()
        start = self._sim_now()
        last, last_progress = start, time.monotonic()
        while True:
            now = self._sim_now()
            if now - start >= seconds:
                return {"sim_time": now, "waited_s": now - start}
            if now > last:
                last, last_progress = now, time.monotonic()
            elif time.monotonic() - last_progress > STALL_TIMEOUT_S:
                self._raise_node_trouble(WORLD_ID, "simulation stalled")
            time.sleep(_POLL_S)

    # --- sessions ---------------------------------------------------------

    def _path_decision(self, plan) -> str:
        for step in plan.steps:
            tool = self.registry.get(step.tool)
            if tool.binding.kind == "lifecycle":
                return "capability"
        return "direct"

    def run_session(self, instruction: str, on_step=None) -> SessionTranscript:
        try:
            plan = self.planner.plan(instruction)
        except NoApplicableRuleError as e:
            return SessionTranscript(instruction, "unplanned", "error",
                                     error=str(e))

        transcript = SessionTranscript(
            instruction, self._path_decision(plan), "completed",
            keep_alive=plan.keep_alive)
        started: list[SessionStep] = []

        for step in plan.steps:
            record = self._execute(step.tool, step.arguments)
            transcript.steps.append(record)
            if on_step is not None:
                on_step(record)
            if not record.ok:
                transcript.outcome = "error"
                transcript.error = record.error["message"]
                break
            if step.tool in _CLEANUP_FOR:
                started.append(record)

        if transcript.outcome == "error" and not plan.keep_alive:
            for record in reversed(started):
                stop_tool, keys = _CLEANUP_FOR[record.tool]
                stop_args = {k: record.arguments[k] for k in keys
                             if k in record.arguments}
                cleanup = self._execute(stop_tool, stop_args)
                transcript.cleanup.append(cleanup)
                if on_step is not None:
                    on_step(cleanup)
        return transcript

    def _execute(self, tool: str, arguments: dict) -> SessionStep:
        t0 = time.perf_counter()
        try:
            result = self.call_tool(tool, arguments)
            ok, error = True, None
        except ToolCallError as e:
            ok, result = False, None
            error = {"code": e.code, "rpc_code": e.rpc_code,
                     "message": str(e)}
            if e.data is not None:
                error["data"] = e.data
        wall_ms = (time.perf_counter() - t0) * 1e3
        return SessionStep(tool, dict(arguments), ok, result, error,
                           round(wall_ms, 3))

    # --- status -----------------------------------------------------------

    def status_nodes(self) -> list[dict]:
        return self.runtime.status()

    def status_topics(self) -> dict:
        return self.bus.topic_info()

    def running_capabilities(self) -> list[str]:
        return self.runtime.running_nodes(("perception", "inference", "control"))
