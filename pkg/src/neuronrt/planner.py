"""Instruction planning: natural-language command in, tool-call plan out.

The rule planner covers the fixed instruction families the runtime
understands without any model in the loop:

  vehicle twists      "move forward at 0.5 m/s", "turn left at 0.3 rad/s"
  timed arm motion    "move the end effector up at 0.05 m/s for 2 s"
  visuomotor pickup   "pick up the blue bowl [using the X camera and Y model]"
  camera sessions     "start the camera", "stop everything"

Anything else raises NoApplicableRuleError so callers can surface "I do
not understand" instead of guessing. The remote planner delegates the same
catalog to an OpenAI-compatible chat endpoint; it is optional and nothing
in the packaged behavior depends on it.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field

from .errors import ConfigError, NoApplicableRuleError

DEFAULT_PICK_TIMEOUT_S = 30.0


@dataclass(frozen=True)
class PlanStep:
    tool: str
    arguments: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"tool": self.tool, "arguments": self.arguments}


@dataclass(frozen=True)
class Plan:
    steps: tuple
    keep_alive: bool = False  # leave started nodes running afterwards

    def tool_names(self) -> list[str]:
        return [s.tool for s in self.steps]


@dataclass(frozen=True)
class PlannerContext:
    """Scene-level naming the planner needs: default hardware ids, alias
    table (marketing names to runtime ids), settle margin after timed
    moves."""

    defaults: dict = field(default_factory=lambda: {
        "camera_id": "synthetic0",
        "model_id": "scripted_grasp",
        "backend_id": "reference"})
    aliases: dict = field(default_factory=dict)
    settle_s: float = 1.0

    @classmethod
    def from_scene(cls, scene) -> "PlannerContext":
        orch = scene.orchestration
        return cls(defaults=dict(orch.get("defaults") or {}),
                   aliases=dict(orch.get("aliases") or {}),
                   settle_s=float(orch.get("settle_s", 1.0)))

    def camera_id(self, name: str | None) -> str:
        if not name:
            return self.defaults.get("camera_id", "synthetic0")
        resolved = self.aliases.get(name, name)
        return resolved if isinstance(resolved, str) else name

    def model_backend(self, name: str | None) -> tuple[str, str]:
        default = (self.defaults.get("model_id", "scripted_grasp"),
                   self.defaults.get("backend_id", "reference"))
        if not name:
            return default
        resolved = self.aliases.get(name)
        if isinstance(resolved, (list, tuple)) and len(resolved) == 2:
            return str(resolved[0]), str(resolved[1])
        return name, default[1]


_NUM = r"(\d+(?:\.\d+)?|\.\d+)"
_RE_EE = re.compile(
    rf"\bmove\s+the\s+end[\s-]?effector\s+"
    rf"(forward|backwards?|left|right|up|down)\s+at\s+{_NUM}\s*m/s\s+"
    rf"for\s+{_NUM}\s*s(?:ec(?:ond)?s?)?\b", re.IGNORECASE)
_RE_MOVE = re.compile(
    rf"\b(?:move|drive|go)\s+(forward|backwards?)\s+at\s+{_NUM}\s*m/s",
    re.IGNORECASE)
_RE_TURN = re.compile(
    rf"\b(?:turn|rotate|spin)(?:\s+(left|right))?\s+at\s+{_NUM}\s*rad/s",
    re.IGNORECASE)
_RE_HALT = re.compile(
    r"\b(?:stop|halt)(?:\s+the)?\s+(?:vehicles?|platform|base|fleet)\b",
    re.IGNORECASE)
_RE_PICK = re.compile(
    r"\bpick\s+up\s+(?:the\s+)?(?P<obj>[\w][\w\s-]*?)"
    r"(?:\s+using\s+the\s+(?P<cam>[\w-]+)\s+camera"
    r"(?:\s+and\s+(?:the\s+)?(?P<model>[\w.-]+)\s+model)?)?\s*[.!]?\s*$",
    re.IGNORECASE)
_RE_START_CAMERA = re.compile(
    r"\bstart\s+the\s+(?:(?P<cam>[\w-]+)\s+)?camera\b", re.IGNORECASE)
_RE_STOP_ALL = re.compile(r"\bstop\s+everything\b", re.IGNORECASE)

_EE_DIRECTIONS = {
    "forward": (0, 1.0), "backward": (0, -1.0), "backwards": (0, -1.0),
    "left": (1, 1.0), "right": (1, -1.0),
    "up": (2, 1.0), "down": (2, -1.0),
}


def _twist(vx: float = 0.0, wz: float = 0.0) -> dict:
    return {"linear": {"x": vx, "y": 0.0, "z": 0.0},
            "angular": {"x": 0.0, "y": 0.0, "z": wz}}


class RulePlanner:
    def __init__(self, context: PlannerContext | None = None):
        self.context = context or PlannerContext()

    def plan(self, instruction: str) -> Plan:
        text = instruction.strip()

        if _RE_STOP_ALL.search(text):
            return Plan((
                PlanStep("pub_twist", _twist()),
                PlanStep("stop_controller"),
                PlanStep("stop_vla_inference"),
                PlanStep("stop_camera",
                         {"camera_id": self.context.camera_id(None)}),
            ))

        m = _RE_EE.search(text)
        if m:
            axis, sign = _EE_DIRECTIONS[m.group(1).lower()]
            speed, duration = float(m.group(2)), float(m.group(3))
            linear = [0.0, 0.0, 0.0]
            linear[axis] = sign * speed
            return Plan((
                PlanStep("start_controller"),
                PlanStep("pub_eecommand", {
                    "linear": dict(zip("xyz", linear)),
                    "angular": {"x": 0.0, "y": 0.0, "z": 0.0},
                    "duration": duration}),
                PlanStep("wait_sim_time",
                         {"seconds": duration + self.context.settle_s}),
                PlanStep("stop_controller"),
            ))

        m = _RE_MOVE.search(text)
        if m:
            sign = 1.0 if m.group(1).lower() == "forward" else -1.0
            return Plan((PlanStep("pub_twist", _twist(vx=sign * float(m.group(2)))),))

        m = _RE_TURN.search(text)
        if m:
            sign = -1.0 if (m.group(1) or "").lower() == "right" else 1.0
            return Plan((PlanStep("pub_twist", _twist(wz=sign * float(m.group(2)))),))

        if _RE_HALT.search(text):
            return Plan((PlanStep("pub_twist", _twist()),))

        m = _RE_PICK.search(text)
        if m:
            camera_id = self.context.camera_id(m.group("cam"))
            model_id, backend_id = self.context.model_backend(m.group("model"))
            task = f"pick up the {m.group('obj').strip()}"
            return Plan((
                PlanStep("start_camera", {"camera_id": camera_id}),
                PlanStep("start_vla_inference", {
                    "task": task, "camera_id": camera_id,
                    "model_id": model_id, "backend_id": backend_id}),
                PlanStep("start_controller"),
                PlanStep("wait_task_done",
                         {"timeout_s": DEFAULT_PICK_TIMEOUT_S}),
                PlanStep("stop_controller"),
                PlanStep("stop_vla_inference"),
                PlanStep("stop_camera", {"camera_id": camera_id}),
            ))

        m = _RE_START_CAMERA.search(text)
        if m:
            return Plan((PlanStep("start_camera", {
                "camera_id": self.context.camera_id(m.group("cam"))}),),
                keep_alive=True)

        raise NoApplicableRuleError(instruction)


class RemotePlanner:
    """Delegates planning to an OpenAI-compatible chat-completions endpoint.

    Configured entirely through the environment (NEURON_PLANNER_URL,
    NEURON_PLANNER_MODEL, NEURON_PLANNER_API_KEY) or constructor arguments;
    the returned tool calls become plan steps verbatim.
    """

    def __init__(self, tool_catalog, url: str | None = None,
                 model: str | None = None, api_key: str | None = None,
                 timeout_s: float = 30.0):
        self.url = url or os.environ.get("NEURON_PLANNER_URL")
        if not self.url:
            raise ConfigError(
                "remote planner needs NEURON_PLANNER_URL (or url=...)")
        self.model = model or os.environ.get("NEURON_PLANNER_MODEL", "planner")
        self.api_key = api_key or os.environ.get("NEURON_PLANNER_API_KEY")
        self.timeout_s = timeout_s
        self._tools = [{
            "type": "function",
            "function": {
                "name": t["name"],
                "description": t["description"],
                "parameters": t["input_schema"],
            },
        } for t in tool_catalog]

    def plan(self, instruction: str) -> Plan:
        import requests

        headers = {"content-type": "application/json"}
        if self.api_key:
            headers["authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": (
                    "Plan robot instructions as an ordered list of tool "
                    "calls. Use only the provided tools; call nothing for "
                    "impossible requests.")},
                {"role": "user", "content": instruction},
            ],
            "tools": self._tools,
        }
        response = requests.post(self.url, json=body, headers=headers,
                                 timeout=self.timeout_s)
        response.raise_for_status()
        message = response.json()["choices"][0]["message"]
        calls = message.get("tool_calls") or []
        if not calls:
            raise NoApplicableRuleError(instruction)
        steps = tuple(
            PlanStep(c["function"]["name"],
                     json.loads(c["function"].get("arguments") or "{}"))
            for c in calls)
        return Plan(steps)
