"""Planner rules and tool execution: catalogs, error codes, node lifecycle,
and end-to-end instruction sessions."""

import json
import statistics

import numpy as np
import pytest

from neuronrt.bus import MessageBus
from neuronrt.errors import NoApplicableRuleError
from neuronrt.orchestrator import (
    CAPABILITY_ERROR, INTERNAL, INVALID_ARGS, UNKNOWN_TOOL,
    Orchestrator, ToolCallError, ToolRegistry)
from neuronrt.planner import Plan, PlanStep, PlannerContext, RulePlanner
from neuronrt.runtime import NodeRuntime
from neuronrt.validation import validate
from neuronrt.world import SceneConfig, load_scene

FAST_SCENE = {"seed": 0, "rate_hz": 100.0, "realtime_factor": 0.0}

LIFECYCLE_TOOLS = (
    "start_camera", "stop_camera", "start_vla_inference",
    "stop_vla_inference", "start_controller", "stop_controller",
    "wait_task_done", "wait_sim_time")


@pytest.fixture
def orch(library):
    scene = SceneConfig.from_dict(FAST_SCENE)
    runtime = NodeRuntime(MessageBus(library.catalog))
    orchestrator = Orchestrator(runtime, library, scene)
    yield orchestrator
    runtime.shutdown()


def call_err(orch, tool, args=None):
    with pytest.raises(ToolCallError) as info:
        orch.call_tool(tool, args)
    return info.value


def arm_status(orch):
    return orch.bus.read_latest("/world/arm").payload


# ------------------------------------------------------------------ planner

class TestRulePlanner:

    @pytest.fixture
    def planner(self):
        return RulePlanner()

    def test_move_forward_is_one_twist(self, planner):
        plan = planner.plan("move forward at 0.5 m/s")
        assert plan.tool_names() == ["pub_twist"]
        assert plan.steps[0].arguments["linear"]["x"] == 0.5
        assert not plan.keep_alive

    def test_drive_backward_is_negative(self, planner):
        plan = planner.plan("drive backward at 0.25 m/s")
        assert plan.steps[0].arguments["linear"]["x"] == -0.25

    def test_turn_left_positive_yaw(self, planner):
        plan = planner.plan("turn left at 0.3 rad/s")
        assert plan.tool_names() == ["pub_twist"]
        assert plan.steps[0].arguments["angular"]["z"] == 0.3

    def test_rotate_right_negative_yaw(self, planner):
        plan = planner.plan("rotate right at 1.0 rad/s")
        assert plan.steps[0].arguments["angular"]["z"] == -1.0

    def test_halt_zeros_the_twist(self, planner):
        plan = planner.plan("stop the vehicles")
        args = plan.steps[0].arguments
        assert plan.tool_names() == ["pub_twist"]
        assert args["linear"]["x"] == 0.0 and args["angular"]["z"] == 0.0

    def test_ee_move_wraps_controller_lifecycle(self, planner):
        plan = planner.plan("move the end effector left at 0.05 m/s for 2 s")
        assert plan.tool_names() == [
            "start_controller", "pub_eecommand", "wait_sim_time",
            "stop_controller"]
        command = plan.steps[1].arguments
        assert command["linear"] == {"x": 0.0, "y": 0.05, "z": 0.0}
        assert command["duration"] == 2.0
        # settle margin on top of the commanded duration
        assert plan.steps[2].arguments["seconds"] == 3.0

    def test_ee_down_maps_to_negative_z(self, planner):
        plan = planner.plan("move the end-effector down at 0.1 m/s for 1.5 s")
        assert plan.steps[1].arguments["linear"]["z"] == -0.1

    def test_pick_uses_scene_defaults(self, planner):
        plan = planner.plan("pick up the blue bowl")
        assert plan.tool_names() == [
            "start_camera", "start_vla_inference", "start_controller",
            "wait_task_done", "stop_controller", "stop_vla_inference",
            "stop_camera"]
        start_vla = plan.steps[1].arguments
        assert start_vla["task"] == "pick up the blue bowl"
        assert start_vla["model_id"] == "scripted_grasp"
        assert plan.steps[3].arguments["timeout_s"] == 30.0

    def test_pick_resolves_scene_aliases(self):
        context = PlannerContext.from_scene(load_scene())
        plan = RulePlanner(context).plan(
            "pick up the red cup using the realsense camera and the openvla model")
        start_vla = plan.steps[1].arguments
        assert start_vla["camera_id"] == "synthetic0"
        assert (start_vla["model_id"], start_vla["backend_id"]) == (
            "scripted_grasp", "reference")
        assert start_vla["task"] == "pick up the red cup"

    def test_start_camera_keeps_nodes_alive(self, planner):
        plan = planner.plan("start the camera")
        assert plan.tool_names() == ["start_camera"]
        assert plan.keep_alive

    def test_stop_everything_halts_then_tears_down(self, planner):
        plan = planner.plan("stop everything")
        assert plan.tool_names() == [
            "pub_twist", "stop_controller", "stop_vla_inference",
            "stop_camera"]
        assert plan.steps[0].arguments["linear"]["x"] == 0.0

    def test_unknown_instruction_raises(self, planner):
        with pytest.raises(NoApplicableRuleError):
            planner.plan("make me a sandwich")


# ------------------------------------------------------------------ catalog

class TestToolRegistry:

    def test_catalog_merges_bindings_and_lifecycle(self, library):
        registry = ToolRegistry(library)
        assert registry.names() == [
            "pub_twist", "pub_eecommand", "call_solveik", *LIFECYCLE_TOOLS]

    def test_catalog_json_carries_revision(self, library):
        doc = json.loads(ToolRegistry(library).catalog_json())
        assert doc["revision"] == 1
        assert len(doc["tools"]) == 11
        kinds = {t["name"]: t["binding"]["kind"] for t in doc["tools"]}
        assert kinds["pub_twist"] == "publish"
        assert kinds["call_solveik"] == "service"
        assert all(kinds[name] == "lifecycle" for name in LIFECYCLE_TOOLS)

    def test_lifecycle_schemas_mark_required_fields(self, library):
        registry = ToolRegistry(library)
        report = validate(registry.get("start_vla_inference").input_schema, {})
        assert [v.path for v in report.violations] == ["task"]
        assert validate(registry.get("wait_task_done").input_schema, {}).ok


# ------------------------------------------------------------- error codes

class TestErrorCodes:

    def test_unknown_tool(self, orch):
        err = call_err(orch, "frobnicate")
        assert err.code == UNKNOWN_TOOL and err.rpc_code == -32601

    def test_invalid_args_report_violations(self, orch):
        err = call_err(orch, "pub_twist", {
            "linear": {"x": "fast", "y": 0.0, "z": 0.0},
            "angular": {"x": 0.0, "y": 0.0, "z": 0.0}})
        assert err.code == INVALID_ARGS and err.rpc_code == -32602
        paths = [v["path"] for v in err.data["violations"]]
        assert paths == ["linear.x"]

    def test_missing_required_argument(self, orch):
        err = call_err(orch, "wait_sim_time", {})
        assert err.code == INVALID_ARGS
        assert err.data["violations"][0]["path"] == "seconds"

    def test_non_object_arguments(self, orch):
        err = call_err(orch, "pub_twist", [1, 2, 3])
        assert err.code == INVALID_ARGS

    def test_capability_error_code(self, orch):
        err = call_err(orch, "start_vla_inference", {"task": "pick up the cup"})
        assert err.code == CAPABILITY_ERROR and err.rpc_code == -32000
        assert "camera" in str(err)


# ---------------------------------------------------------------- lifecycle

class TestCapabilities:

    def test_publish_brings_up_platform(self, orch):
        result = orch.call_tool("pub_twist", {
            "linear": {"x": 0.2, "y": 0.0, "z": 0.0},
            "angular": {"x": 0.0, "y": 0.0, "z": 0.0}})
        assert result["topic"] == "/cmd_vel"
        assert isinstance(result["seq"], int)
        assert orch.runtime.is_running("world")

    def test_solve_ik_service_tool(self, orch):
        orch.ensure_platform()
        status = arm_status(orch)
        tip = status["tip_position"]
        reply = orch.call_tool("call_solveik", {
            "target": {
                "position": {"x": tip["x"], "y": tip["y"],
                             "z": tip["z"] + 0.02},
                "orientation": {"w": 1.0, "x": 0.0, "y": 0.0, "z": 0.0},
            },
            "seed": []})
        assert reply["converged"] is True
        assert len(reply["joint_positions"]) == 7

    def test_start_camera_twice_is_an_error(self, orch):
        result = orch.call_tool("start_camera", {})
        assert result["node_id"] == "camera-synthetic0"
        assert orch.bus.read_latest(result["image_topic"]) is not None
        err = call_err(orch, "start_camera", {})
        assert err.code == CAPABILITY_ERROR and "already running" in str(err)

    def test_stop_camera_is_idempotent(self, orch):
        orch.call_tool("start_camera", {})
        assert orch.call_tool("stop_camera", {})["stopped"] is True
        assert orch.call_tool("stop_camera", {})["stopped"] is True
        # a camera that never existed reports stopped: false, not an error
        result = orch.call_tool("stop_camera", {"camera_id": "ghost"})
        assert result["stopped"] is False

    def test_unknown_backend_lists_available(self, orch):
        orch.call_tool("start_camera", {})
        err = call_err(orch, "start_vla_inference",
                       {"task": "pick up the cup", "model_id": "nope"})
        assert err.code == CAPABILITY_ERROR
        assert "scripted_grasp/reference" in str(err)

    def test_stub_backend_fails_with_reason(self, orch):
        orch.call_tool("start_camera", {})
        err = call_err(orch, "start_vla_inference", {
            "task": "pick up the cup",
            "model_id": "openvla_stub", "backend_id": "fastv"})
        assert err.code == CAPABILITY_ERROR
        assert "NotLoadedError" in str(err)
        assert not orch.runtime.is_running("vla-inference")

    def test_full_stack_runs_and_stops(self, orch):
        orch.call_tool("start_camera", {})
        orch.call_tool("start_vla_inference", {"task": "pick up the cube"})
        orch.call_tool("start_controller", {})
        assert sorted(orch.running_capabilities()) == [
            "arm-controller", "camera-synthetic0", "vla-inference"]
        action = orch.bus.read_latest("/vla/action").payload
        assert set(action) == {"dx", "dy", "dz", "droll", "dpitch", "dyaw",
                               "gripper"}
        for tool in ("stop_controller", "stop_vla_inference", "stop_camera"):
            assert orch.call_tool(tool, {})["stopped"] is True
        assert orch.running_capabilities() == []

    def test_wait_sim_time_advances_clock(self, orch):
        orch.ensure_platform()
        t0 = arm_status(orch)["sim_time"]
        result = orch.call_tool("wait_sim_time", {"seconds": 0.05})
        assert result["waited_s"] >= 0.05
        assert result["sim_time"] >= t0 + 0.05

    def test_wait_task_done_times_out(self, orch):
        orch.ensure_platform()
        err = call_err(orch, "wait_task_done", {"timeout_s": 0.2})
        assert err.code == CAPABILITY_ERROR and "not done" in str(err)

    def test_status_accessors(self, orch):
        orch.ensure_platform()
        nodes = {n["node_id"]: n["state"] for n in orch.status_nodes()}
        assert nodes["world"] == "running"
        assert "/world/arm" in orch.status_topics()


# ----------------------------------------------------------------- sessions

class _StubPlanner:
    def __init__(self, plan):
        self._plan = plan

    def plan(self, instruction):
        return self._plan


class TestSessions:

    def test_vehicle_instruction_runs_direct(self, orch):
        transcript = orch.run_session("move forward at 0.5 m/s")
        assert transcript.outcome == "completed"
        assert transcript.path_decision == "direct"
        assert [s.tool for s in transcript.steps] == ["pub_twist"]
        orch.call_tool("wait_sim_time", {"seconds": 1.0})
        fleet = orch.bus.read_latest("/world/vehicles").payload
        speeds = {v["vehicle_id"]: v["forward_speed"]
                  for v in fleet["vehicles"]}
        assert len(speeds) == 4
        for vehicle_id, speed in speeds.items():
            assert speed == pytest.approx(0.5, rel=0.05), vehicle_id

    def test_ee_instruction_displaces_tip(self, orch):
        orch.ensure_platform()
        before = np.array([arm_status(orch)["tip_position"][k] for k in "xyz"])
        transcript = orch.run_session(
            "move the end effector forward at 0.05 m/s for 1 s")
        assert transcript.outcome == "completed"
        assert transcript.path_decision == "capability"
        after = np.array([arm_status(orch)["tip_position"][k] for k in "xyz"])
        moved = after - before
        assert moved[0] == pytest.approx(0.05, abs=0.002)
        assert abs(moved[1]) < 0.002 and abs(moved[2]) < 0.002
        assert orch.running_capabilities() == []

    def test_pick_session_grasps_and_cleans_up(self, orch):
        transcript = orch.run_session("pick up the blue bowl")
        assert transcript.outcome == "completed", transcript.as_dict()
        wait_step = transcript.steps[3]
        assert wait_step.tool == "wait_task_done"
        assert wait_step.result["done"] is True
        assert wait_step.result["elapsed_s"] < 30.0
        assert arm_status(orch)["grasped"] is True
        assert orch.running_capabilities() == []
        assert transcript.cleanup == []

    def test_unplanned_instruction_reports_error(self, orch):
        transcript = orch.run_session("compose a sonnet")
        assert transcript.outcome == "error"
        assert transcript.path_decision == "unplanned"
        assert transcript.steps == []

    def test_failed_step_cleans_up_in_reverse(self, orch):
        plan = Plan((
            PlanStep("start_camera", {}),
            PlanStep("start_controller", {}),
            PlanStep("start_vla_inference", {
                "task": "pick up the cup",
                "model_id": "openvla_stub", "backend_id": "llama_cpp"}),
        ))
        orch.planner = _StubPlanner(plan)
        transcript = orch.run_session("anything")
        assert transcript.outcome == "error"
        assert [s.tool for s in transcript.steps] == [
            "start_camera", "start_controller", "start_vla_inference"]
        assert transcript.steps[-1].ok is False
        assert [s.tool for s in transcript.cleanup] == [
            "stop_controller", "stop_camera"]
        assert all(s.ok for s in transcript.cleanup)
        assert orch.running_capabilities() == []

    def test_keep_alive_leaves_camera_running(self, orch):
        transcript = orch.run_session("start the camera")
        assert transcript.outcome == "completed"
        assert transcript.keep_alive is True
        assert orch.running_capabilities() == ["camera-synthetic0"]
        orch.call_tool("stop_camera", {})

    def test_on_step_sees_every_record(self, orch):
        seen = []
        transcript = orch.run_session("move forward at 0.1 m/s",
                                      on_step=seen.append)
        assert len(seen) == len(transcript.steps) + len(transcript.cleanup)
        assert seen[0].tool == "pub_twist" and seen[0].ok

    def test_transcript_serializes(self, orch):
        transcript = orch.run_session("turn left at 0.2 rad/s")
        doc = transcript.as_dict()
        json.dumps(doc)
        assert doc["outcome"] == "completed"
        assert doc["steps"][0]["result"]["topic"] == "/cmd_vel"
        assert doc["steps"][0]["wall_ms"] >= 0.0

    def test_direct_path_is_cheaper_than_capability_start(self, orch):
        orch.ensure_platform()
        direct = []
        for _ in range(5):
            transcript = orch.run_session("move forward at 0.1 m/s")
            direct.append(transcript.steps[0].wall_ms)
        camera = orch._execute("start_camera", {})
        assert camera.ok, camera.error
        try:
            assert statistics.median(direct) < camera.wall_ms
        finally:
            orch.call_tool("stop_camera", {})

    def test_sessions_never_leak_nodes(self, orch):
        for instruction in ("move forward at 0.2 m/s",
                            "move the end effector up at 0.02 m/s for 0.5 s",
                            "stop the vehicles"):
            orch.run_session(instruction)
            assert orch.running_capabilities() == [], instruction
