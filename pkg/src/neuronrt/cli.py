"""One binary for the whole runtime: catalog generation, serving the
JSON-RPC endpoint, scripted demos of the three instruction families, and
the backend benchmark.

Exit codes are part of the contract: 0 success, 1 runtime failure (demo
assertion failed, port already bound), 2 bad input (config errors, parser
diagnostics, unknown backend).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import threading
from pathlib import Path

from . import asset_path
from .bus import MessageBus
from .errors import NeuronError, ConfigError
from .orchestrator import Orchestrator
from .planner import RemotePlanner
from .rpc import JsonRpcClient, RpcError, TcpRpcServer, serve_stdio
from .runtime import NodeRuntime
from .tools import build_tool_library, serialize_catalog
from .world import SceneConfig, load_scene
from .wrappers import benchmark, default_registry

log = logging.getLogger("neuronrt")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


@dataclasses.dataclass(frozen=True)
class CliConfig:
    """Validated launch settings shared by serve and the demos."""

    messages: Path
    bindings: Path
    scene: SceneConfig
    port: int = 0
    planner: str = "rules"
    log_level: str = "warning"

    def __post_init__(self):
        for path in (self.messages, self.bindings):
            if not path.exists():
                raise ConfigError(f"path does not exist: {path}")
        if self.planner not in ("rules", "remote"):
            raise ConfigError(f"planner must be rules or remote, got {self.planner!r}")
        if self.planner == "remote":
            import os
            if not os.environ.get("NEURON_PLANNER_URL"):
                raise ConfigError("planner=remote needs NEURON_PLANNER_URL set")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="scene YAML (default: packaged scene)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the scene seed")
    parser.add_argument("--planner", choices=("rules", "remote"),
                        default="rules")
    parser.add_argument("--log-level", default="warning",
                        choices=("debug", "info", "warning", "error"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neuronrt",
        description="message-driven robot runtime with tool-call control")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate the tool catalog")
    gen.add_argument("--messages", type=Path,
                     default=Path(str(asset_path("messages"))))
    gen.add_argument("--bindings", type=Path,
                     default=Path(str(asset_path("configs", "bindings.yaml"))))
    gen.add_argument("--emit", type=Path, default=None,
                     help="write the catalog here instead of stdout")

    serve = sub.add_parser("serve", help="run the orchestrator endpoint")
    _add_common(serve)
    serve.add_argument("--stdio", action="store_true",
                       help="serve one client over stdin/stdout")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=0,
                       help="TCP port (0 picks one and prints it)")

    demo = sub.add_parser("demo", help="run a scripted case end to end")
    _add_common(demo)
    demo.add_argument("case", choices=("case1", "case2", "case3"))

    bench = sub.add_parser("bench", help="compare inference backends")
    bench.add_argument("--pair", action="append", default=None,
                       metavar="MODEL/BACKEND",
                       help="repeatable; default: every runnable backend")
    bench.add_argument("--frames", type=int, default=50)
    bench.add_argument("--warmup", type=int, default=5)
    bench.add_argument("--json", type=Path, default=None, dest="json_out",
                       help="also write the report as JSON")
    return parser


def _load_config(args) -> CliConfig:
    scene = load_scene(args.config)
    if args.seed is not None:
        scene = dataclasses.replace(scene, seed=args.seed)
    return CliConfig(
        messages=Path(str(asset_path("messages"))),
        bindings=Path(str(asset_path("configs", "bindings.yaml"))),
        scene=scene,
        port=getattr(args, "port", 0),
        planner=args.planner,
        log_level=args.log_level)


def _build_orchestrator(config: CliConfig) -> Orchestrator:
    library = build_tool_library(config.messages, config.bindings)
    orchestrator = Orchestrator(
        NodeRuntime(MessageBus(library.catalog)), library, config.scene)
    if config.planner == "remote":
        orchestrator.planner = RemotePlanner(
            orchestrator.registry.catalog()["tools"])
    return orchestrator


# ----------------------------------------------------------------- commands

def cmd_gen(args) -> int:
    try:
        library = build_tool_library(args.messages, args.bindings)
    except (NeuronError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    text = serialize_catalog(library.tools)
    if args.emit is not None:
        args.emit.write_text(text)
        print(f"wrote {len(library.tools)} tools to {args.emit}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        config = _load_config(args)
        orchestrator = _build_orchestrator(config)
    except NeuronError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    if args.stdio:
        try:
            serve_stdio(orchestrator)
        except KeyboardInterrupt:
            pass
        finally:
            orchestrator.runtime.shutdown()
        return EXIT_OK

    try:
        server = TcpRpcServer(orchestrator, host=args.host, port=args.port)
    except OSError as e:
        print(f"error: cannot bind {args.host}:{args.port}: {e}",
              file=sys.stderr)
        orchestrator.runtime.shutdown()
        return EXIT_RUNTIME
    server.start()
    print(f"listening on {server.host}:{server.port}", flush=True)
    log.info("serving; interrupt to stop")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        orchestrator.runtime.shutdown()
    return EXIT_OK


def _tap_snapshot(client: JsonRpcClient, topic: str, timeout: float = 5.0) -> dict:
    """One envelope payload from a topic, via the public tap method."""
    tap = client.call("topics/tap", {"topic": topic})
    try:
        deadline_misses = 0
        while True:
            note = client.next_notification(timeout)
            if note is None:
                deadline_misses += 1
                if deadline_misses >= 2:
                    raise TimeoutError(f"no envelope arrived on {topic}")
                continue
            params = note.get("params", {})
            if note.get("method") == "topics/envelope" \
                    and params.get("tap_id") == tap["tap_id"]:
                return params["payload"]
    finally:
        client.call("topics/untap", {"tap_id": tap["tap_id"]})


_CASE_INSTRUCTIONS = {
    "case1": "Move forward at 0.5m/s",
    "case2": "move the end effector forward at 0.01 m/s for 5 s",
    "case3": "pick up the blue bowl",
}


def _check_case1(client: JsonRpcClient, transcript: dict) -> list[str]:
    problems = []
    if [s["tool"] for s in transcript["steps"]] != ["pub_twist"]:
        problems.append("expected exactly one pub_twist step")
    client.call("tools/call", {"name": "wait_sim_time",
                               "arguments": {"seconds": 1.0}})
    fleet = _tap_snapshot(client, "/world/vehicles")
    for vehicle in fleet["vehicles"]:
        speed = vehicle["forward_speed"]
        if abs(speed - 0.5) > 0.025:
            problems.append(
                f"{vehicle['vehicle_id']}: {speed:.4f} m/s not within 5% of 0.5")
    return problems


def _check_case2(before: dict, after: dict) -> list[str]:
    problems = []
    dx = after["x"] - before["x"]
    lateral = max(abs(after["y"] - before["y"]), abs(after["z"] - before["z"]))
    if abs(dx - 0.05) > 0.002:
        problems.append(f"x displacement {dx:.4f} m not within 0.050 +/- 0.002")
    if lateral >= 0.002:
        problems.append(f"lateral deviation {lateral * 1e3:.2f} mm >= 2 mm")
    return problems


def _check_case3(client: JsonRpcClient, transcript: dict) -> list[str]:
    problems = []
    status = _tap_snapshot(client, "/world/arm")
    if not status["grasped"]:
        problems.append("object not grasped at session end")
    nodes = client.call("status/nodes")["nodes"]
    leftovers = [n["node_id"] for n in nodes
                 if n["state"] in ("starting", "running")
                 and n["node_id"] != "world"]
    if leftovers:
        problems.append(f"nodes still running after session: {leftovers}")
    return problems


def cmd_demo(args) -> int:
    try:
        config = _load_config(args)
        orchestrator = _build_orchestrator(config)
    except NeuronError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    # the demo is also a protocol exercise: everything below goes through
    # the public endpoint, not the orchestrator object
    server = TcpRpcServer(orchestrator).start()
    client = JsonRpcClient.connect_tcp(server.host, server.port)
    instruction = _CASE_INSTRUCTIONS[args.case]
    try:
        if args.case == "case2":
            client.call("tools/call", {"name": "wait_sim_time",
                                       "arguments": {"seconds": 0.01}})
            before = _tap_snapshot(client, "/world/arm")["tip_position"]
        transcript = client.call("session/run",
                                 {"instruction": instruction}, timeout=120.0)
        print(json.dumps(transcript, indent=2))

        problems = []
        if transcript["outcome"] != "completed":
            problems.append(f"session outcome: {transcript['outcome']}")
        elif args.case == "case1":
            problems += _check_case1(client, transcript)
        elif args.case == "case2":
            after = _tap_snapshot(client, "/world/arm")["tip_position"]
            problems += _check_case2(before, after)
        else:
            problems += _check_case3(client, transcript)

        final = _tap_snapshot(client, "/world/arm")
        print("final arm state:", json.dumps(final))
        if problems:
            for problem in problems:
                print(f"FAIL: {problem}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"{args.case} passed")
        return EXIT_OK
    finally:
        client.close()
        server.shutdown()
        orchestrator.runtime.shutdown()


def cmd_bench(args) -> int:
    registry = default_registry()
    if args.pair:
        pairs = []
        for raw in args.pair:
            model, sep, backend = raw.partition("/")
            if not sep:
                print(f"error: --pair wants MODEL/BACKEND, got {raw!r}",
                      file=sys.stderr)
                return EXIT_USAGE
            if (model, backend) not in registry:
                available = ", ".join("/".join(p) for p in registry.available())
                print(f"error: unknown backend {raw!r}; available: {available}",
                      file=sys.stderr)
                return EXIT_USAGE
            pairs.append((model, backend))
    else:
        # stub slots raise on load, so the default run sticks to the
        # scripted model's backends
        pairs = [p for p in registry.available() if p[0] == "scripted_grasp"]

    try:
        report = benchmark(registry, pairs, frames=args.frames,
                           warmup=args.warmup)
    except NeuronError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    print(report.render_table())
    if args.json_out is not None:
        args.json_out.write_text(report.to_json())
        print(f"wrote {args.json_out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, getattr(args, "log_level", "warning").upper()),
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    handlers = {"gen": cmd_gen, "serve": cmd_serve, "demo": cmd_demo,
                "bench": cmd_bench}
    try:
        return handlers[args.command](args)
    except RpcError as e:
        print(f"error: rpc {e.code}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
