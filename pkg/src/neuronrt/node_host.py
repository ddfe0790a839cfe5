"""Subprocess entry shim: run one node body against the TCP bus transport.

Invoked as:
  python -m neuronrt.node_host --node-id X --entry pkg.mod:fn --port N --params '{...}'

SIGTERM and SIGINT request a graceful stop via the node's stop event; the
body is expected to poll it (ctx.stopped / bounded-timeout gets). Exit code
0 = clean stop, 1 = body raised, 3 = could not start at all.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading
import traceback

from .errors import SpawnFailureError
from .runtime import NodeContext, resolve_entry
from .wire import BusClient


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="neuronrt.node_host", add_help=False)
    parser.add_argument("--node-id", required=True)
    parser.add_argument("--entry", required=True)
    parser.add_argument("--port", type=int, required=True)
    parser.add_argument("--params", default="{}")
    args = parser.parse_args(argv)

    stop_event = threading.Event()
    for sig in (signal.SIGTERM, signal.SIGINT):
        signal.signal(sig, lambda *_: stop_event.set())

    try:
        fn = resolve_entry(args.entry)
        params = json.loads(args.params)
        client = BusClient(args.port)
    except (SpawnFailureError, ValueError, OSError) as e:
        print(f"node {args.node_id} failed to start: {e}", file=sys.stderr)
        return 3

    client.hello(args.node_id)
    ctx = NodeContext(args.node_id, client, params, stop_event)
    try:
        fn(ctx)
    except Exception as e:
        traceback.print_exc()
        try:
            client.goodbye(args.node_id, error=repr(e))
        except Exception:
            pass
        return 1
    try:
        client.goodbye(args.node_id)
    except Exception:
        pass
    client.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
