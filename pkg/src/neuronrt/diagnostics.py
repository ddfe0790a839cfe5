"""Tiny node bodies for supervision drills: a heartbeat publisher, a node
that faults on purpose, and one that ignores its stop signal. They run in
either isolation mode.
"""

from __future__ import annotations

import time


def ticker_node(ctx) -> None:
    """Publish empty ticks on params["topic"] every params["period_s"].

    Stops when asked; params["count"] caps the number of ticks for
    clean-return tests.
    """
    topic = ctx.params.get("topic", "/diag/tick")
    period = float(ctx.params.get("period_s", 0.02))
    count = ctx.params.get("count")
    ctx.bus.advertise(topic, "std/Empty", owner=ctx.node_id)
    published = 0
    while not ctx.stopped:
        ctx.bus.publish(topic, {})
        published += 1
        if count is not None and published >= int(count):
            return
        ctx.sleep(period)


def faulty_node(ctx) -> None:
    """Raise after an optional delay; exercises the failed(reason) path."""
    delay = float(ctx.params.get("delay_s", 0.0))
    if delay > 0:
        ctx.sleep(delay)
    raise RuntimeError(ctx.params.get("message", "injected fault"))


def stubborn_node(ctx) -> None:
    """Ignore the stop signal forever; exercises force-stop after grace."""
    while True:
        time.sleep(0.05)
