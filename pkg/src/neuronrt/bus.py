"""Typed publish/subscribe bus with latest-value caching and services.

Topics carry sequence-numbered envelopes whose payloads are validated
against the type catalog before anything is delivered: an invalid payload
is never observable. Stamps come from a single bus-owned clock that is
strictly monotonic even when the wall clock stalls.

Payloads are treated as frozen once published; the bus does not copy them.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable

from .errors import (
    ServiceCallError,
    TypeMismatchError,
    UnknownServiceError,
    UnknownTopicError,
)
from .validation import TypeCatalog, validate

DEFAULT_QUEUE_CAPACITY = 64


@dataclass(frozen=True)
class Envelope:
    topic: str
    seq: int
    stamp_ns: int
    type_name: str
    payload: Any

    def as_dict(self) -> dict:
        return {
            "topic": self.topic,
            "seq": self.seq,
            "stamp_ns": self.stamp_ns,
            "type": self.type_name,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Envelope":
        return cls(doc["topic"], doc["seq"], doc["stamp_ns"], doc["type"], doc["payload"])


class Subscription:
    """Bounded per-subscriber queue, drop-oldest on overflow."""

    def __init__(self, topic: str, capacity: int = DEFAULT_QUEUE_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.topic = topic
        self.capacity = capacity
        self._queue: deque[Envelope] = deque(maxlen=capacity)
        self._cond = threading.Condition()
        self._closed = False
        self.dropped = 0

    def _push(self, envelope: Envelope) -> None:
        with self._cond:
            if self._closed:
                return
            if len(self._queue) == self.capacity:
                self.dropped += 1
            self._queue.append(envelope)
            self._cond.notify_all()

    def get(self, timeout: float | None = None) -> Envelope | None:
        """Next envelope in seq order; None on timeout or after close."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while not self._queue:
                if self._closed:
                    return None
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return None
                self._cond.wait(remaining)
            return self._queue.popleft()

    def try_get(self) -> Envelope | None:
        with self._cond:
            return self._queue.popleft() if self._queue else None

    def drain(self) -> list[Envelope]:
        """Everything queued right now, oldest first."""
        with self._cond:
            items = list(self._queue)
            self._queue.clear()
            return items

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @property
    def closed(self) -> bool:
        return self._closed


class _Topic:
    __slots__ = ("name", "type_name", "owner", "seq", "latest", "subscribers")

    def __init__(self, name: str, type_name: str, owner: str | None):
        self.name = name
        self.type_name = type_name
        self.owner = owner
        self.seq = 0
        self.latest: Envelope | None = None
        self.subscribers: list[Subscription] = []


class _Service:
    __slots__ = ("name", "type_name", "owner", "handler")

    def __init__(self, name: str, type_name: str, owner: str | None, handler):
        self.name = name
        self.type_name = type_name
        self.owner = owner
        self.handler = handler


class MessageBus:
    """In-process hub; safe for concurrent use from any number of threads."""

    def __init__(self, catalog: TypeCatalog):
        self.catalog = catalog
        self._lock = threading.RLock()
        self._topics: dict[str, _Topic] = {}
        self._services: dict[str, _Service] = {}
        self._last_stamp = 0

    def now_ns(self) -> int:
        """Bus clock: wall nanoseconds, forced strictly increasing."""
        with self._lock:
            stamp = max(time.time_ns(), self._last_stamp + 1)
            self._last_stamp = stamp
            return stamp

    # --- topics ---------------------------------------------------------

    def advertise(self, topic: str, type_name: str, owner: str | None = None) -> None:
        """Idempotent for the same type; conflicting re-advertise is an error."""
        self.catalog.message(type_name)  # KeyError surfaces unknown types early
        with self._lock:
            existing = self._topics.get(topic)
            if existing is None:
                self._topics[topic] = _Topic(topic, type_name, owner)
            elif existing.type_name != type_name:
                raise TypeMismatchError(
                    f"topic {topic!r} already advertised as {existing.type_name}, "
                    f"re-advertise requested {type_name}")

    def has_topic(self, topic: str) -> bool:
        with self._lock:
            return topic in self._topics

    def topic_info(self) -> dict[str, dict]:
        with self._lock:
            return {
                t.name: {"type": t.type_name, "seq": t.seq, "owner": t.owner,
                         "subscribers": len(t.subscribers)}
                for t in self._topics.values()
            }

    def publish(self, topic: str, payload: Any) -> Envelope:
        with self._lock:
            state = self._topics.get(topic)
        if state is None:
            raise UnknownTopicError(topic)
        report = validate(self.catalog.message(state.type_name), payload)
        if not report.ok:
            raise TypeMismatchError(
                f"payload for {topic!r} is not a valid {state.type_name}: "
                f"{report.summary()}", violations=report.violations)
        with self._lock:
            if self._topics.get(topic) is not state:
                raise UnknownTopicError(topic)
            state.seq += 1
            envelope = Envelope(topic, state.seq, self.now_ns(), state.type_name, payload)
            state.latest = envelope
            # fan out under the lock so every queue sees seqs in order
            for sub in state.subscribers:
                sub._push(envelope)
        return envelope

    def subscribe(self, topic: str, capacity: int = DEFAULT_QUEUE_CAPACITY) -> Subscription:
        with self._lock:
            state = self._topics.get(topic)
            if state is None:
                raise UnknownTopicError(topic)
            sub = Subscription(topic, capacity)
            state.subscribers.append(sub)
            return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            state = self._topics.get(sub.topic)
            if state is not None and sub in state.subscribers:
                state.subscribers.remove(sub)
        sub.close()

    def read_latest(self, topic: str) -> Envelope | None:
        with self._lock:
            state = self._topics.get(topic)
            if state is None:
                raise UnknownTopicError(topic)
            return state.latest

    # --- services -------------------------------------------------------

    def advertise_service(self, name: str, type_name: str,
                          handler: Callable[[Any], Any],
                          owner: str | None = None) -> None:
        self.catalog.service(type_name)
        with self._lock:
            if name in self._services:
                raise ServiceCallError(f"service {name!r} already advertised")
            self._services[name] = _Service(name, type_name, owner, handler)

    def service_info(self) -> dict[str, str]:
        with self._lock:
            return {s.name: s.type_name for s in self._services.values()}

    def call_service(self, name: str, request: Any) -> Any:
        with self._lock:
            service = self._services.get(name)
        if service is None:
            raise UnknownServiceError(name)
        req_spec, resp_spec = self.catalog.service(service.type_name)
        report = validate(req_spec, request)
        if not report.ok:
            raise TypeMismatchError(
                f"request for {name!r} is not a valid {service.type_name} request: "
                f"{report.summary()}", violations=report.violations)
        try:
            response = service.handler(request)
        except Exception as e:
            raise ServiceCallError(f"service {name!r} handler failed: {e!r}") from e
        report = validate(resp_spec, response)
        if not report.ok:
            raise ServiceCallError(
                f"service {name!r} returned an invalid {service.type_name} response: "
                f"{report.summary()}")
        return response

    # --- ownership ------------------------------------------------------

    def retire_owner(self, owner: str) -> list[str]:
        """Drop every topic and service advertised by `owner`; returns topic names."""
        with self._lock:
            retired = [name for name, t in self._topics.items() if t.owner == owner]
            for name in retired:
                for sub in self._topics[name].subscribers:
                    sub.close()
                del self._topics[name]
            for name in [n for n, s in self._services.items() if s.owner == owner]:
                del self._services[name]
            return retired
