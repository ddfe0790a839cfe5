"""Backend micro-benchmark.

Every backend sees the identical frame sequence, built once up front.
Timing brackets predict_action only; load/unload and frame construction
stay outside the clock. Alongside latency stats each row carries a
checksum of all emitted actions (rounded to 9 decimals, packed as
little-endian doubles, sha256), so "faster but different answers" is
impossible to miss.
"""

from __future__ import annotations

import hashlib
import json
import statistics
import struct
import time
from dataclasses import asdict, dataclass

from ..errors import ConfigError
from .camera import (DEFAULT_METERS_PER_PIXEL, DEFAULT_VIEWPORT_CENTER, Frame,
                     render_scene)
from .models import BackendRegistry

DEFAULT_TASK = {"task": "benchmark sweep"}
_SWEEP_START = (0.30, 0.0, 0.20)
_SWEEP_TARGET = (0.45, 0.1, 0.05)


def default_frame_source(count: int) -> list[Frame]:
    """Scripted approach: the tip slides from a home-ish point onto the
    target, so early frames exercise the step cap and late ones the
    grasp branch."""
    frames = []
    for i in range(count):
        s = i / max(1, count - 1)
        tip = tuple(a + (b - a) * s for a, b in zip(_SWEEP_START, _SWEEP_TARGET))
        data = render_scene(_SWEEP_TARGET, tip)
        frames.append(Frame(64, 64, "rgb8", data, stamp_ns=i + 1))
    return frames


@dataclass(frozen=True)
class BenchRow:
    model_id: str
    backend_id: str
    frames: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    throughput_hz: float
    checksum: str


@dataclass(frozen=True)
class BenchReport:
    frames: int
    warmup: int
    rows: tuple

    def to_json(self) -> str:
        return json.dumps(
            {"frames": self.frames, "warmup": self.warmup,
             "rows": [asdict(row) for row in self.rows]},
            indent=2)

    def render_table(self) -> str:
        header = ("model", "backend", "mean ms", "median ms", "p95 ms",
                  "hz", "checksum")
        body = [(row.model_id, row.backend_id, f"{row.mean_ms:.3f}",
                 f"{row.median_ms:.3f}", f"{row.p95_ms:.3f}",
                 f"{row.throughput_hz:.1f}", row.checksum[:12])
                for row in self.rows]
        widths = [max(len(header[i]), *(len(line[i]) for line in body))
                  if body else len(header[i]) for i in range(len(header))]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        lines = [fmt.format(*header), fmt.format(*("-" * w for w in widths))]
        lines.extend(fmt.format(*line) for line in body)
        return "\n".join(lines)


def _p95(samples_ms: list) -> float:
    ordered = sorted(samples_ms)
    idx = max(0, -(-len(ordered) * 95 // 100) - 1)  # ceil(0.95 n) - 1
    return ordered[idx]


def benchmark(registry: BackendRegistry, pairs, frames: int = 50,
              warmup: int = 5, task_context: dict | None = None,
              frame_source=None) -> BenchReport:
    """Run each (model_id, backend_id) pair over the same frames.

    `frames` counts measured predictions; `warmup` predictions run first
    and are discarded. Requires frames > warmup >= 0.
    """
    if warmup < 0:
        raise ConfigError("warmup must be >= 0")
    if frames <= warmup:
        raise ConfigError("frames must exceed warmup")
    task_context = dict(task_context or DEFAULT_TASK)
    total = frames + warmup
    sequence = (frame_source or default_frame_source)(total)
    if len(sequence) < total:
        raise ConfigError(
            f"frame source produced {len(sequence)} frames, need {total}")

    rows = []
    for model_id, backend_id in pairs:
        wrapper = registry.create(model_id, backend_id)
        wrapper.load(model_id, task_context)
        try:
            samples_ms = []
            digest = hashlib.sha256()
            for i, frame in enumerate(sequence[:total]):
                t0 = time.perf_counter_ns()
                action = wrapper.predict_action(frame, task_context)
                elapsed = time.perf_counter_ns() - t0
                if i < warmup:
                    continue
                samples_ms.append(elapsed / 1e6)
                digest.update(struct.pack(
                    "<7d", *(round(v, 9) for v in action.to_tuple())))
        finally:
            wrapper.unload()
        mean_ms = statistics.fmean(samples_ms)
        rows.append(BenchRow(
            model_id=model_id,
            backend_id=backend_id,
            frames=frames,
            mean_ms=mean_ms,
            median_ms=statistics.median(samples_ms),
            p95_ms=_p95(samples_ms),
            throughput_hz=1000.0 / mean_ms if mean_ms > 0 else float("inf"),
            checksum=digest.hexdigest(),
        ))
    return BenchReport(frames=frames, warmup=warmup, rows=tuple(rows))
