"""Synthetic camera: deterministic procedural frames that encode scene
ground truth in pixels.

The viewport is a top-down orthographic patch of the workspace. The target
object is a red 3x3 marker and the arm tip a green one; marker pixel
position maps linearly to world x/y. Heights ride in a blue side-band in
row 0 (16-bit big-endian, 0.1 mm units) together with presence flags, so a
decoder recovers full 3-D positions without any vision model:

  row 0, px 0-1  blue = target z   row 0, px 2-3  blue = tip z
  row 0, px 4    blue = flags (bit0 target visible, bit1 tip visible)

Markers are drawn from row 2 down, never touching the side-band.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import NotOpenError

DEFAULT_WIDTH = 64
DEFAULT_HEIGHT = 64
DEFAULT_VIEWPORT_CENTER = (0.4, 0.0)
DEFAULT_METERS_PER_PIXEL = 0.008
_Z_UNIT = 1e-4          # 0.1 mm per count
_MARKER = 1             # half-extent of the 3x3 marker


@dataclass(frozen=True)
class Frame:
    width: int
    height: int
    encoding: str
    data: bytes
    stamp_ns: int

    def to_payload(self) -> dict:
        # data stays bytes: uint8[] validation accepts raw buffers and the
        # per-element list form costs milliseconds per frame
        return {"width": self.width, "height": self.height,
                "encoding": self.encoding, "data": self.data}

    @classmethod
    def from_payload(cls, payload: dict, stamp_ns: int = 0) -> "Frame":
        return cls(payload["width"], payload["height"], payload["encoding"],
                   bytes(payload["data"]), stamp_ns)


def world_to_pixel(x: float, y: float, width: int, height: int,
                   center: tuple[float, float], mpp: float) -> tuple[int, int]:
    col = int(round((x - center[0]) / mpp)) + width // 2
    row = int(round((y - center[1]) / mpp)) + height // 2
    return col, row


def pixel_to_world(col: int, row: int, width: int, height: int,
                   center: tuple[float, float], mpp: float) -> tuple[float, float]:
    x = (col - width // 2) * mpp + center[0]
    y = (row - height // 2) * mpp + center[1]
    return x, y


def render_scene(target, tip, width=DEFAULT_WIDTH, height=DEFAULT_HEIGHT,
                 center=DEFAULT_VIEWPORT_CENTER,
                 mpp=DEFAULT_METERS_PER_PIXEL) -> bytes:
    """rgb8 image with the markers and side-band for the given 3-D points;
    either point may be None (absent)."""
    img = np.zeros((height, width, 3), dtype=np.uint8)
    flags = 0

    def stamp_marker(point, channel):
        col, row = world_to_pixel(point[0], point[1], width, height, center, mpp)
        if not (0 <= col < width and 2 <= row < height):
            return False
        lo_r, hi_r = max(2, row - _MARKER), min(height - 1, row + _MARKER)
        lo_c, hi_c = max(0, col - _MARKER), min(width - 1, col + _MARKER)
        img[lo_r:hi_r + 1, lo_c:hi_c + 1, channel] = 255
        return True

    def stamp_height(point, first_px):
        counts = min(65535, max(0, int(round(point[2] / _Z_UNIT))))
        img[0, first_px, 2] = counts >> 8
        img[0, first_px + 1, 2] = counts & 0xFF

    if target is not None and stamp_marker(target, 0):
        stamp_height(target, 0)
        flags |= 1
    if tip is not None and stamp_marker(tip, 1):
        stamp_height(tip, 2)
        flags |= 2
    img[0, 4, 2] = flags
    return img.tobytes()


def decode_scene(data: bytes, width=DEFAULT_WIDTH, height=DEFAULT_HEIGHT,
                 center=DEFAULT_VIEWPORT_CENTER,
                 mpp=DEFAULT_METERS_PER_PIXEL) -> dict:
    """Inverse of render_scene: {"target": (x,y,z)|None, "tip": ...}."""
    img = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
    flags = int(img[0, 4, 2])

    def locate(channel, z_px):
        rows, cols = np.nonzero(img[2:, :, channel] == 255)
        if rows.size == 0:
            return None
        row = float(rows.mean()) + 2.0
        col = float(cols.mean())
        x, y = pixel_to_world(int(round(col)), int(round(row)),
                              width, height, center, mpp)
        z = ((int(img[0, z_px, 2]) << 8) | int(img[0, z_px + 1, 2])) * _Z_UNIT
        return (x, y, z)

    return {
        "target": locate(0, 0) if flags & 1 else None,
        "tip": locate(1, 2) if flags & 2 else None,
    }


class CameraWrapper:
    """Contract: open(config) -> read() frames -> close()."""

    def open(self, config: dict) -> None:
        raise NotImplementedError

    def read(self) -> Frame:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class SyntheticCamera(CameraWrapper):
    """Deterministic camera. With a scene_source callable it renders live
    state ({"target": xyz|None, "tip": xyz|None}); without one it renders a
    static seed-placed target, so two cameras opened with the same seed
    produce identical pixel data."""

    def __init__(self, scene_source: Callable[[], dict] | None = None,
                 clock: Callable[[], int] | None = None):
        self._scene_source = scene_source
        self._clock = clock or time.time_ns
        self._open = False
        self._static_scene: dict | None = None
        self._last_stamp = 0
        self.width = DEFAULT_WIDTH
        self.height = DEFAULT_HEIGHT
        self.center = DEFAULT_VIEWPORT_CENTER
        self.mpp = DEFAULT_METERS_PER_PIXEL

    def open(self, config: dict | None = None) -> None:
        config = config or {}
        self.width = int(config.get("width", DEFAULT_WIDTH))
        self.height = int(config.get("height", DEFAULT_HEIGHT))
        self.center = tuple(config.get("viewport_center", DEFAULT_VIEWPORT_CENTER))
        self.mpp = float(config.get("meters_per_pixel", DEFAULT_METERS_PER_PIXEL))
        if self._scene_source is None:
            rng = np.random.default_rng(int(config.get("seed", 0)))
            span = self.mpp * (min(self.width, self.height) // 2 - 4)
            offset = rng.uniform(-span, span, size=2)
            self._static_scene = {
                "target": (self.center[0] + float(offset[0]),
                           self.center[1] + float(offset[1]),
                           float(rng.uniform(0.02, 0.10))),
                "tip": None,
            }
        self._open = True
        self._last_stamp = 0

    def read(self) -> Frame:
        if not self._open:
            raise NotOpenError("camera is not open")
        scene = self._static_scene if self._scene_source is None else self._scene_source()
        data = render_scene(scene.get("target"), scene.get("tip"),
                            self.width, self.height, self.center, self.mpp)
        stamp = max(int(self._clock()), self._last_stamp + 1)
        self._last_stamp = stamp
        return Frame(self.width, self.height, "rgb8", data, stamp)

    def close(self) -> None:
        self._open = False
