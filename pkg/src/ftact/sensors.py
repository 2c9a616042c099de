"""Synthetic cameras and multi-rate stream assembly.

Rendering is a deterministic orthographic rasterizer: the head camera covers
the whole workspace in a 2:1 panorama stand-in, the gripper camera is a
square crop centered ahead-and-below the jaws that translates and rotates
rigidly with the gripper.  Streams are sampled latest-value-hold: an
observation at time t takes each stream's most recent sample with
timestamp <= t.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from . import FtactError
from .config import SensorConfig, SimConfig
from .sim.world import SimState


class StreamStarved(FtactError):
    pass


# color_id -> RGB. At least as many entries as registered bottle specs.
BOTTLE_PALETTE = np.array(
    [
        (196, 60, 54),    # red
        (222, 168, 62),   # amber
        (84, 170, 68),    # green
        (96, 154, 222),   # light blue
        (138, 94, 52),    # brown
        (228, 120, 44),   # orange
        (44, 60, 148),    # navy
        (204, 228, 148),  # pastel green
        (70, 46, 36),     # dark brown
        (238, 214, 80),   # yellow
        (150, 70, 160),   # purple
        (90, 200, 200),   # teal
    ],
    dtype=np.uint8,
)
BACKGROUND = (26, 28, 34)
TABLE_COLOR = (112, 104, 92)
TABLE_EDGE_COLOR = (74, 66, 58)
GRIPPER_BODY = (225, 225, 230)
GRIPPER_JAW = (235, 90, 60)
CAP_DARKEN = 0.55  # cap band brightness factor


@dataclass(frozen=True)
class Frame:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8, row-major
    timestamp: float
    channels: int = 3

    @property
    def data(self) -> bytes:
        return self.pixels.tobytes()

    def __post_init__(self) -> None:
        if self.pixels.shape != (self.height, self.width, self.channels):
            raise FtactError(
                f"frame pixels {self.pixels.shape} != ({self.height}, {self.width}, {self.channels})"
            )


def _paint_rect(
    frame: np.ndarray, X: np.ndarray, Z: np.ndarray,
    cx: float, cz: float, theta: float, hw: float, hh: float,
    color, cap_color=None, cap_from: float = 0.64,
) -> None:
    c, s = math.cos(theta), math.sin(theta)
    dx = X - cx
    dz = Z - cz
    u = c * dx - s * dz
    v = s * dx + c * dz
    mask = (np.abs(u) <= hw) & (np.abs(v) <= hh)
    frame[mask] = color
    if cap_color is not None:
        frame[mask & (v >= hh * cap_from)] = cap_color


def _render(cfg: SimConfig, state: SimState, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    h, w_px = X.shape
    frame = np.empty((h, w_px, 3), dtype=np.uint8)
    frame[:] = BACKGROUND
    wc = cfg.world
    # table slab and its front edge face
    frame[(Z <= wc.table_height) & (Z >= wc.table_height - 0.035) & (X <= wc.table_edge_x)] = TABLE_COLOR
    frame[(Z <= wc.table_height) & (X <= wc.table_edge_x) & (X >= wc.table_edge_x - 0.008)] = TABLE_EDGE_COLOR
    for i, spec in enumerate(state.specs):
        bx, bz, bth = state.bottle_pose(i)
        color = BOTTLE_PALETTE[spec.color_id % len(BOTTLE_PALETTE)]
        cap = (color.astype(np.float64) * CAP_DARKEN).astype(np.uint8)
        _paint_rect(frame, X, Z, bx, bz, bth, spec.half_width, spec.half_height, color, cap)
    gx, gz, gth = state.gripper_pose
    ap = state.aperture
    # body above the jaw center, then the two jaws
    c, s = math.cos(gth), math.sin(gth)
    bx_off, bz_off = 0.0 * c + 0.045 * s, -0.0 * s + 0.045 * c
    _paint_rect(frame, X, Z, gx + bx_off, gz + bz_off, gth, 0.014, 0.030, GRIPPER_BODY)
    for side in (-1.0, 1.0):
        ox = side * (ap / 2 + 0.004)
        jx, jz = ox * c + 0.012 * s, -ox * s + 0.012 * c
        _paint_rect(frame, X, Z, gx + jx, gz + jz, gth, 0.004, 0.028, GRIPPER_JAW)
    return frame


def render_head(cfg: SimConfig, state: SimState, timestamp: float | None = None) -> Frame:
    """Orthographic side view of the whole workspace (2:1 panorama stand-in)."""
    sc = cfg.sensors
    h, w_px = sc.head_height, sc.head_width
    xs = sc.view_x[0] + (np.arange(w_px) + 0.5) * (sc.view_x[1] - sc.view_x[0]) / w_px
    zs = sc.view_z[1] - (np.arange(h) + 0.5) * (sc.view_z[1] - sc.view_z[0]) / h
    X = np.broadcast_to(xs, (h, w_px))
    Z = np.broadcast_to(zs[:, None], (h, w_px))
    ts = state.time if timestamp is None else timestamp
    return Frame(w_px, h, _render(cfg, state, X, Z), ts)


def render_gripper(cfg: SimConfig, state: SimState, timestamp: float | None = None) -> Frame:
    """Square crop ahead-and-below the jaws, rigid with the gripper pose."""
    sc = cfg.sensors
    h, w_px = sc.grip_height, sc.grip_width
    gx, gz, gth = state.gripper_pose
    c, s = math.cos(gth), math.sin(gth)
    # -45 degree view ray in the gripper frame
    ox = sc.grip_cam_offset * math.cos(-math.pi / 4)
    oz = sc.grip_cam_offset * math.sin(-math.pi / 4)
    cx = gx + ox * c + oz * s
    cz = gz - ox * s + oz * c
    us = (np.arange(w_px) + 0.5 - w_px / 2) * sc.grip_cam_scale
    vs = (h / 2 - np.arange(h) - 0.5) * sc.grip_cam_scale
    U = np.broadcast_to(us, (h, w_px))
    V = np.broadcast_to(vs[:, None], (h, w_px))
    X = cx + U * c + V * s
    Z = cz - U * s + V * c
    ts = state.time if timestamp is None else timestamp
    return Frame(w_px, h, _render(cfg, state, X, Z), ts)


@dataclass
class StreamHistory:
    """Append-only timestamped buffers, one per sensor stream."""

    head: list[tuple[float, Frame]] = field(default_factory=list)
    gripper: list[tuple[float, Frame]] = field(default_factory=list)
    joints: list[tuple[float, np.ndarray]] = field(default_factory=list)
    wrench: list[tuple[float, np.ndarray]] = field(default_factory=list)

    def _append(self, buf: list, ts: float, value) -> None:
        if buf and ts < buf[-1][0]:
            raise FtactError(f"stream timestamps must be non-decreasing: {ts} < {buf[-1][0]}")
        buf.append((ts, value))

    def add_head(self, ts: float, frame: Frame) -> None:
        self._append(self.head, ts, frame)

    def add_gripper(self, ts: float, frame: Frame) -> None:
        self._append(self.gripper, ts, frame)

    def add_joints(self, ts: float, joints: np.ndarray) -> None:
        self._append(self.joints, ts, joints)

    def add_wrench(self, ts: float, wrench6: np.ndarray) -> None:
        self._append(self.wrench, ts, wrench6)


@dataclass(frozen=True)
class ObservationBundle:
    head: Frame
    gripper: Frame
    joints: np.ndarray        # (4,) x, z, theta, aperture
    wrench: np.ndarray        # (6,) fx fy fz tx ty tz
    timestamps: dict[str, float]
    tick_index: int


def _latest(buf: list[tuple[float, object]], t: float, name: str):
    ts_list = [b[0] for b in buf]
    idx = bisect_right(ts_list, t) - 1
    if idx < 0:
        raise StreamStarved(f"stream '{name}' has no sample at or before t={t}")
    return buf[idx]


def sample_streams(history: StreamHistory, t: float, control_hz: float = 50.0) -> ObservationBundle:
    """Latest-value hold across all streams at time t."""
    ht, head = _latest(history.head, t, "head")
    gt, grip = _latest(history.gripper, t, "gripper")
    jt, joints = _latest(history.joints, t, "joints")
    wt, wrench = _latest(history.wrench, t, "wrench")
    return ObservationBundle(
        head=head,
        gripper=grip,
        joints=joints,
        wrench=wrench,
        timestamps={"head": ht, "gripper": gt, "joints": jt, "wrench": wt},
        tick_index=int(round(t * control_hz)),
    )


class StreamClock:
    """Integer event indexing for one fixed-rate stream (exact timestamps k/hz)."""

    def __init__(self, hz: float):
        self.hz = hz
        self.next_idx = 0

    def due(self, t: float) -> list[float]:
        """Event timestamps with next_idx/hz <= t (advances the cursor)."""
        out = []
        while self.next_idx / self.hz <= t + 1e-12:
            out.append(self.next_idx / self.hz)
            self.next_idx += 1
        return out
