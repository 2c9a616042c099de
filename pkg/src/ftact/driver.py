"""Shared 50 Hz tick driver: substeps, multi-rate sensor capture, recording.

One control tick = ``substeps_per_tick`` physics substeps.  Sensor streams
fire on their own exact rate grids (timestamps k/hz); each sample captures
the state right after the substep whose window contains the ideal time, so a
sample due exactly at a tick boundary is visible to that tick's observation.
Simulated time is fully decoupled from wall time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import FtactError, __version__
from .config import SimConfig
from .episodes import Episode
from .sensors import (
    ObservationBundle,
    StreamClock,
    StreamHistory,
    render_gripper,
    render_head,
    sample_streams,
)
from .sim.stages import Phase, StageStatus, check_stage
from .sim.world import GripperCommand, SimState, World


def _pose_row(state: SimState) -> np.ndarray:
    """Compact render pose: gripper (x, z, th), aperture, bottle poses."""
    n = state.n_bottles
    row = np.empty(4 + 3 * n)
    row[0:3] = state.gripper_pose
    row[3] = state.aperture
    for i in range(n):
        row[4 + 3 * i : 7 + 3 * i] = state.bottle_pose(i)
    return row


class TickDriver:
    """Drives one episode: observation assembly, stepping, stream recording."""

    def __init__(
        self,
        world: World,
        state: SimState,
        noise_rng: np.random.Generator | None = None,
        record_frames: bool = True,
        keep_states: bool = True,
    ):
        self.world = world
        self.cfg: SimConfig = world.cfg
        self.state = state
        self.noise_rng = noise_rng
        self.record_frames = record_frames
        self.keep_states = keep_states
        self.history = StreamHistory()
        sc = self.cfg.sensors
        self._clocks = {
            "head": StreamClock(sc.head_hz),
            "gripper": StreamClock(sc.gripper_hz),
            "joints": StreamClock(sc.joints_hz),
            "wrench": StreamClock(sc.wrench_hz),
        }
        self.actions: list[np.ndarray] = []
        self.phases: list[int] = []
        self.tick_states: list[SimState] = [state] if keep_states else []
        self.tick_qs: list[np.ndarray] = []
        self.head_qs: list[np.ndarray] = []
        self.grip_qs: list[np.ndarray] = []
        self.tick = 0
        self._fire_due(state.time)

    # -- sensors -----------------------------------------------------------
    def _fire_due(self, t: float) -> None:
        st = self.state
        for ts in self._clocks["joints"].due(t):
            self.history.add_joints(ts, st.joints)
        for ts in self._clocks["wrench"].due(t):
            wr = self.world.wrist_wrench(st, noise=self.noise_rng is not None, rng=self.noise_rng)
            self.history.add_wrench(ts, wr.as_vector())
        if self.record_frames:
            for ts in self._clocks["head"].due(t):
                self.history.add_head(ts, render_head(self.cfg, st, ts))
                self.head_qs.append(_pose_row(st))
            for ts in self._clocks["gripper"].due(t):
                self.history.add_gripper(ts, render_gripper(self.cfg, st, ts))
                self.grip_qs.append(_pose_row(st))
        else:
            # clocks still advance so recorded rates stay consistent
            self._clocks["head"].due(t)
            self._clocks["gripper"].due(t)

    def observe(self) -> ObservationBundle:
        return sample_streams(self.history, self.state.time, self.cfg.world.control_hz)

    # -- stepping ----------------------------------------------------------
    def advance(self, cmd: GripperCommand, phase: int = int(Phase.UNKNOWN)) -> SimState:
        """Apply one tick's command: substep physics, firing sensors as due."""
        self.actions.append(cmd.to_vec())
        self.phases.append(int(phase))
        self.tick_qs.append(np.append(_pose_row(self.state), float(self.state.grasp_index)))
        dt = self.cfg.world.dt
        for _ in range(self.cfg.world.substeps_per_tick):
            self.state = self.world.step(self.state, cmd, dt)
            self._fire_due(self.state.time)
        self.tick += 1
        if self.keep_states:
            self.tick_states.append(self.state)
        return self.state

    # -- packaging ---------------------------------------------------------
    def to_episode(
        self,
        seed: int,
        source: str,
        stage: StageStatus | None = None,
        excluded: bool = False,
        failure_reason: str | None = None,
    ) -> Episode:
        if not self.record_frames:
            raise FtactError("cannot package an episode without recorded frames")
        st = self.state
        if stage is None:
            stage = check_stage(self.tick_states, self.cfg.stages)
        sc = self.cfg.sensors
        md = {
            "seed": int(seed),
            "variant_set": st.variant_set,
            "source": source,
            "software_version": __version__,
            "lying_index": int(st.lying_index),
            "bottles": [
                {
                    "id": s.id, "pool": s.pool, "height": s.height, "width": s.width,
                    "mass": s.mass, "friction_mu": s.friction_mu,
                    "restitution": s.restitution, "color_id": s.color_id,
                }
                for s in st.specs
            ],
            "stage": {"pick": stage.pick, "press": stage.press, "place": stage.place},
            "excluded": bool(excluded),
            "failure_reason": failure_reason,
            "control_hz": self.cfg.world.control_hz,
            "rates": {
                "head_hz": sc.head_hz, "gripper_hz": sc.gripper_hz,
                "joints_hz": sc.joints_hz, "wrench_hz": sc.wrench_hz,
            },
            "dims": {
                "head_h": sc.head_height, "head_w": sc.head_width,
                "grip_h": sc.grip_height, "grip_w": sc.grip_width,
            },
        }
        # keep only samples at or before the last observation tick, so the
        # joints stream has exactly one sample per recorded action
        t_last = (len(self.actions) - 1) * self.cfg.world.control_dt + 1e-9

        def _trim(buf):
            return [(t, v) for t, v in buf if t <= t_last]

        head = _trim(self.history.head)
        grip = _trim(self.history.gripper)
        joints = _trim(self.history.joints)
        wrench = _trim(self.history.wrench)
        return Episode(
            metadata=md,
            head_ts=np.array([t for t, _ in head]),
            head_px=np.stack([f.pixels for _, f in head]),
            head_qs=np.stack(self.head_qs[: len(head)]),
            grip_ts=np.array([t for t, _ in grip]),
            grip_px=np.stack([f.pixels for _, f in grip]),
            grip_qs=np.stack(self.grip_qs[: len(grip)]),
            joints_ts=np.array([t for t, _ in joints]),
            joints=np.stack([j for _, j in joints]).astype(np.float32),
            wrench_ts=np.array([t for t, _ in wrench]),
            wrench=np.stack([w for _, w in wrench]).astype(np.float32),
            actions=np.stack(self.actions).astype(np.float32),
            phases=np.array(self.phases, dtype=np.uint8),
            tick_qs=np.stack(self.tick_qs),
        )
