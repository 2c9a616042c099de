"""Scripted oracle demonstrator for the pick-and-reorient task.

Reproduces the teleoperator strategy: grasp the lying bottle near its cap,
carry it to the edge corridor, press its base against the table until the
contact force is sustained, sweep it upright while keeping the press engaged
(pausing the sweep whenever contact is lost), lower it onto a free spot
until touchdown force is felt, release, and retreat.  Transitions fire on
measurable predicates, so behavior is conditioned on the wrench the same way
the human operators' was.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import FtactError
from .config import SimConfig
from .driver import TickDriver
from .episodes import Episode
from .sim.stages import Phase, StageStatus, check_stage
from .sim.world import GripperCommand, NonFiniteState, SimState, World, find_free_spot


class PhasePreconditionViolated(FtactError):
    pass


class Timeout(FtactError):
    pass


_GRASP_PHASES_NEEDED = frozenset(
    {Phase.LIFT, Phase.MOVE_TO_EDGE, Phase.PRESS, Phase.REORIENT, Phase.MOVE_TO_SPOT, Phase.PLACE}
)


def _wrap(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))


def grasp_point(state: SimState, grasp_frac: float) -> tuple[float, float]:
    """Point on the lying bottle's axis toward the cap where the jaws close."""
    i = state.lying_index
    x, z, th = state.bottle_pose(i)
    hh = state.specs[i].half_height
    return (x + grasp_frac * hh * math.sin(th), z + grasp_frac * hh * math.cos(th))


class ExpertController:
    """Stateful waypoint servo around the pure per-phase targets."""

    def __init__(self, world: World, state: SimState):
        self.world = world
        self.cfg: SimConfig = world.cfg
        self.e = world.cfg.expert
        self.phase = Phase.APPROACH
        self.target = state.lying_index
        gx, gz, gth = state.gripper_pose
        self.cmd = np.array([gx, gz, gth, state.aperture])
        self.phase_t0 = state.time
        self.hold_t0: float | None = None
        self.pause_until = state.time + self.e.scan_pause
        self.place_x: float | None = None
        self.place_z_hold: float | None = None
        self.touch_t0: float | None = None
        self.grasp_xy = grasp_point(state, self.e.grasp_frac)
        self.done = False

    # -- pure per-phase waypoint (the "expert action" for a given phase) ----
    def expert_action(self, state: SimState, phase: Phase) -> GripperCommand:
        e = self.e
        w = self.cfg.world
        tgt = self.target
        grasped = state.grasp_index == tgt
        spec = state.specs[tgt]
        width = spec.width
        closed = max(width - 0.004, 0.0)
        gx, gz, gth = state.gripper_pose

        if phase in _GRASP_PHASES_NEEDED and not grasped:
            raise PhasePreconditionViolated(f"{phase.name} requires the target bottle grasped")

        if phase == Phase.APPROACH:
            px, pz = self.grasp_xy
            return GripperCommand(px, pz + e.approach_height, 0.0, self.cfg.gripper.max_aperture)
        if phase == Phase.GRASP:
            px, pz = self.grasp_xy
            near = abs(gx - px) < 0.008 and abs(gz - pz) < 0.006
            ap = 0.0 if near else self.cfg.gripper.max_aperture
            return GripperCommand(px, pz, 0.0, ap)
        if phase == Phase.LIFT:
            px, pz = self.grasp_xy
            return GripperCommand(px, self._carry_z(state, hang=spec.half_width), 0.0, closed)
        if phase == Phase.MOVE_TO_EDGE:
            x_e = min(e.press_x + (1.0 + e.grasp_frac) * spec.half_height, w.workspace_x[1] - 0.02)
            carry = self._carry_z(state, hang=spec.half_width)
            x_cmd = x_e if gz >= carry - 0.03 else gx
            return GripperCommand(x_cmd, carry, 0.0, closed)
        if phase in (Phase.PRESS, Phase.REORIENT):
            # feedforward keeps the lowest corner of the bottle pressed
            # press_depth below the surface AND parked at the press site, so
            # the pivoting base cannot wander over the table edge
            corners = state.bottle_corners(tgt)
            base = corners[[0, 2]]  # local v = -hh corners (away from the cap)
            low_idx = int(np.argmin(base[:, 1]))
            low = float(base[low_idx, 1])
            low_x = float(base[low_idx, 0])
            z_cmd = max(gz + (w.table_height - e.press_depth - low), w.workspace_z[0])
            x_cmd = gx + (e.press_x - low_x)
            if phase == Phase.PRESS:
                th_cmd = 0.96 - math.pi / 2  # tilt the bottle to ~55 deg
            else:
                th_cmd = -math.pi / 2        # bottle upright
            return GripperCommand(x_cmd, z_cmd, th_cmd, closed)
        if phase == Phase.MOVE_TO_SPOT:
            assert self.place_x is not None
            carry_z = self._carry_z(state, hang=(1.0 + e.grasp_frac) * spec.half_height)
            x_cmd = self.place_x if gz >= carry_z - 0.03 else gx
            return GripperCommand(x_cmd, carry_z, -math.pi / 2, closed)
        if phase == Phase.PLACE:
            if self.place_z_hold is not None:
                z_cmd = self.place_z_hold
            else:
                z_cmd = w.workspace_z[0]  # keep lowering; the ramp limits speed
            return GripperCommand(gx, z_cmd, -math.pi / 2, closed)
        if phase == Phase.RELEASE:
            return GripperCommand(gx, gz, -math.pi / 2, self.cfg.gripper.max_aperture)
        if phase == Phase.RETREAT:
            # sideways first (inside the free corridor next to the place spot,
            # with the jaw discs trailing), only then ascend
            rx = max((self.place_x or gx) - 0.07, w.workspace_x[0] + 0.02)
            if abs(gx - rx) > 0.012:
                return GripperCommand(rx, gz, -math.pi / 2, self.cfg.gripper.max_aperture)
            rz = min(w.table_height + 0.32, w.workspace_z[1])
            return GripperCommand(rx, rz, -math.pi / 2, self.cfg.gripper.max_aperture)
        raise PhasePreconditionViolated(f"no action defined for phase {phase}")

    # -- transition predicates ---------------------------------------------
    def advance_phase(self, state: SimState, phase: Phase) -> Phase:
        e = self.e
        t = state.time
        tgt = self.target
        grasped = state.grasp_index == tgt
        gx, gz, gth = state.gripper_pose
        fn = state.table_normal_force(tgt)

        if t - self.phase_t0 > e.phase_timeout:
            raise Timeout(f"phase {phase.name} exceeded {e.phase_timeout}s")
        if t < self.pause_until:
            return phase

        nxt = phase
        if phase == Phase.APPROACH:
            px, pz = self.grasp_xy
            if abs(gx - px) < 0.012 and abs(gz - (pz + e.approach_height)) < 0.012:
                nxt = Phase.GRASP
        elif phase == Phase.GRASP:
            if grasped:
                nxt = Phase.LIFT
        elif phase == Phase.LIFT:
            px, pz = self.grasp_xy
            if gz >= pz + e.lift_height - 0.012:
                nxt = Phase.MOVE_TO_EDGE
        elif phase == Phase.MOVE_TO_EDGE:
            spec = state.specs[tgt]
            x_e = min(
                e.press_x + (1.0 + e.grasp_frac) * spec.half_height,
                self.cfg.world.workspace_x[1] - 0.02,
            )
            carry = self._carry_z(state, hang=spec.half_width)
            if abs(gx - x_e) < 0.015 and abs(gz - carry) < 0.015:
                nxt = Phase.PRESS
        elif phase == Phase.PRESS:
            if fn >= e.press_force:
                if self.hold_t0 is None:
                    self.hold_t0 = t
                elif t - self.hold_t0 >= e.press_settle:
                    nxt = Phase.REORIENT
            else:
                self.hold_t0 = None
        elif phase == Phase.REORIENT:
            theta_b = _wrap(state.bottle_pose(tgt)[2])
            if abs(theta_b) < 0.06:
                nxt = Phase.MOVE_TO_SPOT
        elif phase == Phase.MOVE_TO_SPOT:
            if self.place_x is not None and abs(gx - self.place_x) < 0.012:
                nxt = Phase.PLACE
        elif phase == Phase.PLACE:
            if self.place_z_hold is None:
                if fn >= e.touch_force:
                    if self.touch_t0 is None:
                        self.touch_t0 = t
                    elif t - self.touch_t0 >= 0.1:
                        self.place_z_hold = gz
                        self.hold_t0 = t
                else:
                    self.touch_t0 = None
            elif t - self.hold_t0 >= e.settle_time:
                nxt = Phase.RELEASE
        elif phase == Phase.RELEASE:
            if not grasped and t - self.phase_t0 >= 0.3:
                nxt = Phase.RETREAT
        elif phase == Phase.RETREAT:
            if t - self.phase_t0 >= e.retreat_hold:
                self.done = True

        if nxt != phase:
            if nxt == Phase.MOVE_TO_SPOT:
                self.place_x = self._find_place_x(state)
            self.phase = nxt
            self.phase_t0 = t
            self.hold_t0 = None
            self.touch_t0 = None
            self.pause_until = t + e.pause
        return self.phase

    def _carry_z(self, state: SimState, hang: float) -> float:
        """Gripper height that keeps the hanging bottle clear of standing bottles."""
        w = self.cfg.world
        tops = [
            w.table_height + state.specs[i].height
            for i in range(state.n_bottles)
            if i != self.target
        ]
        return min(max(tops) + 0.03 + hang, w.workspace_z[1])

    def _find_place_x(self, state: SimState) -> float:
        tgt = self.target
        occupied = []
        for i in range(state.n_bottles):
            if i == tgt:
                continue
            x = state.bottle_pose(i)[0]
            hw = state.specs[i].half_width
            occupied.append((x - hw, x + hw))
        width = state.specs[tgt].width + 0.10
        spot = find_free_spot(occupied, width)
        return spot if spot is not None else 0.25

    # -- rate-limited command toward the waypoint ---------------------------
    def step_command(self, state: SimState) -> GripperCommand:
        wp = self.expert_action(state, self.phase)
        dt = self.cfg.world.control_dt
        lin = self.e.lin_speed * dt
        ang = self.e.ang_speed * dt
        if self.phase == Phase.PLACE and self.place_z_hold is None:
            lin_z = self.e.place_lower_speed * dt
        else:
            lin_z = lin
        ap_step = self.cfg.gripper.aperture_rate * dt
        c = self.cmd
        c[0] += np.clip(wp.x - c[0], -lin, lin)
        c[1] += np.clip(wp.z - c[1], -lin_z, lin_z)
        c[2] += np.clip(_wrap(wp.theta - c[2]), -ang, ang)
        c[3] += np.clip(wp.aperture - c[3], -ap_step, ap_step)
        if self.phase == Phase.REORIENT and state.table_normal_force(self.target) < self.e.reorient_min_force:
            # do not keep sweeping while contact is lost; let z re-engage first
            c[2] += np.clip(_wrap(state.gripper_pose[2] - c[2]), -ang, ang)
        ws = self.world
        return ws.clamp_command(float(c[0]), float(c[1]), float(c[2]), float(c[3]))


def run_episode(
    seed: int,
    variant_set: str,
    world: World | None = None,
    record_frames: bool = True,
    max_ticks: int = 2500,
) -> tuple[Episode | None, StageStatus, list[SimState], dict]:
    """Roll one scripted episode at the control rate.

    Returns (episode, stage, trajectory, info); episode is None when frames
    are not recorded.  Failed episodes (timeout / non-finite state) come back
    flagged excluded with the failure recorded.
    """
    world = world or World()
    state = world.reset(seed, variant_set)
    noise_rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, 0x5E4501]))
    )
    driver = TickDriver(world, state, noise_rng=noise_rng, record_frames=record_frames)
    ctl = ExpertController(world, state)
    failure = None
    try:
        while not ctl.done and driver.tick < max_ticks:
            cmd = ctl.step_command(driver.state)
            driver.advance(cmd, phase=int(ctl.phase))
            ctl.advance_phase(driver.state, ctl.phase)
        if driver.tick >= max_ticks:
            failure = "max_ticks"
    except Timeout as exc:
        failure = f"timeout:{exc}"
    except NonFiniteState as exc:
        failure = f"non_finite:{exc}"

    trajectory = driver.tick_states
    stage = check_stage(trajectory, world.cfg.stages)
    success = stage.place and failure is None
    episode = None
    if record_frames and driver.tick > 0:
        episode = driver.to_episode(
            seed=seed,
            source="expert",
            stage=stage,
            excluded=not success,
            failure_reason=failure,
        )
    info = {"failure": failure, "ticks": driver.tick, "final_phase": ctl.phase.name}
    return episode, stage, trajectory, info
