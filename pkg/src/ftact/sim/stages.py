"""Task-stage detection (pick / press / place) and observational phase labels.

Stage flags latch once their condition has been met anywhere in the
trajectory, so every flag is monotone under trajectory extension and the
cumulative ordering place => press => pick holds by construction.  The
numeric thresholds are artifact choices (see docs/task.md); the source
experiments only name the stages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .. import FtactError
from ..config import StageConfig
from .world import SimState


class EmptyTrajectory(FtactError):
    pass


class Phase(IntEnum):
    APPROACH = 0
    GRASP = 1
    LIFT = 2
    MOVE_TO_EDGE = 3
    PRESS = 4
    REORIENT = 5
    MOVE_TO_SPOT = 6
    PLACE = 7
    RELEASE = 8
    RETREAT = 9
    UNKNOWN = 255


# phase groups used by the force/torque signal analysis
FREE_PHASES = frozenset(
    {Phase.APPROACH, Phase.GRASP, Phase.LIFT, Phase.MOVE_TO_EDGE, Phase.MOVE_TO_SPOT}
)
PRESS_PHASES = frozenset({Phase.PRESS, Phase.REORIENT})
PLACE_PHASES = frozenset({Phase.PLACE, Phase.RELEASE})


@dataclass(frozen=True)
class StageStatus:
    pick: bool
    press: bool
    place: bool

    def __post_init__(self) -> None:
        if self.place and not self.press:
            raise FtactError("place implies press")
        if self.press and not self.pick:
            raise FtactError("press implies pick")

    def as_tuple(self) -> tuple[bool, bool, bool]:
        return (self.pick, self.press, self.place)


def _wrap(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))


def check_stage(trajectory: list[SimState], cfg: StageConfig | None = None) -> StageStatus:
    """Cumulative stage flags for the lying bottle over a state trajectory."""
    if not trajectory:
        raise EmptyTrajectory("stage check needs at least one state")
    cfg = cfg or StageConfig()
    target = trajectory[0].lying_index
    table_h = None  # inferred lazily from params is overkill; use settle geometry instead

    pick = press = place = False
    lift_since: float | None = None
    press_since: float | None = None
    press_contact_ok = False
    angle_ok = False
    place_since: float | None = None

    for st in trajectory:
        t = st.time
        grasped = st.grasp_index == target
        x, z, th = st.bottle_pose(target)
        vx, vz, w = st.bottle_vel(target)
        theta = _wrap(th)
        bottom = st.bottle_bottom(target)
        if table_h is None:
            table_h = float(st._params[2])

        # pick: grasped and held clear of the table
        if grasped and bottom >= table_h + cfg.lift_height:
            if lift_since is None:
                lift_since = t
            elif t - lift_since >= cfg.lift_hold:
                pick = True
        else:
            lift_since = None

        # press: sustained table contact force while grasped, plus the
        # reorientation actually happening (|theta| pulled under the cutoff)
        if grasped and st.table_normal_force(target) >= cfg.press_force:
            if press_since is None:
                press_since = t
            elif t - press_since >= cfg.press_hold:
                press_contact_ok = True
        else:
            press_since = None
        if grasped and press_contact_ok and abs(theta) < cfg.press_angle:
            angle_ok = True
        if pick and press_contact_ok and angle_ok:
            press = True

        # place: released, upright, and still for the hold duration
        speed = math.sqrt(vx * vx + vz * vz)
        if (not grasped) and abs(theta) < cfg.place_angle and speed < cfg.place_speed and press:
            if place_since is None:
                place_since = t
            elif t - place_since >= cfg.place_hold:
                place = True
        else:
            place_since = None

    return StageStatus(pick, press and pick, place and press and pick)


def annotate_phases(trajectory: list[SimState], cfg: StageConfig | None = None) -> np.ndarray:
    """Observational phase labels for trajectories without scripted phases.

    Used for teleoperated episodes and policy rollouts; the expert records
    its own ground-truth phases instead.
    """
    if not trajectory:
        raise EmptyTrajectory("phase annotation needs at least one state")
    cfg = cfg or StageConfig()
    target = trajectory[0].lying_index
    n = len(trajectory)
    labels = np.full(n, int(Phase.UNKNOWN), dtype=np.uint8)

    contact_thr = max(1.0, 0.25 * cfg.press_force)
    upright_cut = 0.15
    grasped = np.array([st.grasp_index == target for st in trajectory])
    contact = np.array([st.table_normal_force(target) >= contact_thr for st in trajectory])
    tilted = np.array([abs(_wrap(st.bottle_pose(target)[2])) > upright_cut for st in trajectory])
    times = np.array([st.time for st in trajectory])

    first_grasp = int(np.argmax(grasped)) if grasped.any() else n
    labels[:first_grasp] = int(Phase.APPROACH)
    if first_grasp == n:
        return labels
    labels[first_grasp] = int(Phase.GRASP)

    press_mask = grasped & contact & tilted
    touch_mask = grasped & contact & ~tilted
    released = ~grasped.copy()
    released[:first_grasp] = False
    first_release = int(np.argmax(released)) if released.any() else n

    p_idx = np.flatnonzero(press_mask)
    t0 = int(p_idx[0]) if p_idx.size else None
    t1 = int(p_idx[-1]) if p_idx.size else None

    for i in range(first_grasp + 1, n):
        if press_mask[i]:
            labels[i] = int(Phase.PRESS)
        elif touch_mask[i]:
            labels[i] = int(Phase.PLACE)
        elif grasped[i]:
            if t0 is None or i < t0:
                labels[i] = int(Phase.LIFT)
            elif t1 is not None and i > t1:
                labels[i] = int(Phase.MOVE_TO_SPOT)
            else:
                labels[i] = int(Phase.REORIENT)  # inside the press span, momentarily unloaded
        else:
            if i == first_release:
                labels[i] = int(Phase.RELEASE)
            elif first_release < n and times[i] - times[first_release] <= 1.0:
                labels[i] = int(Phase.PLACE)
            else:
                labels[i] = int(Phase.RETREAT)
    return labels


def analysis_windows(phases: np.ndarray) -> dict[str, np.ndarray]:
    """Boolean masks (free / press / place) over per-tick phase labels."""
    phases = np.asarray(phases)
    free = np.isin(phases, [int(p) for p in FREE_PHASES])
    press = np.isin(phases, [int(p) for p in PRESS_PHASES])
    place = np.isin(phases, [int(p) for p in PLACE_PHASES])
    return {"free": free, "press": press, "place": place}
