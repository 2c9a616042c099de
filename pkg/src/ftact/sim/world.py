"""Planar pick-and-reorient world: reset, stepping, and the wrist wrench.

Coordinates: x along the table, z up; rotations are about the +y axis (into
the scene), so a bottle's cap axis is (sin(theta), cos(theta)) and theta = 0
is upright, theta = +pi/2 lies cap toward +x.  All dynamics run in float64
through the kernel backend; a SimState is an immutable snapshot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import FtactError, kernels
from ..config import SimConfig
from .bottles import BottleRegistry, BottleSpec, load_registry


class UnknownVariantSet(FtactError):
    pass


class PlacementInfeasible(FtactError):
    pass


class NonFiniteState(FtactError):
    pass


class WorkspaceViolation(FtactError):
    pass


POOL_SALT = {"trained": 1, "untrained": 2}
# Scenario layout constants (meters). The lying-bottle spawn ranges are
# deliberately disjoint between pools; the corridor near the table edge is
# kept free of distractors so the press maneuver has room.
LYING_X_RANGE = {"trained": (0.35, 0.55), "untrained": (0.56, 0.70)}
DISTRACTOR_X_MIN = 0.06
PRESS_CORRIDOR_MARGIN = 0.24
PLACEMENT_ATTEMPTS = 100
_CLEAR = 0.025  # minimum clearance between placed bottle intervals


@dataclass(frozen=True)
class Wrench:
    """6-axis wrist reading; out-of-plane channels are identically zero."""

    force: np.ndarray   # (3,) fx, fy, fz
    torque: np.ndarray  # (3,) tx, ty, tz
    timestamp: float

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])


@dataclass(frozen=True)
class GripperCommand:
    """Absolute-position target for the flying gripper."""

    x: float
    z: float
    theta: float
    aperture: float
    mode: str = field(default="absolute-position", compare=False)

    def to_vec(self) -> np.ndarray:
        return np.array([self.x, self.z, self.theta, self.aperture], dtype=np.float64)


@dataclass(frozen=True)
class BottleState:
    spec_id: str
    pose: tuple[float, float, float]
    vel: tuple[float, float, float]
    grasped: bool


class SimState:
    """Immutable snapshot: raw vectors plus typed accessors."""

    __slots__ = ("vec", "contacts", "specs", "spec_ids", "lying_index", "variant_set", "_params")

    def __init__(self, vec, contacts, specs, lying_index, variant_set, params):
        self.vec = vec
        self.contacts = contacts
        self.specs: tuple[BottleSpec, ...] = specs
        self.spec_ids = tuple(s.id for s in specs)
        self.lying_index = lying_index
        self.variant_set = variant_set
        self._params = params

    # -- scalar accessors ------------------------------------------------
    @property
    def time(self) -> float:
        return float(self.vec[0])

    @property
    def gripper_pose(self) -> tuple[float, float, float]:
        return (float(self.vec[1]), float(self.vec[2]), float(self.vec[3]))

    @property
    def gripper_vel(self) -> tuple[float, float, float]:
        return (float(self.vec[4]), float(self.vec[5]), float(self.vec[6]))

    @property
    def aperture(self) -> float:
        return float(self.vec[7])

    @property
    def grasp_index(self) -> int:
        return int(self.vec[8])

    @property
    def raw_wrench(self) -> tuple[float, float, float]:
        """Noise-free in-plane wrench (fx, fz, ty) from the last substep."""
        return (float(self.vec[12]), float(self.vec[13]), float(self.vec[14]))

    @property
    def n_bottles(self) -> int:
        return len(self.specs)

    def bottle_pose(self, i: int) -> tuple[float, float, float]:
        o = kernels.STATE_FIXED + kernels.PER_BOTTLE * i
        return (float(self.vec[o]), float(self.vec[o + 1]), float(self.vec[o + 2]))

    def bottle_vel(self, i: int) -> tuple[float, float, float]:
        o = kernels.STATE_FIXED + kernels.PER_BOTTLE * i
        return (float(self.vec[o + 3]), float(self.vec[o + 4]), float(self.vec[o + 5]))

    @property
    def bottles(self) -> list[BottleState]:
        g = self.grasp_index
        return [
            BottleState(self.spec_ids[i], self.bottle_pose(i), self.bottle_vel(i), i == g)
            for i in range(self.n_bottles)
        ]

    @property
    def joints(self) -> np.ndarray:
        """Proprioception vector (x, z, theta, aperture)."""
        return np.array([self.vec[1], self.vec[2], self.vec[3], self.vec[7]], dtype=np.float64)

    def bottle_corners(self, i: int) -> np.ndarray:
        """World positions of the bottle rectangle's four corners, (4, 2)."""
        x, z, th = self.bottle_pose(i)
        hw = self.specs[i].half_width
        hh = self.specs[i].half_height
        c, s = math.cos(th), math.sin(th)
        out = np.empty((4, 2))
        for n, (u, v) in enumerate(((-hw, -hh), (-hw, hh), (hw, -hh), (hw, hh))):
            out[n, 0] = x + u * c + v * s
            out[n, 1] = z - u * s + v * c
        return out

    def bottle_bottom(self, i: int) -> float:
        return float(self.bottle_corners(i)[:, 1].min())

    def table_normal_force(self, i: int) -> float:
        """Summed normal force between bottle i and the table this substep."""
        if self.contacts.shape[0] == 0:
            return 0.0
        rows = self.contacts
        mask = (rows[:, 0] == i) & (rows[:, 1] == kernels.pyref.BODY_TABLE)
        return float(rows[mask, 7].sum())

    def copy(self) -> "SimState":
        return SimState(
            self.vec.copy(), self.contacts.copy(), self.specs,
            self.lying_index, self.variant_set, self._params,
        )


def rest_height(
    spec: BottleSpec, table_height: float, stiffness: float, lying: bool, gravity: float = 9.81
) -> float:
    """Analytic settle height of the bottle center (two corners share the load)."""
    half = spec.half_width if lying else spec.half_height
    return table_height + half - spec.mass * gravity / (2.0 * stiffness)


def _segment_points(state: SimState, i: int) -> tuple[np.ndarray, np.ndarray, float]:
    spec = state.specs[i]
    x, z, th = state.bottle_pose(i)
    ax = np.array([math.sin(th), math.cos(th)])
    span = max(spec.half_height - spec.half_width, 0.0)
    c = np.array([x, z])
    return c - span * ax, c + span * ax, spec.half_width


def mechanical_energy(state: SimState, cfg: SimConfig) -> float:
    """Discrete mechanical energy of the bottles.

    Kinetic + gravitational + contact-spring terms, where each engaged
    penalty spring contributes ``k*p^2/2 - (dt/2)*k*p*pdot``: the quadratic
    form that the velocity-first symplectic Euler update conserves exactly
    for a linear spring.  At rest it equals the continuous energy.  Contact
    geometry is recomputed from the state here, independently of the kernel.
    """
    w = cfg.world
    k = w.penalty_stiffness
    dt = w.dt
    total = 0.0
    n = state.n_bottles
    for i, spec in enumerate(state.specs):
        vx, vz, om = state.bottle_vel(i)
        x, z, th = state.bottle_pose(i)
        total += 0.5 * spec.mass * (vx * vx + vz * vz)
        total += 0.5 * spec.inertia * om * om
        total += spec.mass * w.gravity * z
        # corner springs against the table / ground plane
        for cx, cz in state.bottle_corners(i):
            plane = w.table_height if cx <= w.table_edge_x else 0.0
            pen = plane - cz
            if pen <= 0.0:
                continue
            rx, rz = cx - x, cz - z
            vpz = vz - om * rx
            pdot = -vpz
            total += 0.5 * k * pen * pen - 0.5 * dt * k * pen * pdot
    # capsule pair springs
    for i in range(n):
        a0, a1, ri = _segment_points(state, i)
        for j in range(i + 1, n):
            b0, b1, rj = _segment_points(state, j)
            from ..kernels.pyref import _seg_closest

            px, pz, qx, qz = _seg_closest(a0[0], a0[1], a1[0], a1[1], b0[0], b0[1], b1[0], b1[1])
            dist = math.hypot(px - qx, pz - qz)
            pen = ri + rj - dist
            if pen <= 0.0 or dist <= 1e-12:
                continue
            nx, nz = (px - qx) / dist, (pz - qz) / dist
            mx, mz = 0.5 * (px + qx), 0.5 * (pz + qz)
            xi, zi, thi = state.bottle_pose(i)
            xj, zj, thj = state.bottle_pose(j)
            vxi, vzi, omi = state.bottle_vel(i)
            vxj, vzj, omj = state.bottle_vel(j)
            vix = vxi + omi * (mz - zi)
            viz = vzi - omi * (mx - xi)
            vjx = vxj + omj * (mz - zj)
            vjz = vzj - omj * (mx - xj)
            pdot = -((vix - vjx) * nx + (viz - vjz) * nz)
            total += 0.5 * k * pen * pen - 0.5 * dt * k * pen * pdot
    return total


def find_free_spot(
    occupied: list[tuple[float, float]], width: float, lo: float = 0.10, hi: float = 0.74
) -> float | None:
    """Leftmost x in [lo, hi] where [x - width/2, x + width/2] avoids all intervals."""
    half = width / 2.0
    x = lo
    while x <= hi:
        left, right = x - half, x + half
        if all(right <= a or left >= b for a, b in occupied):
            return x
        x = round(x + 0.01, 6)
    return None


class World:
    """Owns the configuration and registry; states flow through pure steps."""

    def __init__(self, cfg: SimConfig | None = None, registry: BottleRegistry | None = None):
        self.cfg = cfg or SimConfig()
        self.registry = registry or load_registry(self.cfg.bottles_file)
        self._contact_buf = np.zeros((kernels.MAX_CONTACTS, kernels.CONTACT_COLS))

    # -- construction ------------------------------------------------------
    def _params_for(self, specs: tuple[BottleSpec, ...]) -> np.ndarray:
        w, g = self.cfg.world, self.cfg.gripper
        p = np.zeros(kernels.params_size(len(specs)))
        p[0] = w.dt
        p[1] = w.gravity
        p[2] = w.table_height
        p[3] = w.table_edge_x
        p[4] = w.penalty_stiffness
        p[5] = w.penalty_damping
        p[6] = w.tangent_damping
        p[7] = g.kp_lin
        p[8] = g.kp_ang
        p[9] = g.mass
        p[10] = g.inertia
        p[11] = g.aperture_rate
        p[12] = g.capture_radius
        p[13] = g.latch_margin
        p[14] = g.release_margin
        p[15] = g.max_aperture
        p[16] = g.jaw_radius
        p[17] = float(len(specs))
        for i, s in enumerate(specs):
            o = kernels.PARAMS_FIXED + kernels.PER_BOTTLE * i
            p[o] = s.half_height
            p[o + 1] = s.half_width
            p[o + 2] = s.mass
            p[o + 3] = s.inertia
            p[o + 4] = s.friction_mu
            p[o + 5] = 1.0 - s.restitution
        return p

    def make_state(
        self,
        bottles: list[tuple[BottleSpec, tuple[float, float, float]]],
        gripper_pose: tuple[float, float, float] | None = None,
        aperture: float | None = None,
        lying_index: int = 0,
        variant_set: str = "trained",
        grasp_index: int = -1,
        bottle_vels: list[tuple[float, float, float]] | None = None,
    ) -> SimState:
        """Direct state constructor for tests and custom scenarios."""
        specs = tuple(s for s, _ in bottles)
        vec = np.zeros(kernels.state_size(len(specs)))
        gq = gripper_pose if gripper_pose is not None else self.cfg.gripper.home[:3]
        vec[1:4] = gq
        vec[7] = self.cfg.gripper.max_aperture if aperture is None else aperture
        vec[8] = float(grasp_index)
        for i, (spec, pose) in enumerate(bottles):
            o = kernels.STATE_FIXED + kernels.PER_BOTTLE * i
            vec[o : o + 3] = pose
            if bottle_vels is not None:
                vec[o + 3 : o + 6] = bottle_vels[i]
        if grasp_index >= 0:
            # record the bottle pose in the gripper frame so the latch holds it
            bx, bz, bth = bottles[grasp_index][1]
            c, s = math.cos(gq[2]), math.sin(gq[2])
            dxw, dzw = bx - gq[0], bz - gq[1]
            vec[9] = c * dxw - s * dzw
            vec[10] = s * dxw + c * dzw
            vec[11] = bth - gq[2]
            if aperture is None:
                vec[7] = 2.0 * specs[grasp_index].half_width
        return SimState(
            vec, np.zeros((0, kernels.CONTACT_COLS)), specs,
            lying_index, variant_set, self._params_for(specs),
        )

    def reset(self, seed: int, variant_set: str) -> SimState:
        """Deterministic scenario: four bottles, exactly one lying, pool-disjoint draws."""
        if variant_set not in POOL_SALT:
            raise UnknownVariantSet(f"unknown variant set '{variant_set}'")
        pool = self.registry.pool(variant_set)
        if not pool:
            raise UnknownVariantSet(f"variant set '{variant_set}' has no registered bottles")
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, POOL_SALT[variant_set]]))
        )
        lying = pool[int(rng.integers(len(pool)))]
        distractors = [pool[int(rng.integers(len(pool)))] for _ in range(3)]

        w = self.cfg.world
        lo, hi = LYING_X_RANGE[variant_set]
        hi = min(hi, w.table_edge_x - 0.30)
        if hi < lo:
            hi = lo
        d_hi = min(0.76, w.table_edge_x - PRESS_CORRIDOR_MARGIN)

        def _clear_of(iv, others):
            return all(iv[1] <= a or iv[0] >= b for a, b in others)

        placed = False
        for _ in range(PLACEMENT_ATTEMPTS):
            if d_hi - DISTRACTOR_X_MIN <= 0.3:
                break
            lying_x = float(rng.uniform(lo, hi))
            taken = [(lying_x - lying.half_height - _CLEAR, lying_x + lying.half_height + _CLEAR)]
            xs = []
            for d in distractors:
                for _try in range(PLACEMENT_ATTEMPTS):
                    x = float(rng.uniform(DISTRACTOR_X_MIN, d_hi))
                    iv = (x - d.half_width - _CLEAR, x + d.half_width + _CLEAR)
                    if _clear_of(iv, taken):
                        taken.append(iv)
                        xs.append(x)
                        break
                else:
                    break
            if len(xs) == 3:
                placed = True
                break
        if not placed:
            raise PlacementInfeasible(
                f"no collision-free layout after {PLACEMENT_ATTEMPTS} attempts"
            )

        k = w.penalty_stiffness
        bottles = [
            (lying, (lying_x, rest_height(lying, w.table_height, k, True, w.gravity), math.pi / 2))
        ]
        for x, d in zip(xs, distractors):
            bottles.append((d, (x, rest_height(d, w.table_height, k, False, w.gravity), 0.0)))
        # shuffle so the lying bottle is not always index 0
        order = rng.permutation(4)
        bottles = [bottles[i] for i in order]
        lying_index = int(np.where(order == 0)[0][0])
        return self.make_state(bottles, lying_index=lying_index, variant_set=variant_set)

    # -- stepping ----------------------------------------------------------
    def check_command(self, cmd: GripperCommand) -> None:
        w, g = self.cfg.world, self.cfg.gripper
        if not (w.workspace_x[0] <= cmd.x <= w.workspace_x[1]):
            raise WorkspaceViolation(f"command x={cmd.x:.3f} outside {w.workspace_x}")
        if not (w.workspace_z[0] <= cmd.z <= w.workspace_z[1]):
            raise WorkspaceViolation(f"command z={cmd.z:.3f} outside {w.workspace_z}")
        if not (-math.pi <= cmd.theta <= math.pi):
            raise WorkspaceViolation(f"command theta={cmd.theta:.3f} outside [-pi, pi]")
        if not (0.0 <= cmd.aperture <= g.max_aperture):
            raise WorkspaceViolation(f"command aperture={cmd.aperture:.3f} outside [0, {g.max_aperture}]")

    def clamp_command(self, x: float, z: float, theta: float, aperture: float) -> GripperCommand:
        """Clamp raw (e.g. policy) outputs into the declared workspace."""
        w, g = self.cfg.world, self.cfg.gripper
        return GripperCommand(
            float(min(max(x, w.workspace_x[0]), w.workspace_x[1])),
            float(min(max(z, w.workspace_z[0]), w.workspace_z[1])),
            float(min(max(theta, -math.pi), math.pi)),
            float(min(max(aperture, 0.0), g.max_aperture)),
        )

    def step(self, state: SimState, cmd: GripperCommand, dt: float) -> SimState:
        if dt != self.cfg.world.dt:
            raise FtactError(f"step dt {dt} != configured physics dt {self.cfg.world.dt}")
        self.check_command(cmd)
        out = np.empty_like(state.vec)
        nc = kernels.step_world(state.vec, state._params, cmd.to_vec(), out, self._contact_buf)
        if not np.isfinite(out).all():
            raise NonFiniteState(f"non-finite state at t={state.time:.4f}")
        return SimState(
            out, self._contact_buf[:nc].copy(), state.specs,
            state.lying_index, state.variant_set, state._params,
        )

    def step_tick(self, state: SimState, cmd: GripperCommand) -> SimState:
        """One 50 Hz control period = substeps_per_tick physics substeps."""
        for _ in range(self.cfg.world.substeps_per_tick):
            state = self.step(state, cmd, self.cfg.world.dt)
        return state

    # -- sensing -----------------------------------------------------------
    def wrist_wrench(
        self, state: SimState, noise: bool = False, rng: np.random.Generator | None = None
    ) -> Wrench:
        """Reaction transmitted through the grasp; zeros when nothing is held.

        Noise is zero-mean Gaussian on the in-plane channels only, so the
        out-of-plane components stay exactly zero.
        """
        fx, fz, ty = state.raw_wrench
        if noise:
            if rng is None:
                raise FtactError("wrench noise requested without an rng")
            s = self.cfg.sensors
            fx += s.wrench_sigma_force * rng.standard_normal()
            fz += s.wrench_sigma_force * rng.standard_normal()
            ty += s.wrench_sigma_torque * rng.standard_normal()
        return Wrench(
            force=np.array([fx, 0.0, fz]),
            torque=np.array([0.0, ty, 0.0]),
            timestamp=state.time,
        )
