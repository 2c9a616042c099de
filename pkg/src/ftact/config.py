"""Configuration for the simulator, sensors, task thresholds, and gripper servo.

All values are SI (meters, kilograms, seconds, newtons, radians).  Defaults
live on the dataclasses; a TOML file with the same nested table names can
override any subset, and CLI flags override the file.  ``config_dump``
renders the effective configuration back as TOML.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import FtactError


class ConfigError(FtactError):
    pass


@dataclass
class WorldConfig:
    """Table geometry, contact model constants, and the physics step."""

    table_height: float = 0.10
    table_edge_x: float = 1.00
    gravity: float = 9.81
    penalty_stiffness: float = 2000.0  # N/m per contact point
    penalty_damping: float = 50.0      # N*s/m per contact point, scaled by (1 - restitution)
    tangent_damping: float = 500.0     # N*s/m viscous friction, clamped to the Coulomb cone
    dt: float = 0.0008                 # fixed physics substep
    substeps_per_tick: int = 25        # 25 * dt = one 50 Hz control period
    # Gripper command workspace; commands outside raise, policy outputs are clamped.
    workspace_x: tuple[float, float] = (0.02, 1.26)
    workspace_z: tuple[float, float] = (0.04, 0.60)

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if self.penalty_stiffness <= 0:
            raise ConfigError(f"penalty_stiffness must be > 0, got {self.penalty_stiffness}")
        if not math.isfinite(self.table_edge_x):
            raise ConfigError("table_edge_x must be finite")

    @property
    def control_dt(self) -> float:
        return self.substeps_per_tick * self.dt

    @property
    def control_hz(self) -> float:
        return 1.0 / self.control_dt


@dataclass
class GripperConfig:
    """Flying-gripper servo: critically damped PD in (x, z, theta), rate-limited jaws."""

    mass: float = 1.2
    inertia: float = 0.02
    kp_lin: float = 1500.0   # N/m; kd derived as 2*sqrt(kp*m_effective) each step
    kp_ang: float = 60.0     # N*m/rad
    aperture_rate: float = 0.30   # m/s jaw speed limit
    max_aperture: float = 0.09
    jaw_radius: float = 0.005    # jaw-tip disc radius used to push non-grasped bottles
    capture_radius: float = 0.035  # jaw center to bottle spine for a latch
    latch_margin: float = 0.002    # latch when aperture <= width + margin while closing
    release_margin: float = 0.010  # unlatch when aperture >= width + margin
    home: tuple[float, float, float, float] = (0.15, 0.42, 0.0, 0.09)  # x, z, theta, aperture


@dataclass
class SensorConfig:
    """Camera geometry, stream rates, and wrench noise."""

    head_hz: float = 10.0
    gripper_hz: float = 30.0
    joints_hz: float = 50.0
    wrench_hz: float = 40.0
    head_height: int = 64
    head_width: int = 128
    grip_height: int = 64
    grip_width: int = 64
    # Head camera: orthographic side view of this world window (meters).
    view_x: tuple[float, float] = (0.0, 1.28)
    view_z: tuple[float, float] = (0.0, 0.64)
    # Gripper camera: square crop centered ahead-and-below along the -45 deg ray.
    grip_cam_offset: float = 0.10      # distance from jaw center to crop center
    grip_cam_scale: float = 0.0032     # m per pixel
    wrench_sigma_force: float = 0.1    # N, in-plane channels only
    wrench_sigma_torque: float = 0.01  # N*m, in-plane channels only

    def __post_init__(self) -> None:
        for name in ("head_hz", "gripper_hz", "joints_hz", "wrench_hz"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.head_width != 2 * self.head_height:
            raise ConfigError("head frame must be 2:1 wide (panorama stand-in)")


@dataclass
class StageConfig:
    """Thresholds for the pick/press/place detectors.

    The source experiments report stage outcomes without quantitative
    criteria, so these cutoffs are artifact choices; see docs/task.md.
    """

    lift_height: float = 0.02     # bottle lowest point above the table
    lift_hold: float = 0.2       # seconds
    press_force: float = 4.0     # N sustained table-contact normal force
    press_hold: float = 0.3      # seconds
    press_angle: float = math.pi / 4
    place_angle: float = 0.1     # rad from upright
    place_speed: float = 0.01    # m/s
    place_hold: float = 1.0      # seconds


@dataclass
class ExpertConfig:
    """Waypoint and contact parameters for the scripted demonstrator."""

    lin_speed: float = 0.15      # m/s command ramp limit
    ang_speed: float = 1.0       # rad/s
    approach_height: float = 0.12
    grasp_frac: float = 0.55     # grasp point along the axis toward the cap, in half-heights
    lift_height: float = 0.16
    press_x: float = 0.85        # press site near the table edge
    press_depth: float = 0.010   # commanded penetration of the bottle base
    press_force: float = 5.0     # N required before the reorient sweep starts
    press_settle: float = 0.7    # seconds of sustained force before sweeping
    reorient_rate: float = 0.5   # rad/s sweep, paused whenever contact force drops
    reorient_min_force: float = 3.0
    place_lower_speed: float = 0.10
    touch_force: float = 3.0     # N touchdown detection when placing
    settle_time: float = 0.9
    retreat_hold: float = 3.4    # keep recording this long after release
    phase_timeout: float = 10.0
    pause: float = 1.8           # dwell between phases, keeps episodes near 30 s
    scan_pause: float = 4.5      # initial look-at-the-scene dwell


@dataclass
class SimConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    gripper: GripperConfig = field(default_factory=GripperConfig)
    sensors: SensorConfig = field(default_factory=SensorConfig)
    stages: StageConfig = field(default_factory=StageConfig)
    expert: ExpertConfig = field(default_factory=ExpertConfig)
    bottles_file: str | None = None  # None -> packaged registry


_SECTIONS = {
    "world": WorldConfig,
    "gripper": GripperConfig,
    "sensors": SensorConfig,
    "stages": StageConfig,
    "expert": ExpertConfig,
}


def _apply_overrides(obj: Any, table: dict[str, Any], context: str) -> None:
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in table.items():
        if key not in names:
            raise ConfigError(f"unknown key '{key}' in [{context}]")
        current = getattr(obj, key)
        if isinstance(current, tuple):
            value = tuple(value)
        object.__setattr__(obj, key, value)


def load_config(path: str | Path | None = None) -> SimConfig:
    """Build a SimConfig from defaults, applying overrides from a TOML file."""
    cfg = SimConfig()
    if path is None:
        return cfg
    raw = Path(path).read_bytes()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for section, table in data.items():
        if section == "bottles_file":
            cfg.bottles_file = str(table)
            continue
        if section == "bottle":
            continue  # bottle registry tables are read by sim.bottles
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        _apply_overrides(getattr(cfg, section), table, section)
    cfg.world.__post_init__()
    cfg.sensors.__post_init__()
    return cfg


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigError(f"cannot render {type(value)} as TOML")


def config_dump(cfg: SimConfig) -> str:
    """Render the effective configuration as TOML (round-trips through load_config)."""
    lines: list[str] = []
    if cfg.bottles_file is not None:
        lines.append(f"bottles_file = {_toml_value(cfg.bottles_file)}")
        lines.append("")
    for section in _SECTIONS:
        lines.append(f"[{section}]")
        for f in dataclasses.fields(getattr(cfg, section)):
            lines.append(f"{f.name} = {_toml_value(getattr(getattr(cfg, section), f.name))}")
        lines.append("")
    return "\n".join(lines)
