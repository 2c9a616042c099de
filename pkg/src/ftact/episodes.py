"""Episode container: one file per episode, lossless round-trip.

An episode stores the multi-rate sensor streams at their native rates, the
50 Hz action sequence, per-tick phase labels, compact per-tick and per-frame
sim poses (enough to re-render frames on replay), and scenario metadata.
Byte layout: see blocks.py and docs/episode_format.md.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import FtactError, __version__
from .blocks import read_container, write_container

EPISODE_MAGIC = b"FTEP"
EPISODE_VERSION = 1

# canonical block order (sorted) so rewrites are byte-identical
_BLOCK_NAMES = (
    "actions", "grip_px", "grip_qs", "grip_ts", "head_px", "head_qs", "head_ts",
    "joints", "joints_ts", "phases", "tick_qs", "wrench", "wrench_ts",
)


@dataclass
class Episode:
    metadata: dict
    head_ts: np.ndarray
    head_px: np.ndarray
    head_qs: np.ndarray
    grip_ts: np.ndarray
    grip_px: np.ndarray
    grip_qs: np.ndarray
    joints_ts: np.ndarray
    joints: np.ndarray
    wrench_ts: np.ndarray
    wrench: np.ndarray
    actions: np.ndarray
    phases: np.ndarray
    tick_qs: np.ndarray
    path: Path | None = field(default=None, compare=False)

    @property
    def n_ticks(self) -> int:
        return int(self.actions.shape[0])

    @property
    def stage(self) -> tuple[bool, bool, bool]:
        s = self.metadata["stage"]
        return (bool(s["pick"]), bool(s["press"]), bool(s["place"]))

    @property
    def excluded(self) -> bool:
        return bool(self.metadata.get("excluded", False))

    def validate(self) -> None:
        md = self.metadata
        if self.n_ticks < 1:
            raise FtactError("episode has no ticks")
        for name in ("head_ts", "grip_ts", "joints_ts", "wrench_ts"):
            ts = getattr(self, name)
            if ts.ndim != 1 or ts.size == 0:
                raise FtactError(f"{name} must be a non-empty 1-D array")
            if not np.all(np.diff(ts) > 0):
                raise FtactError(f"{name} must be strictly increasing")
        if self.actions.shape != (self.n_ticks, 4):
            raise FtactError(f"actions shape {self.actions.shape} != ({self.n_ticks}, 4)")
        if self.joints.shape[0] != self.joints_ts.shape[0] or self.joints.shape[1] != 4:
            raise FtactError("joints block inconsistent with joints_ts")
        if self.joints_ts.shape[0] != self.n_ticks:
            raise FtactError("joints must run at the control rate (one sample per tick)")
        if self.wrench.shape != (self.wrench_ts.shape[0], 6):
            raise FtactError("wrench block inconsistent with wrench_ts")
        if self.phases.shape[0] != self.n_ticks:
            raise FtactError("phase labels must cover every tick")
        dims = md["dims"]
        if self.head_px.shape != (self.head_ts.shape[0], dims["head_h"], dims["head_w"], 3):
            raise FtactError(f"head frames {self.head_px.shape} do not match declared dims")
        if self.grip_px.shape != (self.grip_ts.shape[0], dims["grip_h"], dims["grip_w"], 3):
            raise FtactError(f"gripper frames {self.grip_px.shape} do not match declared dims")
        n_b = len(md["bottles"])
        if self.tick_qs.shape != (self.n_ticks, 5 + 3 * n_b):
            raise FtactError("tick_qs shape inconsistent with bottle count")
        if self.head_qs.shape != (self.head_ts.shape[0], 4 + 3 * n_b):
            raise FtactError("head_qs shape inconsistent")
        if self.grip_qs.shape != (self.grip_ts.shape[0], 4 + 3 * n_b):
            raise FtactError("grip_qs shape inconsistent")
        for key in ("seed", "variant_set", "source", "stage", "software_version"):
            if key not in md:
                raise FtactError(f"metadata missing '{key}'")


def episode_filename(seed: int, variant_set: str, source: str) -> str:
    return f"ep_{source}_{variant_set}_{seed:010d}.ftep"


def write_episode(ep: Episode, out_dir: str | Path, filename: str | None = None) -> Path:
    ep.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    md = dict(ep.metadata)
    md.setdefault("software_version", __version__)
    name = filename or episode_filename(md["seed"], md["variant_set"], md["source"])
    blocks = [(n, getattr(ep, n)) for n in _BLOCK_NAMES]
    path = write_container(out_dir / name, EPISODE_MAGIC, EPISODE_VERSION, md, blocks)
    ep.path = path
    return path


def read_episode(path: str | Path, mmap: bool = True) -> Episode:
    header, blocks = read_container(path, EPISODE_MAGIC, EPISODE_VERSION, mmap=mmap)
    missing = [n for n in _BLOCK_NAMES if n not in blocks]
    if missing:
        raise FtactError(f"{path}: missing blocks {missing}")
    ep = Episode(metadata=header, path=Path(path), **{n: blocks[n] for n in _BLOCK_NAMES})
    ep.validate()
    return ep


def list_episodes(data_dir: str | Path) -> list[Path]:
    return sorted(Path(data_dir).glob("*.ftep"))
