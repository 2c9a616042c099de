"""Bottle spec registry with trained/untrained scenario pools."""

from __future__ import annotations

import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .. import FtactError

POOLS = ("trained", "untrained")


@dataclass(frozen=True)
class BottleSpec:
    id: str
    pool: str
    height: float
    width: float
    mass: float
    friction_mu: float
    restitution: float
    color_id: int

    def validate(self) -> None:
        if not (self.height > self.width > 0):
            raise FtactError(f"bottle {self.id}: need height > width > 0")
        if self.mass <= 0:
            raise FtactError(f"bottle {self.id}: mass must be > 0")
        if self.friction_mu < 0:
            raise FtactError(f"bottle {self.id}: friction_mu must be >= 0")
        if not (0 <= self.restitution < 1):
            raise FtactError(f"bottle {self.id}: restitution must be in [0, 1)")
        if self.pool not in POOLS:
            raise FtactError(f"bottle {self.id}: unknown pool '{self.pool}'")

    @property
    def half_height(self) -> float:
        return self.height / 2

    @property
    def half_width(self) -> float:
        return self.width / 2

    @property
    def inertia(self) -> float:
        # Planar rectangle about its center.
        return self.mass * (self.height**2 + self.width**2) / 12.0


class BottleRegistry:
    def __init__(self, specs: list[BottleSpec]):
        if len(specs) < 10:
            raise FtactError(f"registry needs at least 10 bottle specs, got {len(specs)}")
        ids = [s.id for s in specs]
        if len(set(ids)) != len(ids):
            raise FtactError("duplicate bottle ids in registry")
        for s in specs:
            s.validate()
        self.specs = list(specs)
        self._by_id = {s.id: s for s in specs}

    def __len__(self) -> int:
        return len(self.specs)

    def get(self, spec_id: str) -> BottleSpec:
        try:
            return self._by_id[spec_id]
        except KeyError:
            raise FtactError(f"unknown bottle spec '{spec_id}'") from None

    def pool(self, name: str) -> list[BottleSpec]:
        if name not in POOLS:
            raise FtactError(f"unknown pool '{name}'")
        return [s for s in self.specs if s.pool == name]


def load_registry(path: str | Path | None = None) -> BottleRegistry:
    """Load the registry from a TOML file (packaged default when path is None)."""
    if path is None:
        raw = resources.files("ftact.data").joinpath("bottles.toml").read_bytes()
    else:
        raw = Path(path).read_bytes()
    data = tomllib.loads(raw.decode("utf-8"))
    entries = data.get("bottle")
    if not entries:
        raise FtactError("registry file has no [[bottle]] tables")
    specs = [BottleSpec(**entry) for entry in entries]
    return BottleRegistry(specs)
