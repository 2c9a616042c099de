from .bottles import BottleSpec, BottleRegistry, load_registry
from .world import (
    GripperCommand,
    NonFiniteState,
    PlacementInfeasible,
    SimState,
    UnknownVariantSet,
    World,
    Wrench,
)
from .stages import EmptyTrajectory, StageStatus, annotate_phases, check_stage

__all__ = [
    "BottleSpec",
    "BottleRegistry",
    "load_registry",
    "GripperCommand",
    "NonFiniteState",
    "PlacementInfeasible",
    "SimState",
    "UnknownVariantSet",
    "World",
    "Wrench",
    "EmptyTrajectory",
    "StageStatus",
    "annotate_phases",
    "check_stage",
]
