from awml.env.behaviors import (ALL_KINDS, ANIMATE_KINDS, INANIMATE_KINDS, BehaviorSpec,
                                ExternalAgentState, StepContext, behavior_step)
from awml.env.geometry import (ACTIONS, N_ACTIONS, ROTATION, RoomConfig, Zone, action_index, rotate,
                               visible, visible_many)
from awml.env.room import (MIXTURE, NOISE_WORLD, ObsLayout, Observation, Room, WorldSpec, encode,
                           env_step, reset)

__all__ = [
    "ACTIONS", "ALL_KINDS", "ANIMATE_KINDS", "INANIMATE_KINDS", "MIXTURE", "NOISE_WORLD", "N_ACTIONS",
    "ROTATION", "BehaviorSpec", "ExternalAgentState", "ObsLayout", "Observation", "Room", "RoomConfig",
    "StepContext", "WorldSpec", "Zone", "action_index", "behavior_step", "encode", "env_step", "reset",
    "rotate", "visible", "visible_many",
]
