from mra.envs.gameset import ENV_KINDS, ROLE_NAMES, GameSet, GameSpec, make_game_set
from mra.envs.particle import (
    ACTION_DIRS, N_ACTIONS, EntityObservation, JointObservation, ParticleEnv, Physics, WorldState,
    entity_width, observe_all,
)
from mra.envs.tabular import TabularMG, coordination_game, matching_pennies, random_game

__all__ = [
    "ACTION_DIRS", "ENV_KINDS", "EntityObservation", "GameSet", "GameSpec", "JointObservation",
    "N_ACTIONS", "ParticleEnv", "Physics", "ROLE_NAMES", "TabularMG", "WorldState",
    "coordination_game", "entity_width", "make_game_set", "matching_pennies", "observe_all",
    "random_game",
]
