"""Scripted 2-D task environments with oracle experts and failure detectors."""

from __future__ import annotations

from .base import Demonstration, EnvSpec, FailureEvent, TaskEnv, TASKS
from .bartender import BartenderEnv
from .button_press import ButtonPressEnv
from .door_open import DoorOpenEnv
from .object_move import ObjectMoveEnv
from .packing import PackingEnv

_ENV_CLASSES = {
    "bp": ButtonPressEnv,
    "do": DoorOpenEnv,
    "om": ObjectMoveEnv,
    "op": PackingEnv,
    "bt": BartenderEnv,
}


def make_env(task: str, seed: int, demo_index: int | None = None) -> TaskEnv:
    try:
        cls = _ENV_CLASSES[task]
    except KeyError:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}") from None
    return cls(seed, demo_index=demo_index)


def env_spec(task: str) -> EnvSpec:
    return _ENV_CLASSES[task].spec


__all__ = [
    "Demonstration", "EnvSpec", "FailureEvent", "TaskEnv", "TASKS",
    "make_env", "env_spec",
]
