"""Button pressing: find a hidden button among nine candidate spots.

The button sits at one of nine grid centers (hidden); each step is one press
at a 2-D target point, executed press-and-retract so the observation never
changes. A press within PRESS_RADIUS of the button ends the episode.
"""

from __future__ import annotations

import numpy as np

from .base import Demonstration, EnvSpec, TaskEnv

GRID = np.array([[x, y] for y in (-2 / 3, 0.0, 2 / 3) for x in (-2 / 3, 0.0, 2 / 3)])
PRESS_RADIUS = 0.08
EXPERT_JITTER = 0.02
HOME = np.zeros(2)


class ButtonPressEnv(TaskEnv):
    spec = EnvSpec(
        task_id="bp",
        state_dim=2,
        action_dim=2,
        chunk_len=1,
        apply_len=1,
        history_len=0,
        attempt_steps=1,
        attempt_limit=30,
        feature_mode="action",
        n_regions=9,
    )

    def _draw_hidden(self, rng, demo_index):
        if demo_index is None:
            self._button_idx = int(rng.integers(0, 9))
        else:
            # balanced cycle keeps the demo button marginal exactly uniform
            self._button_idx = demo_index % 9
        self._button = GRID[self._button_idx]

    def observation(self):
        return HOME.copy()

    def _initial_observation(self):
        return HOME.copy()

    def _apply_step(self, action):
        self._last_press = action

    def _attempt_verdict(self, attempt_actions, start_obs):
        press = attempt_actions[0]
        if np.linalg.norm(press - self._button) <= PRESS_RADIUS:
            return "success", None
        return "fail", None

    def expert_chunk(self, rng):
        press = self._button + rng.normal(0.0, EXPERT_JITTER, size=2)
        return press[None, :]

    def terminal_observation(self, chunk, obs):
        # press-and-retract: the effector is back home afterwards
        return np.asarray(obs, dtype=np.float64).copy()

    def decode_region(self, chunk, obs):
        press = np.atleast_2d(chunk)[0]
        ix = int(np.clip(np.digitize(press[0], (-1 / 3, 1 / 3)), 0, 2))
        iy = int(np.clip(np.digitize(press[1], (-1 / 3, 1 / 3)), 0, 2))
        return iy * 3 + ix

    def hidden_meta(self):
        return {"button_index": self._button_idx, "button": self._button.tolist()}

    def artifact_constants(self):
        return {
            "press_radius": PRESS_RADIUS,
            "expert_press_jitter": EXPERT_JITTER,
            "grid_centers": GRID.tolist(),
        }
