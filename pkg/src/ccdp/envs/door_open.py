"""Door opening: push the handle in the hidden opening direction.

Three candidate headings (up, slide, pull); a trial is eight motion steps
from the handle. If the mean displacement points within the tolerance cone
of the hidden heading the door opens, otherwise the effector snaps back to
the handle and the trial counts as failed. Five trials per episode.

The observation is the door state alone (closed -1 / open +1): the door
does not move while the direction is wrong, so every decision state during
the search matches the demonstrations and the motion history carries the
direction signal.
"""

from __future__ import annotations

import numpy as np

from .base import EnvSpec, TaskEnv

HEADINGS = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, -1.0]])  # up, slide, pull
ANGLE_TOL_DEG = 30.0
MIN_MEAN_SPEED = 0.25
STEP_GAIN = 0.1
HANDLE = np.zeros(2)
EXPERT_HEADING_JITTER_DEG = 5.0
EXPERT_STEP_JITTER = 0.03


class DoorOpenEnv(TaskEnv):
    spec = EnvSpec(
        task_id="do",
        state_dim=1,
        action_dim=2,
        chunk_len=8,
        apply_len=8,
        history_len=2,
        attempt_steps=8,
        attempt_limit=5,
        feature_mode="action",
        n_regions=3,
    )

    def _draw_hidden(self, rng, demo_index):
        if demo_index is None:
            self._dir_idx = int(rng.integers(0, 3))
        else:
            self._dir_idx = demo_index % 3
        self._heading = HEADINGS[self._dir_idx]
        self._eff = HANDLE.copy()
        self._progress = -1.0

    def observation(self):
        return np.array([self._progress])

    def _initial_observation(self):
        return self.observation()

    def _apply_step(self, action):
        self._eff = np.clip(self._eff + action * STEP_GAIN, -1.0, 1.0)

    def _attempt_verdict(self, attempt_actions, start_obs):
        mean_v = attempt_actions.mean(axis=0)
        speed = np.linalg.norm(mean_v)
        ok = False
        if speed >= MIN_MEAN_SPEED:
            cosang = float(mean_v @ self._heading) / speed
            ok = cosang >= np.cos(np.deg2rad(ANGLE_TOL_DEG))
        if ok:
            self._progress = 1.0
            return "success", None
        self._eff = HANDLE.copy()  # snap back: the failed state repeats
        return "fail", None

    def expert_chunk(self, rng):
        ang = np.deg2rad(rng.normal(0.0, EXPERT_HEADING_JITTER_DEG))
        rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
        heading = rot @ self._heading
        steps = heading[None, :] + rng.normal(0.0, EXPERT_STEP_JITTER, size=(8, 2))
        return np.clip(steps, -1.0, 1.0)

    def terminal_observation(self, chunk, obs):
        # the door state is all that is observable, and a probe chunk alone
        # cannot tell whether it would open
        return np.asarray(obs, dtype=np.float64).copy()

    def decode_region(self, chunk, obs):
        mean_v = np.atleast_2d(chunk).mean(axis=0)
        return int(np.argmax(HEADINGS @ mean_v))

    def hidden_meta(self):
        return {"direction_index": self._dir_idx}

    def artifact_constants(self):
        return {
            "headings": HEADINGS.tolist(),
            "angle_tolerance_deg": ANGLE_TOL_DEG,
            "min_mean_speed": MIN_MEAN_SPEED,
            "step_gain": STEP_GAIN,
        }
