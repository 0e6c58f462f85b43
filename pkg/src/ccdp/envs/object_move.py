"""Object manipulation: move an object of hidden mass class to the target.

Actions carry a 2-D velocity plus a 3-way primitive block (single, bimanual,
push) decoded by argmax. A primitive moves the object only if it is strong
enough for the hidden mass; an attempt decoded to an insufficient primitive
fails with that label. The implicit objective penalizes over-qualified
primitives (anything stronger than the weakest one that works).
"""

from __future__ import annotations

import numpy as np

from .base import EnvSpec, TaskEnv

PRIMITIVES = ("single", "bimanual", "push")
TARGET = np.array([0.8, 0.8])
TARGET_RADIUS = 0.12
STEP_GAIN = 0.12
EXPERT_SPEED = 0.9
EXPERT_STEP_JITTER = 0.02
SPAWN_LO, SPAWN_HI = -0.8, -0.2
# demo-time mass frequencies (light/medium/heavy); tests draw uniformly
DEMO_MASS_CYCLE = (0, 0, 0, 0, 0, 0, 0, 1, 1, 2)


class ObjectMoveEnv(TaskEnv):
    spec = EnvSpec(
        task_id="om",
        state_dim=4,
        action_dim=5,
        chunk_len=8,
        apply_len=4,
        history_len=2,
        attempt_steps=8,
        attempt_limit=12,
        feature_mode="primitive",
        n_primitives=3,
        n_regions=3,
        has_implicit_objective=True,
    )

    def _draw_hidden(self, rng, demo_index):
        if demo_index is None:
            self._mass = int(rng.integers(0, 3))
        else:
            self._mass = DEMO_MASS_CYCLE[demo_index % len(DEMO_MASS_CYCLE)]
        self._obj = rng.uniform(SPAWN_LO, SPAWN_HI, size=2)
        self._eff = self._obj.copy()

    def observation(self):
        return np.concatenate([self._eff, self._obj])

    def _initial_observation(self):
        return self.observation()

    def _apply_step(self, action):
        v = action[:2]
        prim = int(np.argmax(action[2:5]))
        new_eff = np.clip(self._eff + v * STEP_GAIN, -1.0, 1.0)
        if prim >= self._mass:  # strong enough to move the object
            self._obj = self._obj + (new_eff - self._eff)
        self._eff = new_eff

    def _attempt_verdict(self, attempt_actions, start_obs):
        prim = int(np.argmax(attempt_actions[:, 2:5].mean(axis=0)))
        self.implicit_flags.append(prim <= self._mass)  # not over-qualified
        if np.linalg.norm(self._obj - TARGET) <= TARGET_RADIUS:
            return "success", prim
        if prim < self._mass:
            self._eff = self._obj.copy()  # re-grasp: the failed state repeats
            return "fail", prim
        return "continue", prim

    def implicit_rate(self):
        # order adherence is episode-level: one over-qualified attempt sinks it
        if not self.implicit_flags:
            return 1.0
        return 1.0 if all(self.implicit_flags) else 0.0

    def expert_chunk(self, rng):
        to_target = TARGET - self._obj
        dist = np.linalg.norm(to_target)
        heading = to_target / max(dist, 1e-9)
        v = heading[None, :] * EXPERT_SPEED + rng.normal(0.0, EXPERT_STEP_JITTER, (8, 2))
        block = np.zeros((8, 3))
        block[:, self._mass] = 1.0  # weakest primitive that works
        return np.clip(np.concatenate([v, block], axis=1), -1.0, 1.0)

    def terminal_observation(self, chunk, obs):
        obs = np.asarray(obs, dtype=np.float64)
        delta = np.atleast_2d(chunk)[:, :2].sum(axis=0) * STEP_GAIN
        eff = np.clip(obs[:2] + delta, -1.0, 1.0)
        obj = obs[2:4] + (eff - obs[:2])  # demos always carry the object along
        return np.concatenate([eff, obj])

    def decode_region(self, chunk, obs):
        return int(np.argmax(np.atleast_2d(chunk)[:, 2:5].mean(axis=0)))

    def hidden_meta(self):
        return {"mass_class": self._mass, "object": self._obj.tolist()}

    def artifact_constants(self):
        return {
            "target": TARGET.tolist(),
            "target_radius": TARGET_RADIUS,
            "step_gain": STEP_GAIN,
            "demo_mass_cycle": list(DEMO_MASS_CYCLE),
            "primitives": list(PRIMITIVES),
        }
