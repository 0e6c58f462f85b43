"""Object packing: carry twelve objects into three baskets of capacity four.

Basket positions are fixed and observable; fill counts are hidden, so a
placement into a full basket bounces (oracle failure) and the policy must
steer subsequent trajectories elsewhere. Demonstrations prefer nearer
baskets by frequency (0.6/0.3/0.1 over the distance ranking of the baskets
still available), which is the implicit objective measured at test time.
"""

from __future__ import annotations

import numpy as np

from .base import EnvSpec, TaskEnv, straight_chunk

BASKETS = np.array([[-0.75, 0.7], [0.0, 0.7], [0.75, 0.7]])
BASKET_RADIUS = 0.18
CAPACITY = 4
N_OBJECTS = 12
STEP_GAIN = 0.25
RANK_WEIGHTS = np.array([0.6, 0.3, 0.1])
SPAWN_X = (-0.85, 0.85)
SPAWN_Y = (-0.85, -0.15)
END_JITTER = 0.02
STEP_JITTER = 0.015


class PackingEnv(TaskEnv):
    spec = EnvSpec(
        task_id="op",
        state_dim=3,
        action_dim=2,
        chunk_len=8,
        apply_len=8,
        history_len=0,
        attempt_steps=8,
        attempt_limit=30,
        feature_mode="final_state",
        n_regions=3,
        has_implicit_objective=True,
    )

    def _draw_hidden(self, rng, demo_index):
        self._objects = np.stack([
            rng.uniform(*SPAWN_X, size=N_OBJECTS),
            rng.uniform(*SPAWN_Y, size=N_OBJECTS),
        ], axis=1)
        self._next_obj = 0
        self._fills = np.zeros(3, dtype=int)
        self._eff = self._objects[0].copy()

    @property
    def _remaining(self) -> int:
        return N_OBJECTS - self._next_obj

    def observation(self):
        return np.array([self._eff[0], self._eff[1], self._remaining / N_OBJECTS])

    def _initial_observation(self):
        return self.observation()

    def _apply_step(self, action):
        self._eff = np.clip(self._eff + action * STEP_GAIN, -1.0, 1.0)

    def _attempt_verdict(self, attempt_actions, start_obs):
        obj_pos = start_obs[:2]
        dists = np.linalg.norm(BASKETS - self._eff, axis=1)
        basket = int(np.argmin(dists))
        if dists[basket] > BASKET_RADIUS:
            self._eff = obj_pos.copy()  # missed every basket; object bounces back
            return "fail", None
        if self._fills[basket] >= CAPACITY:
            self._eff = obj_pos.copy()  # basket full; object bounces back
            return "fail", None
        available = np.flatnonzero(self._fills < CAPACITY)
        nearest_avail = available[np.argmin(np.linalg.norm(BASKETS[available] - obj_pos, axis=1))]
        self.implicit_flags.append(basket == nearest_avail)
        self._fills[basket] += 1
        self._next_obj += 1
        if self._next_obj >= N_OBJECTS:
            return "success", None
        self._eff = self._objects[self._next_obj].copy()
        return "continue", None

    def expert_chunk(self, rng):
        obj_pos = self._objects[self._next_obj]
        available = np.flatnonzero(self._fills < CAPACITY)
        order = available[np.argsort(np.linalg.norm(BASKETS[available] - obj_pos, axis=1))]
        w = RANK_WEIGHTS[: order.size]
        basket = int(rng.choice(order, p=w / w.sum()))
        return straight_chunk(obj_pos, BASKETS[basket], 8, STEP_GAIN, rng,
                              END_JITTER, STEP_JITTER)

    def terminal_observation(self, chunk, obs):
        obs = np.asarray(obs, dtype=np.float64)
        eff = np.clip(obs[:2] + np.atleast_2d(chunk).sum(axis=0) * STEP_GAIN, -1.0, 1.0)
        return np.array([eff[0], eff[1], obs[2]])

    def decode_region(self, chunk, obs):
        end = self.terminal_observation(chunk, obs)[:2]
        return int(np.argmin(np.linalg.norm(BASKETS - end, axis=1)))

    def hidden_meta(self):
        return {"objects": self._objects.tolist()}

    def artifact_constants(self):
        return {
            "baskets": BASKETS.tolist(),
            "basket_radius": BASKET_RADIUS,
            "capacity": CAPACITY,
            "n_objects": N_OBJECTS,
            "step_gain": STEP_GAIN,
            "rank_weights": RANK_WEIGHTS.tolist(),
        }
