"""Bartender: fill three cups from a pouring station.

Cup positions are drawn per episode (observable, well separated); fill flags
are hidden. An eight-step approach ending inside a cup pours into it;
pouring into an already-filled cup fails and the effector returns to the
station. Demonstrations prefer the nearest unfilled cup by frequency.
"""

from __future__ import annotations

import numpy as np

from .base import EnvSpec, TaskEnv, straight_chunk

STATION = np.array([0.0, -0.8])
CUP_RADIUS = 0.18
N_CUPS = 3
MIN_CUP_SEPARATION = 0.8
STEP_GAIN = 0.25
RANK_WEIGHTS = np.array([0.6, 0.3, 0.1])
CUP_X = (-0.8, 0.8)
CUP_Y = (0.2, 0.8)
END_JITTER = 0.02
STEP_JITTER = 0.015


def draw_cups(rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample cup layouts with pairwise separation."""
    while True:
        cups = np.stack([rng.uniform(*CUP_X, size=N_CUPS),
                         rng.uniform(*CUP_Y, size=N_CUPS)], axis=1)
        d = np.linalg.norm(cups[:, None, :] - cups[None, :, :], axis=2)
        if d[np.triu_indices(N_CUPS, 1)].min() >= MIN_CUP_SEPARATION:
            return cups


class BartenderEnv(TaskEnv):
    spec = EnvSpec(
        task_id="bt",
        state_dim=2 + 2 * N_CUPS,
        action_dim=2,
        chunk_len=8,
        apply_len=4,
        history_len=2,
        attempt_steps=8,
        attempt_limit=10,
        feature_mode="final_state",
        n_regions=3,
        has_implicit_objective=True,
    )

    def _draw_hidden(self, rng, demo_index):
        self._cups = draw_cups(rng)
        self._filled = np.zeros(N_CUPS, dtype=bool)
        self._eff = STATION.copy()

    def observation(self):
        return np.concatenate([self._eff, self._cups.ravel()])

    def _initial_observation(self):
        return self.observation()

    def _apply_step(self, action):
        self._eff = np.clip(self._eff + action * STEP_GAIN, -1.0, 1.0)

    def _attempt_verdict(self, attempt_actions, start_obs):
        dists = np.linalg.norm(self._cups - self._eff, axis=1)
        cup = int(np.argmin(dists))
        self._eff = STATION.copy()  # return to the station either way
        if dists[cup] > CUP_RADIUS:
            return "fail", None
        if self._filled[cup]:
            return "fail", None
        unfilled = np.flatnonzero(~self._filled)
        nearest = unfilled[np.argmin(np.linalg.norm(self._cups[unfilled] - STATION, axis=1))]
        self.implicit_flags.append(cup == nearest)
        self._filled[cup] = True
        if self._filled.all():
            return "success", None
        return "continue", None

    def expert_chunk(self, rng):
        unfilled = np.flatnonzero(~self._filled)
        order = unfilled[np.argsort(np.linalg.norm(self._cups[unfilled] - STATION, axis=1))]
        w = RANK_WEIGHTS[: order.size]
        cup = int(rng.choice(order, p=w / w.sum()))
        return straight_chunk(STATION, self._cups[cup], 8, STEP_GAIN, rng,
                              END_JITTER, STEP_JITTER)

    def terminal_observation(self, chunk, obs):
        obs = np.asarray(obs, dtype=np.float64)
        eff = np.clip(obs[:2] + np.atleast_2d(chunk).sum(axis=0) * STEP_GAIN, -1.0, 1.0)
        return np.concatenate([eff, obs[2:]])

    def decode_region(self, chunk, obs):
        obs = np.asarray(obs, dtype=np.float64)
        cups = obs[2:].reshape(N_CUPS, 2)
        end = self.terminal_observation(chunk, obs)[:2]
        return int(np.argmin(np.linalg.norm(cups - end, axis=1)))

    def hidden_meta(self):
        return {"cups": self._cups.tolist()}

    def artifact_constants(self):
        return {
            "station": STATION.tolist(),
            "cup_radius": CUP_RADIUS,
            "min_cup_separation": MIN_CUP_SEPARATION,
            "step_gain": STEP_GAIN,
            "rank_weights": RANK_WEIGHTS.tolist(),
        }
