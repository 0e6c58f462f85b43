"""Shared environment machinery for the scripted 2-D tasks.

Every task lives in the normalized [-1, 1]^2 workspace. An episode is a
sequence of fixed-length attempts; the policy acts at a faster cadence
(apply_len steps per decision) and the env evaluates outcomes only at
attempt boundaries, where it either reports success-progress or emits a
FailureEvent from its oracle detector. Hidden task parameters are drawn at
reset and never appear in observations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray

TASKS = ("bp", "do", "om", "op", "bt")


@dataclass(frozen=True)
class EnvSpec:
    task_id: str
    state_dim: int
    action_dim: int
    chunk_len: int          # L: predicted steps per decision
    apply_len: int          # p: executed steps per decision
    history_len: int        # H: past (action, state) pairs in the condition
    attempt_steps: int      # steps per oracle evaluation window
    attempt_limit: int
    feature_mode: str       # action | final_state | primitive
    n_primitives: int = 0
    n_regions: int = 3      # partition size for the region-rejection baseline
    has_implicit_objective: bool = False


@dataclass
class FailureEvent:
    """Oracle-detected failed attempt."""

    action: Array            # executed steps of the attempt, (m, action_dim)
    state: Array             # observation at the start of the attempt
    terminal_state: Array    # observation the attempt ended in
    primitive: int | None
    timestep: int
    attempt: int


@dataclass
class Demonstration:
    task: str
    states: Array            # (T, state_dim), observation before each action
    actions: Array           # (T, action_dim)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.actions.shape[0]


class TaskEnv:
    """Base class: attempt framing, action clipping, bookkeeping.

    Subclasses implement the per-step dynamics, the oracle attempt verdict,
    and the scripted expert. One instance serves one episode at a time;
    reset() redraws hidden parameters from the env's own rng stream.
    """

    spec: EnvSpec

    def __init__(self, seed: int, demo_index: int | None = None):
        self._rng = np.random.default_rng(seed)
        self._demo_index = demo_index
        self._done = True

    # -- subclass surface -------------------------------------------------
    def _draw_hidden(self, rng: np.random.Generator, demo_index: int | None):
        raise NotImplementedError

    def _initial_observation(self) -> Array:
        raise NotImplementedError

    def _apply_step(self, action: Array) -> None:
        """Advance internal state by one clipped action step."""
        raise NotImplementedError

    def _attempt_verdict(self, attempt_actions: Array, start_obs: Array):
        """Oracle check at an attempt boundary.

        Returns (outcome, primitive) with outcome in {"success", "fail",
        "continue"}; primitive labels the attempt where applicable.
        """
        raise NotImplementedError

    def observation(self) -> Array:
        raise NotImplementedError

    def expert_chunk(self, rng: np.random.Generator) -> Array:
        """One (attempt_steps, action_dim) oracle-guided action chunk."""
        raise NotImplementedError

    def terminal_observation(self, chunk: Array, obs: Array) -> Array:
        """Observable kinematic prediction of where a chunk ends up.

        Pure function of (chunk, obs); used for final-state failure features
        and must not consult hidden parameters.
        """
        raise NotImplementedError

    def decode_region(self, chunk: Array, obs: Array) -> int:
        """Partition label of a proposed chunk (baseline side information)."""
        raise NotImplementedError

    def artifact_constants(self) -> dict:
        """Tuned geometry/frequency constants, echoed into run manifests."""
        return {}

    # -- episode driver ----------------------------------------------------
    def reset(self) -> Array:
        self._draw_hidden(self._rng, self._demo_index)
        self._done = False
        self._success = False
        self._timestep = 0
        self.attempts = 0
        self._attempt_actions: list[Array] = []
        self._attempt_start_obs = None
        self.failure_events: list[FailureEvent] = []
        self.implicit_flags: list[bool] = []
        self.clipped_steps = 0
        self.last_step_observations: list[Array] = []
        return self.observation()

    def step(self, chunk: Array):
        """Execute up to apply_len steps; returns (obs, failure_or_none, done)."""
        if self._done:
            raise RuntimeError("episode is over; call reset()")
        chunk = np.atleast_2d(np.asarray(chunk, dtype=np.float64))
        if chunk.shape[1] != self.spec.action_dim:
            raise ValueError(f"action dim {chunk.shape[1]} != {self.spec.action_dim}")
        if chunk.shape[0] > self.spec.apply_len:
            raise ValueError(f"got {chunk.shape[0]} steps, apply_len is {self.spec.apply_len}")

        event = None
        self.last_step_observations = []
        for raw in chunk:
            if self._attempt_start_obs is None:
                self._attempt_start_obs = self.observation()
            clipped = np.clip(raw, -1.0, 1.0)
            if not np.array_equal(clipped, raw):
                self.clipped_steps += 1
            self.last_step_observations.append(self.observation())
            self._apply_step(clipped)
            self._attempt_actions.append(clipped)
            self._timestep += 1

            if len(self._attempt_actions) == self.spec.attempt_steps:
                event = self._finish_attempt()
                if self._done:
                    break
        return self.observation(), event, self._done

    def _finish_attempt(self):
        attempt = np.asarray(self._attempt_actions)
        start_obs = self._attempt_start_obs
        self._attempt_actions = []
        self._attempt_start_obs = None
        self.attempts += 1
        outcome, primitive = self._attempt_verdict(attempt, start_obs)
        event = None
        if outcome == "fail":
            event = FailureEvent(
                action=attempt.copy(),
                state=start_obs.copy(),
                terminal_state=self.observation().copy(),
                primitive=primitive,
                timestep=self._timestep,
                attempt=self.attempts,
            )
            self.failure_events.append(event)
        if outcome == "success":
            self._done = True
            self._success = True
        elif self.attempts >= self.spec.attempt_limit:
            self._done = True
        return event

    @property
    def done(self) -> bool:
        return self._done

    @property
    def success(self) -> bool:
        return self._success

    def implicit_rate(self) -> float:
        """Share of flagged decisions meeting the implicit objective; tasks
        without one report 1.0."""
        if not self.spec.has_implicit_objective or not self.implicit_flags:
            return 1.0
        return float(np.mean(self.implicit_flags))

    # -- demonstrations ----------------------------------------------------
    def expert_demo(self, rng: np.random.Generator) -> Demonstration:
        """Run the oracle expert through env.step; must always succeed."""
        self.reset()
        states, actions = [], []
        while not self._done:
            chunk = self.expert_chunk(rng)
            offset = 0
            while offset < chunk.shape[0] and not self._done:
                seg = chunk[offset : offset + self.spec.apply_len]
                self.step(seg)
                states.extend(self.last_step_observations)
                actions.extend(seg[: len(self.last_step_observations)])
                offset += seg.shape[0]
        if not self._success or self.failure_events:
            raise AssertionError(f"{self.spec.task_id}: expert failed, this is a bug")
        return Demonstration(
            task=self.spec.task_id,
            states=np.asarray(states),
            actions=np.asarray(actions),
            meta=self.hidden_meta(),
        )

    def hidden_meta(self) -> dict:
        return {}


def straight_chunk(start: Array, goal: Array, n_steps: int, gain: float,
                   rng: np.random.Generator, end_jitter: float, step_jitter: float) -> Array:
    """Straight-line velocity chunk from start to a jittered goal.

    Per-step jitter is mean-removed so the endpoint lands exactly on the
    jittered goal after n_steps at the given gain.
    """
    target = goal + rng.normal(0.0, end_jitter, size=2)
    jit = rng.normal(0.0, step_jitter, size=(n_steps, 2))
    jit -= jit.mean(axis=0, keepdims=True)
    v = (target - start)[None, :] / (n_steps * gain) + jit
    return np.clip(v, -1.0, 1.0)
