"""Receding-horizon execution, the three policies, and evaluation.

At each decision the policy sees the current observation plus a window of
the previous H (action, state) pairs, predicts a chunk_len action chunk in
normalized coordinates, and the env executes the first apply_len steps.
Failure events reported by the env oracle feed the failure-aware policy's
feature set and the region-rejection baseline's partition bookkeeping.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import composition, data, diffusion, envs, recovery
from .composition import CompositionWeights, ConditionBundle, DenoiserSet
from .diffusion import Denoiser, NoiseSchedule
from .normalize import Normalizer

Array = np.ndarray


class RegionsExhausted(RuntimeError):
    """The region-rejection baseline ran out of untried regions."""


@dataclass
class WeightConfig:
    w_s: float = 1.0
    w_h_normal: float = 1.0
    w_h_failed: float = 0.2
    w_z: float = 1.0
    recency: int = 2  # decisions after a failure during which w_h stays damped
    # treat a failure inside an existing avoid-ball as the same case (set
    # semantics for the failure set); None stores every event separately
    dedup_sq: float | None = None


@dataclass
class TaskModels:
    """Everything a policy needs for one task."""

    task: str
    sched: NoiseSchedule
    state_norm: Normalizer
    action_norm: Normalizer
    den_a: Denoiser | None = None
    den_s: Denoiser | None = None
    den_h: Denoiser | None = None
    den_z: Denoiser | None = None
    chain_clip: float | None = 3.0

    @property
    def spec(self) -> envs.EnvSpec:
        return envs.env_spec(self.task)

    @property
    def chunk_dim(self) -> int:
        return self.spec.chunk_len * self.spec.action_dim

    def denoiser_set(self) -> DenoiserSet:
        missing = [n for n, d in (("eps_a", self.den_a), ("eps_s", self.den_s),
                                  ("eps_h", self.den_h), ("eps_z", self.den_z)) if d is None]
        if missing:
            raise ValueError(f"missing denoisers for composition: {missing}")
        return DenoiserSet.from_denoisers(self.den_a, self.den_s, self.den_h, self.den_z)

    def feature_from_event(self, event: envs.FailureEvent) -> Array:
        """Normalized failure key feature for one oracle event."""
        spec = self.spec
        feat = recovery.extract_feature(
            spec.feature_mode, event.action, event.state,
            terminal_state=event.terminal_state, primitive=event.primitive,
            n_primitives=spec.n_primitives,
        )
        if spec.feature_mode == "action":
            return self.action_norm.normalize_chunk(event.action)
        if spec.feature_mode == "final_state":
            return self.state_norm.normalize(feat.z)
        return feat.z  # one-hot labels are already unitless


class Policy:
    """Shared policy surface used by the rollout driver."""

    name = "policy"

    def reset_episode(self) -> None:
        pass

    def sample_chunk(self, obs: Array, history: Array, rng: np.random.Generator) -> Array:
        raise NotImplementedError

    def notify_failure(self, event: envs.FailureEvent) -> None:
        pass

    def notify_attempt_ok(self) -> None:
        pass

    def current_weights(self):
        return None


class DPPolicy(Policy):
    """Plain history-conditioned diffusion policy; ignores failures."""

    name = "dp"

    def __init__(self, models: TaskModels):
        if models.den_h is None:
            raise ValueError("dp needs the history-conditioned denoiser")
        self.models = models

    def sample_chunk(self, obs, history, rng):
        m = self.models
        flat = diffusion.sample(m.den_h.eps_fn(history), m.chunk_dim, m.sched,
                                rng, clip=m.chain_clip)[0]
        return m.action_norm.denormalize_chunk(flat, m.spec.chunk_len)


class DPStarPolicy(Policy):
    """Partition baseline: rejection-sample inside one region, drop the
    region after a failure, pick the next uniformly at random."""

    name = "dpstar"

    def __init__(self, models: TaskModels, region_decoder, n_regions: int,
                 max_rejections: int = 64):
        if models.den_h is None:
            raise ValueError("dpstar needs the history-conditioned denoiser")
        self.models = models
        self.decode = region_decoder
        self.n_regions = n_regions
        self.max_rejections = max_rejections

    def reset_episode(self):
        self.allowed = set(range(self.n_regions))
        self.current: int | None = None

    def _pick_region(self, rng):
        if not self.allowed:
            raise RegionsExhausted(f"{self.models.task}: all regions failed")
        choices = sorted(self.allowed)
        self.current = int(rng.choice(choices))

    def sample_chunk(self, obs, history, rng):
        if self.current is None:
            self._pick_region(rng)
        m = self.models
        chunk = None
        for _ in range(self.max_rejections):
            flat = diffusion.sample(m.den_h.eps_fn(history), m.chunk_dim, m.sched,
                                    rng, clip=m.chain_clip)[0]
            chunk = m.action_norm.denormalize_chunk(flat, m.spec.chunk_len)
            if self.decode(chunk, obs) == self.current:
                return chunk
        return chunk  # rejection budget spent; run the last proposal

    def notify_failure(self, event):
        failed = self.decode(event.action, event.state)
        self.allowed.discard(failed)
        self.current = None  # re-pick lazily at the next decision

    def notify_attempt_ok(self):
        self.current = None  # fresh uniform pick for the next attempt


class CCDPPolicy(Policy):
    """Failure-aware composed sampler."""

    name = "ccdp"

    def __init__(self, models: TaskModels, weight_cfg: WeightConfig | None = None):
        self.models = models
        self.nets = models.denoiser_set()
        self.wcfg = weight_cfg or WeightConfig()

    def reset_episode(self):
        self.features: list[Array] = []
        self._decision = 0
        self._last_failure_decision: int | None = None
        self._weights_log: list[CompositionWeights] = []

    def _weights(self) -> CompositionWeights:
        recent = (self._last_failure_decision is not None
                  and self._decision - self._last_failure_decision <= self.wcfg.recency)
        return composition.default_weights(
            len(self.features), recent,
            w_s=self.wcfg.w_s, w_h_normal=self.wcfg.w_h_normal,
            w_h_failed=self.wcfg.w_h_failed, w_z=self.wcfg.w_z,
        )

    def sample_chunk(self, obs, history, rng):
        m = self.models
        self._decision += 1
        w = self._weights()
        self._weights_log.append(w)
        bundle = ConditionBundle(
            state=m.state_norm.normalize(obs), history=history,
            features=list(self.features),
        )
        flat = composition.sample_composed(bundle, w, self.nets, m.sched, rng,
                                           dim=m.chunk_dim, clip=m.chain_clip)[0]
        return m.action_norm.denormalize_chunk(flat, m.spec.chunk_len)

    def notify_failure(self, event):
        z = self.models.feature_from_event(event)
        self._last_failure_decision = self._decision
        if self.wcfg.dedup_sq is not None:
            spec = self.models.spec
            for known in self.features:
                if recovery.feature_sq_dist(z, known, spec.feature_mode,
                                            spec.chunk_len) <= self.wcfg.dedup_sq:
                    return
        self.features.append(z)

    def current_weights(self):
        return self._weights_log[-1] if self._weights_log else None


@dataclass
class EpisodeTrace:
    task: str
    policy: str
    steps: list = field(default_factory=list)       # (action, observation) per step
    weights: list = field(default_factory=list)     # per-decision composition weights
    failures: list = field(default_factory=list)
    success: bool = False
    attempts: int = 0
    implicit_rate: float = 1.0
    decisions: int = 0
    clipped_steps: int = 0

    def to_record(self, episode: int, seed: int) -> dict:
        return {
            "schema_version": 1,
            "task": self.task,
            "policy": self.policy,
            "seed": seed,
            "episode": episode,
            "success": bool(self.success),
            "attempts": int(self.attempts),
            "implicit_rate": float(self.implicit_rate),
            "decisions": int(self.decisions),
            "clipped_steps": int(self.clipped_steps),
            "n_failures": len(self.failures),
            "failure_attempts": [int(f.attempt) for f in self.failures],
            "weights": [
                {"w_s": w.w_s, "w_h": w.w_h, "w_z": list(w.w_z)} if w else None
                for w in self.weights
            ],
            "steps": [
                {"x": x.tolist(), "a": a.tolist()} for a, x in self.steps
            ],
        }


def run_episode(policy: Policy, env: envs.TaskEnv, models: TaskModels,
                rng: np.random.Generator, keep_steps: bool = True) -> EpisodeTrace:
    """Receding-horizon rollout until the env reports done."""
    spec = env.spec
    obs = env.reset()
    policy.reset_episode()
    trace = EpisodeTrace(task=spec.task_id, policy=policy.name)
    past_pairs: list = []

    while not env.done:
        hist = data.history_vector(
            models.state_norm.normalize(obs), past_pairs, spec.history_len,
            spec.action_dim, spec.state_dim)
        try:
            chunk = policy.sample_chunk(obs, hist, rng)
        except RegionsExhausted:
            break
        trace.decisions += 1
        trace.weights.append(policy.current_weights())
        seg = np.atleast_2d(chunk)[: spec.apply_len]
        attempts_before = env.attempts
        obs, event, done = env.step(seg)
        for a_step, o_step in zip(seg, env.last_step_observations):
            past_pairs.append((models.action_norm.normalize(a_step),
                               models.state_norm.normalize(o_step)))
            if keep_steps:
                trace.steps.append((np.asarray(a_step), np.asarray(o_step)))
        if event is not None:
            policy.notify_failure(event)
        elif env.attempts > attempts_before:
            policy.notify_attempt_ok()

    trace.failures = list(env.failure_events)
    trace.success = env.success
    trace.attempts = env.attempts
    trace.implicit_rate = env.implicit_rate()
    trace.clipped_steps = env.clipped_steps
    return trace


@dataclass
class Metrics:
    task: str
    policy: str
    seed: int
    episodes: int
    success_rate: float
    mean_attempts: float
    implicit_rate: float
    rows: list = field(default_factory=list)

    def summary_line(self) -> str:
        return (f"{self.task}/{self.policy}: success {self.success_rate:.3f}, "
                f"mean attempts {self.mean_attempts:.2f}, "
                f"implicit {self.implicit_rate:.3f} ({self.episodes} episodes)")


def evaluate(policy_factory, task: str, n_episodes: int, seed: int,
             models: TaskModels, keep_steps: bool = False,
             with_timing: bool = False) -> tuple[Metrics, list[EpisodeTrace]]:
    """Run n_episodes with per-episode seeds derived from (seed, episode).

    The env stream depends only on (seed, episode), so different policies
    evaluated at the same seed face identical hidden scenarios.
    """
    rows, traces = [], []
    for ep in range(n_episodes):
        env_seed, pol_seed = np.random.SeedSequence([seed, ep]).spawn(2)
        env = envs.make_env(task, env_seed)
        policy = policy_factory(env)
        t0 = time.perf_counter()
        trace = run_episode(policy, env, models, np.random.default_rng(pol_seed),
                            keep_steps=keep_steps)
        wall_ms = (time.perf_counter() - t0) * 1e3
        row = {
            "task": task,
            "policy": policy.name,
            "seed": seed,
            "episode": ep,
            "success": int(trace.success),
            "attempts": trace.attempts,
            "implicit_ok": trace.implicit_rate,
        }
        if with_timing:
            row["wall_ms"] = wall_ms
        rows.append(row)
        traces.append(trace)
    n = len(rows)
    metrics = Metrics(
        task=task,
        policy=rows[0]["policy"] if rows else "?",
        seed=seed,
        episodes=n,
        success_rate=float(np.mean([r["success"] for r in rows])) if n else 0.0,
        mean_attempts=float(np.mean([r["attempts"] for r in rows])) if n else 0.0,
        implicit_rate=float(np.mean([r["implicit_ok"] for r in rows])) if n else 0.0,
        rows=rows,
    )
    return metrics, traces


def make_policy(kind: str, models: TaskModels, env: envs.TaskEnv,
                weight_cfg: WeightConfig | None = None) -> Policy:
    if kind == "dp":
        return DPPolicy(models)
    if kind == "dpstar":
        return DPStarPolicy(models, env.decode_region, env.spec.n_regions)
    if kind == "ccdp":
        return CCDPPolicy(models, weight_cfg)
    raise ValueError(f"unknown policy kind {kind!r}")
