"""Offline phase glue: train the base denoisers from a demo dataset, build
the synthetic recovery dataset, and train the avoidance denoiser."""

from __future__ import annotations

import numpy as np

from . import data, diffusion, envs, recovery
from .diffusion import NoiseSchedule, TrainConfig
from .recovery import RecoveryConfig
from .runtime import TaskModels

COND_FOR = {"eps_a": "none", "eps_s": "state", "eps_h": "history"}


def train_base_denoiser(ds: data.DemoDataset, which: str, tcfg: TrainConfig,
                        sched: NoiseSchedule):
    """Train one of eps_a / eps_s / eps_h on sliding demo windows."""
    if which not in COND_FOR:
        raise ValueError(f"which must be one of {sorted(COND_FOR)}, got {which!r}")
    spec = envs.env_spec(ds.task)
    arrays = data.build_training_arrays(ds, spec.history_len, spec.chunk_len)
    return diffusion.train_denoiser(arrays[COND_FOR[which]], tcfg, sched)


def synth_feature_matrix(task: str, actions_n: np.ndarray, states_n: np.ndarray,
                         models: TaskModels) -> np.ndarray:
    """Key-feature vectors of synthetic samples, in normalized coordinates.

    Mirrors TaskModels.feature_from_event so thresholds mean the same thing
    for synthesized pairs and for runtime failure events.
    """
    spec = envs.env_spec(task)
    if spec.feature_mode == "action":
        return actions_n.copy()
    env = envs.make_env(task, 0)  # decode helpers are pure; hidden state unused
    feats = []
    for a_n, x_n in zip(actions_n, states_n):
        chunk = models.action_norm.denormalize_chunk(a_n, spec.chunk_len)
        obs = models.state_norm.denormalize(x_n)
        if spec.feature_mode == "final_state":
            feats.append(models.state_norm.normalize(env.terminal_observation(chunk, obs)))
        else:  # primitive
            label = env.decode_region(chunk, obs)
            one_hot = np.zeros(spec.n_primitives)
            one_hot[label] = 1.0
            feats.append(one_hot)
    return np.asarray(feats)


def build_recovery_model(ds: data.DemoDataset, models: TaskModels,
                         rcfg: RecoveryConfig, tcfg: TrainConfig, seed: int = 0):
    """Synthesize the action set, filter pairs, train the avoidance net.

    Returns (pairs, den_z, losses). Anchor states are the demo decision
    states in normalized coordinates.
    """
    if models.den_a is None or models.den_s is None:
        raise ValueError("recovery synthesis needs eps_a and eps_s")
    spec = envs.env_spec(ds.task)
    demo_states = models.state_norm.normalize(
        np.concatenate([d.states for d in ds.demos], axis=0))
    rng = np.random.default_rng(seed)
    actions_n, states_n = recovery.synthesize_action_set(
        models.den_a, models.den_s, demo_states, rcfg, models.sched, rng,
        clip=models.chain_clip)
    feats = synth_feature_matrix(ds.task, actions_n, states_n, models)
    pairs = recovery.build_recovery_dataset(
        actions_n, states_n, feats, spec.feature_mode, rcfg,
        chunk_len=spec.chunk_len)
    den_z, losses = recovery.train_recovery_denoiser(
        pairs, tcfg, models.sched, pair_cap=rcfg.train_pair_cap)
    return pairs, den_z, losses


def train_task_models(ds: data.DemoDataset, tcfg: TrainConfig,
                      rcfg: RecoveryConfig, n_steps: int = 100,
                      tcfg_z: TrainConfig | None = None,
                      chain_clip: float | None = 3.0,
                      with_recovery: bool = True) -> TaskModels:
    """One-call offline phase used by tests and the quickstart."""
    sched = diffusion.build_cosine_schedule(n_steps)
    models = TaskModels(task=ds.task, sched=sched, state_norm=ds.state_norm,
                        action_norm=ds.action_norm, chain_clip=chain_clip)
    models.den_a, _ = train_base_denoiser(ds, "eps_a", tcfg, sched)
    models.den_s, _ = train_base_denoiser(ds, "eps_s", tcfg, sched)
    models.den_h, _ = train_base_denoiser(ds, "eps_h", tcfg, sched)
    if with_recovery:
        _, models.den_z, _ = build_recovery_model(ds, models, rcfg,
                                                  tcfg_z or tcfg)
    return models
