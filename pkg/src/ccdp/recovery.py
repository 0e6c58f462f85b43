"""Recovery-model construction: failure key features, synthetic action sets,
pair filtering, and training of the avoidance-conditioned denoiser.

All coordinates entering this module are already normalized to [-1, 1] per
dimension, so the dissimilarity/similarity thresholds are unit-consistent
across tasks. Action-chunk features compare by mean per-step squared
distance; single-state and one-hot features by plain squared distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffusion
from .errors import ConfigError
from .diffusion import ConditionedDataset, Denoiser, NoiseSchedule, TrainConfig

Array = np.ndarray

FEATURE_MODES = ("action", "final_state", "primitive")


@dataclass
class FailureFeature:
    """Key-feature vector summarizing one failed attempt."""

    mode: str
    z: Array
    action: Array
    state: Array


def extract_feature(mode: str, failed_action: Array, failure_state: Array,
                    terminal_state: Array | None = None,
                    primitive: int | None = None,
                    n_primitives: int = 0) -> FailureFeature:
    """Build the failure feature for one event.

    action mode copies the failed action; final_state mode uses the state the
    attempt ended in; primitive mode one-hot encodes the primitive label.
    """
    if mode not in FEATURE_MODES:
        raise ValueError(f"unknown feature mode {mode!r}")
    a = np.asarray(failed_action, dtype=np.float64).ravel()
    x = np.asarray(failure_state, dtype=np.float64).ravel()
    if mode == "action":
        z = a.copy()
    elif mode == "final_state":
        if terminal_state is None:
            raise ConfigError("final_state mode needs the terminal state")
        z = np.asarray(terminal_state, dtype=np.float64).ravel().copy()
    else:
        if primitive is None or n_primitives <= 0:
            raise ConfigError("primitive mode needs a label and the label count")
        if not 0 <= primitive < n_primitives:
            raise ValueError(f"primitive {primitive} outside 0..{n_primitives - 1}")
        z = np.zeros(n_primitives)
        z[primitive] = 1.0
    return FailureFeature(mode, z, a, x)


def feature_sq_dist(z1: Array, z2: Array, mode: str, chunk_len: int = 1) -> float:
    """Squared feature distance; action chunks longer than one step average
    the per-step squared distance so thresholds stay scale-free in L."""
    d = np.asarray(z1, dtype=np.float64) - np.asarray(z2, dtype=np.float64)
    total = float(d @ d)
    if mode == "action" and chunk_len > 1:
        return total / chunk_len
    return total


@dataclass
class RecoveryConfig:
    delta_z: float = 0.3
    delta_x: float = 0.25
    sigma_x: float = 0.05
    w_s_synth: float = 0.7
    n_states: int = 48
    n_actions_per_state: int = 24
    train_pair_cap: int = 150_000

    def __post_init__(self):
        if self.delta_z <= 0 or self.delta_x <= 0:
            raise ValueError("thresholds must be positive")
        if self.sigma_x < 0:
            raise ValueError("sigma_x must be >= 0")
        if not 0.0 <= self.w_s_synth <= 1.0:
            raise ValueError("w_s_synth must lie in [0, 1]")
        if self.n_states < 1 or self.n_actions_per_state < 1:
            raise ValueError("synthesis budget must be positive")


def synthesize_action_set(eps_a, eps_s, demo_states: Array, cfg: RecoveryConfig,
                          sched: NoiseSchedule, rng: np.random.Generator,
                          clip: float | None = 3.0) -> tuple[Array, Array]:
    """Sample a broad action set anchored on demonstration states.

    Draws cfg.n_states anchor states from demo_states, perturbs each anchor
    independently per sample (scale cfg.sigma_x), and samples
    cfg.n_actions_per_state actions per anchor from the history-free
    predictor eps_a + w_s_synth*(eps_s - eps_a). Returns (actions, states)
    where states holds the unperturbed anchor of each row.
    """
    demo_states = np.atleast_2d(np.asarray(demo_states, dtype=np.float64))
    if demo_states.shape[0] == 0:
        raise ValueError("demo_states is empty")
    replace = demo_states.shape[0] < cfg.n_states
    picks = rng.choice(demo_states.shape[0], size=cfg.n_states, replace=replace)
    anchors = demo_states[picks]

    per = cfg.n_actions_per_state
    states = np.repeat(anchors, per, axis=0)
    conds = states + rng.normal(0.0, cfg.sigma_x, size=states.shape)

    dim = eps_a.target_dim
    w = cfg.w_s_synth

    def eps_fn(a, k):
        base = eps_a.eps(a, None, k)
        if w == 0.0:
            return base
        return base + w * (eps_s.eps(a, conds, k) - base)

    actions = diffusion.sample(eps_fn, dim, sched, rng, n=states.shape[0], clip=clip)
    return actions, states


@dataclass
class RecoveryDataset:
    """Filtered (feature -> alternative action) training pairs.

    Row i says: when feature z[i] failed, action a[i] taken from the nearby
    state x[i] is an acceptable alternative.
    """

    z: Array
    a: Array
    x: Array
    mode: str
    delta_z: float
    delta_x: float
    chunk_len: int = 1

    def __len__(self) -> int:
        return self.z.shape[0]


def build_recovery_dataset(actions: Array, states: Array, features: Array,
                           mode: str, cfg: RecoveryConfig, chunk_len: int = 1) -> RecoveryDataset:
    """Emit every ordered pair (i, j) whose features differ by more than
    delta_z while the states stay within delta_x, stored as condition
    z_i -> target (a_j, x_j).

    `features` holds the key-feature vector of each (action, state) row,
    computed by the task adapter (identity for action mode, terminal-state
    kinematics for final_state mode, one-hot decode for primitive mode).
    """
    if mode not in FEATURE_MODES:
        raise ValueError(f"unknown feature mode {mode!r}")
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    n = actions.shape[0]
    if n == 0:
        raise ValueError("empty synthesis set")
    if states.shape[0] != n or features.shape[0] != n:
        raise ValueError("actions/states/features row counts differ")

    scale = float(chunk_len) if (mode == "action" and chunk_len > 1) else 1.0
    zz = _pairwise_sq_dists(features) / scale
    xx = _pairwise_sq_dists(states)
    keep = (zz > cfg.delta_z) & (xx < cfg.delta_x)
    ii, jj = np.nonzero(keep)
    return RecoveryDataset(
        z=features[ii].copy(), a=actions[jj].copy(), x=states[jj].copy(),
        mode=mode, delta_z=cfg.delta_z, delta_x=cfg.delta_x, chunk_len=chunk_len,
    )


def _pairwise_sq_dists(m: Array) -> Array:
    sq = np.sum(m * m, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (m @ m.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def train_recovery_denoiser(pairs: RecoveryDataset, cfg: TrainConfig,
                            sched: NoiseSchedule,
                            pair_cap: int | None = None) -> tuple[Denoiser, list[float]]:
    """Fit the avoidance denoiser on (feature -> action) pairs.

    Datasets larger than pair_cap are thinned by a deterministic uniform
    subsample before training (the emitted pair set itself is untouched).
    """
    if len(pairs) == 0:
        raise ValueError(
            "no recovery pairs survived the filter; increase the synthesis "
            "budget (n_states / n_actions_per_state) or loosen the thresholds"
        )
    z, a = pairs.z, pairs.a
    if pair_cap is not None and len(pairs) > pair_cap:
        idx = np.random.default_rng(cfg.seed).choice(len(pairs), size=pair_cap, replace=False)
        idx.sort()
        z, a = z[idx], a[idx]
    data = ConditionedDataset(targets=a, conds=z, kind="feature")
    return diffusion.train_denoiser(data, cfg, sched)
