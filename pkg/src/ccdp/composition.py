"""Weighted composition of conditional denoisers.

The composed prediction is

    eps_a + w_s*(eps_s - eps_a) + w_h*(eps_h - eps_a) + sum_i w_z[i]*(eps_z_i - eps_a)

computed in the equivalent grouped form (1 - w_s - w_h - sum w_z)*eps_a +
w_s*eps_s + ..., skipping terms whose coefficient is exactly zero. Skipping
makes the w_s=0, w_z=[], w_h=1 case return eps_h bit-for-bit, which is what
ties the composed sampler to the plain history-conditioned policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffusion
from .errors import ShapeError

Array = np.ndarray


@dataclass
class DenoiserSet:
    """The four predictors sharing one action space and schedule.

    Each entry is a callable (a, cond, k) -> eps over (n, dim) batches;
    trained `Denoiser.eps` methods fit directly, and closed-form test
    predictors can be plugged in the same way. eps_z is a single network
    evaluated once per active failure feature.
    """

    eps_a: object
    eps_s: object
    eps_h: object
    eps_z: object

    @classmethod
    def from_denoisers(cls, eps_a, eps_s, eps_h, eps_z) -> "DenoiserSet":
        dims = {d.target_dim for d in (eps_a, eps_s, eps_h, eps_z)}
        steps = {d.n_steps for d in (eps_a, eps_s, eps_h, eps_z)}
        if len(dims) != 1 or len(steps) != 1:
            raise ValueError("denoisers disagree on action dim or step count")
        if eps_a.cond_dim != 0:
            raise ValueError("eps_a must be unconditional")
        return cls(eps_a.eps, eps_s.eps, eps_h.eps, eps_z.eps)


@dataclass
class CompositionWeights:
    w_s: float = 1.0
    w_h: float = 1.0
    w_z: tuple[float, ...] = ()

    def __post_init__(self):
        self.w_z = tuple(float(w) for w in self.w_z)
        if self.w_s < 0 or self.w_h < 0 or any(w < 0 for w in self.w_z):
            raise ValueError("composition weights must be non-negative")


@dataclass
class ConditionBundle:
    """Normalized conditioning vectors for one sampling call.

    history is the current state with the previous H (action, state) pairs
    appended, zero-padded at episode start; features is the list of active
    failure feature vectors (may be empty).
    """

    state: Array
    history: Array
    features: list = field(default_factory=list)


def default_weights(n_failures: int, failed_recently: bool,
                    w_s: float = 1.0, w_h_normal: float = 1.0,
                    w_h_failed: float = 0.2, w_z: float = 1.0) -> CompositionWeights:
    """Weight schedule: full history weight while clean, damped right after a
    failure, one unit repulsion weight per stored failure."""
    if n_failures < 0:
        raise ValueError("n_failures must be >= 0")
    w_h = w_h_failed if failed_recently else w_h_normal
    return CompositionWeights(w_s=w_s, w_h=w_h, w_z=(w_z,) * n_failures)


def composed_epsilon(a: Array, k: int, bundle: ConditionBundle,
                     weights: CompositionWeights, nets: DenoiserSet) -> Array:
    """Evaluate the composed noise prediction at (a, k)."""
    if len(weights.w_z) != len(bundle.features):
        raise ValueError(
            f"{len(weights.w_z)} failure weights for {len(bundle.features)} features"
        )
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    coeff_a = 1.0 - weights.w_s - weights.w_h - sum(weights.w_z)
    out = np.zeros_like(a)
    if coeff_a != 0.0:
        out += coeff_a * nets.eps_a(a, None, k)
    if weights.w_s != 0.0:
        out += weights.w_s * nets.eps_s(a, bundle.state, k)
    if weights.w_h != 0.0:
        out += weights.w_h * nets.eps_h(a, bundle.history, k)
    for w, z in zip(weights.w_z, bundle.features):
        if w != 0.0:
            out += w * nets.eps_z(a, z, k)
    return out


def sample_composed(bundle: ConditionBundle, weights: CompositionWeights,
                    nets: DenoiserSet, sched: diffusion.NoiseSchedule,
                    rng: np.random.Generator, dim: int,
                    n: int = 1, clip: float | None = None) -> Array:
    """Full reverse chain driven by the composed prediction. Returns (n, dim)."""
    eps_fn = lambda a, k: composed_epsilon(a, k, bundle, weights, nets)
    return diffusion.sample(eps_fn, dim, sched, rng, n=n, clip=clip)
