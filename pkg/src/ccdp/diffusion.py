"""DDPM machinery: cosine noise schedule, forward noising, reverse sampling
chain, and denoiser training.

Conventions: diffusion indices k run 1..K (k=0 is clean data). Schedule
arrays have length K+1 and are indexed by k directly, with the k=0 slot
holding the no-noise values. Actions/conditions are row vectors in
normalized [-1, 1] coordinates; batches are (n, dim).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError
from . import nn

Array = np.ndarray


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step diffusion coefficients.

    alpha_bars is strictly decreasing over k=1..K and alpha_bars[0] == 1.
    sigmas[k] scales the stochastic term of reverse step k; the k=1 step is
    taken noiseless by `sample`.
    """

    n_steps: int
    s: float
    betas: Array
    alphas: Array
    alpha_bars: Array
    sigmas: Array

    def __post_init__(self):
        k = self.n_steps
        if k < 1:
            raise ValueError("n_steps must be >= 1")
        for name in ("betas", "alphas", "alpha_bars", "sigmas"):
            if getattr(self, name).shape != (k + 1,):
                raise ShapeError(f"{name} must have length n_steps+1")
        if self.alpha_bars[0] != 1.0:
            raise ValueError("alpha_bars[0] must be 1")
        if np.any(np.diff(self.alpha_bars) >= 0):
            raise ValueError("alpha_bars must be strictly decreasing")


def build_cosine_schedule(n_steps: int, s: float = 0.008) -> NoiseSchedule:
    """Cosine schedule: abar(k) = f(k)/f(0), f(k) = cos^2(((k/K + s)/(1+s)) * pi/2).

    Betas are clipped to <= 0.999 and the cumulative products recomputed from
    the clipped betas, so the clipping only bites at the very last steps.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    k = np.arange(n_steps + 1, dtype=np.float64)
    f = np.cos(((k / n_steps + s) / (1.0 + s)) * (np.pi / 2.0)) ** 2
    betas = np.zeros(n_steps + 1)
    betas[1:] = np.minimum(1.0 - f[1:] / f[:-1], 0.999)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    # sigma_k^2 = beta_k: reproduces unit-variance data exactly through the
    # reverse chain, where the (1-abar_{k-1})/(1-abar_k)*beta_k convention
    # under-disperses by several percent.
    sigmas = np.zeros(n_steps + 1)
    sigmas[1:] = np.sqrt(betas[1:])
    return NoiseSchedule(n_steps, s, betas, alphas, alpha_bars, sigmas)


def _check_k(k: int | Array, n_steps: int) -> None:
    k_arr = np.asarray(k)
    if np.any(k_arr < 1) or np.any(k_arr > n_steps):
        raise ValueError(f"k must be in 1..{n_steps}")


def forward_noise(a0: Array, k, eps: Array, sched: NoiseSchedule) -> Array:
    """q-sample: sqrt(abar_k) * a0 + sqrt(1 - abar_k) * eps.

    k may be a scalar, or an int array with one entry per row of a 2-D a0.
    """
    _check_k(k, sched.n_steps)
    a0 = np.asarray(a0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if a0.shape != eps.shape:
        raise ShapeError(f"a0 {a0.shape} and eps {eps.shape} differ")
    abar = sched.alpha_bars[np.asarray(k)]
    if np.ndim(abar) == 1:
        if a0.ndim != 2 or abar.shape[0] != a0.shape[0]:
            raise ShapeError("per-row k requires matching 2-D a0")
        abar = abar[:, None]
    return np.sqrt(abar) * a0 + np.sqrt(1.0 - abar) * eps


def reverse_step(a_k: Array, eps_hat: Array, k: int, sched: NoiseSchedule, noise: Array) -> Array:
    """One reverse update: (a_k - beta_k/sqrt(1-abar_k) * eps_hat)/sqrt(alpha_k) + sigma_k * noise."""
    _check_k(k, sched.n_steps)
    a_k = np.asarray(a_k, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if a_k.shape != eps_hat.shape:
        raise ShapeError(f"a_k {a_k.shape} and eps_hat {eps_hat.shape} differ")
    beta = sched.betas[k]
    abar = sched.alpha_bars[k]
    mean = (a_k - (beta / np.sqrt(1.0 - abar)) * eps_hat) / np.sqrt(sched.alphas[k])
    return mean + sched.sigmas[k] * noise


def sample(eps_fn, dim: int, sched: NoiseSchedule, rng: np.random.Generator,
           n: int = 1, clip: float | None = None) -> Array:
    """Run the full K-step reverse chain from standard Gaussian noise.

    eps_fn(a, k) maps an (n, dim) batch and scalar k to predicted noise.
    The final step (k=1) adds no stochastic term. Returns (n, dim).
    `clip` optionally boxes the iterate after every step (stabilizer for
    composed predictors; leave None for the bare chain).
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    a = rng.standard_normal((n, dim))
    for k in range(sched.n_steps, 0, -1):
        eps_hat = np.asarray(eps_fn(a, k), dtype=np.float64)
        if eps_hat.shape != a.shape:
            raise ShapeError(f"eps_fn returned {eps_hat.shape}, expected {a.shape}")
        if not np.isfinite(eps_hat).all():
            raise NumericError(f"eps_fn returned non-finite values at k={k}")
        noise = rng.standard_normal((n, dim)) if k > 1 else np.zeros((n, dim))
        a = reverse_step(a, eps_hat, k, sched, noise)
        if clip is not None:
            np.clip(a, -clip, clip, out=a)
    return a


def sample_one(eps_fn, dim: int, sched: NoiseSchedule, rng: np.random.Generator,
               clip: float | None = None) -> Array:
    """Single-vector convenience wrapper around `sample`."""
    return sample(eps_fn, dim, sched, rng, n=1, clip=clip)[0]


# ---------------------------------------------------------------------------
# training

COND_KINDS = ("none", "state", "history", "feature")


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 100
    lr: float = 1e-3
    hidden: tuple[int, ...] = (256, 512, 1024)
    seed: int = 0
    embed_dim: int = 16
    # step the learning rate down once late in training; final-phase sharpness
    # decides how tightly samples sit on the demo modes
    lr_decay_at: float = 0.8
    lr_decay: float = 0.1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.lr_decay_at <= 1.0 or self.lr_decay <= 0:
            raise ValueError("bad lr decay settings")


@dataclass
class ConditionedDataset:
    """Targets plus a fixed-kind condition matrix (possibly zero-width)."""

    targets: Array
    conds: Array
    kind: str

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.float64)
        self.conds = np.asarray(self.conds, dtype=np.float64)
        if self.kind not in COND_KINDS:
            raise ValueError(f"unknown condition kind {self.kind!r}")
        if self.targets.ndim != 2:
            raise ShapeError("targets must be (n, dim)")
        if self.conds.ndim != 2 or self.conds.shape[0] != self.targets.shape[0]:
            raise ShapeError("conds must be (n, cond_dim) matching targets")
        if self.kind == "none" and self.conds.shape[1] != 0:
            raise ValueError("unconditional dataset must have zero-width conds")

    def __len__(self) -> int:
        return self.targets.shape[0]


@dataclass
class Denoiser:
    """A trained noise predictor for one condition kind."""

    params: nn.MlpParams
    n_steps: int
    target_dim: int
    cond_dim: int
    cond_kind: str
    embed_dim: int = 16

    def eps(self, a: Array, cond: Array | None, k) -> Array:
        """Predict noise for (n, target_dim) batch a at step(s) k."""
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        rows = a.shape[0]
        if cond is None:
            cond = np.zeros((rows, 0))
        cond = np.atleast_2d(np.asarray(cond, dtype=np.float64))
        if cond.shape[0] == 1 and rows > 1:
            cond = np.broadcast_to(cond, (rows, cond.shape[1]))
        if cond.shape[1] != self.cond_dim:
            raise ShapeError(f"condition width {cond.shape[1]}, expected {self.cond_dim}")
        emb = nn.step_embedding(k, self.n_steps, self.embed_dim)
        if emb.ndim == 1:
            emb = np.broadcast_to(emb, (rows, emb.shape[0]))
        inp = np.concatenate([a, cond, emb], axis=1)
        return nn.mlp_forward(self.params, inp)

    def eps_fn(self, cond: Array | None):
        """Bind the condition, yielding the (a, k) -> eps closure `sample` wants."""
        return lambda a, k: self.eps(a, cond, k)


def train_denoiser(data: ConditionedDataset, cfg: TrainConfig, sched: NoiseSchedule) -> tuple[Denoiser, list[float]]:
    """Fit a noise predictor by MSE regression on q-sampled noisy targets.

    k is drawn uniformly from 1..K and the noise from a standard Gaussian,
    both from a generator seeded by cfg.seed, so training is deterministic.
    Returns the denoiser and per-epoch mean losses.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    target_dim = data.targets.shape[1]
    cond_dim = data.conds.shape[1]
    rng = np.random.default_rng(cfg.seed)
    sizes = [target_dim + cond_dim + cfg.embed_dim, *cfg.hidden, target_dim]
    params = nn.init_mlp(sizes, rng)
    state = nn.adam_init(params, lr=cfg.lr)

    n = len(data)
    losses: list[float] = []
    decay_epoch = int(cfg.epochs * cfg.lr_decay_at)
    for epoch in range(cfg.epochs):
        if epoch == decay_epoch and epoch > 0:
            state.lr = cfg.lr * cfg.lr_decay
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            a0 = data.targets[idx]
            k = rng.integers(1, sched.n_steps + 1, size=idx.size)
            eps = rng.standard_normal(a0.shape)
            noisy = forward_noise(a0, k, eps, sched)
            emb = nn.step_embedding(k, sched.n_steps, cfg.embed_dim)
            inp = np.concatenate([noisy, data.conds[idx], emb], axis=1)
            loss, grads = nn.mlp_loss_grad(params, inp, eps)
            params, state = nn.adam_step(params, grads, state)
            epoch_loss += loss
            n_batches += 1
        losses.append(epoch_loss / n_batches)

    den = Denoiser(params, sched.n_steps, target_dim, cond_dim, data.kind, cfg.embed_dim)
    return den, losses


def save_denoiser(path: str, den: Denoiser, extra_meta: dict | None = None) -> None:
    meta = {
        "n_steps": den.n_steps,
        "target_dim": den.target_dim,
        "cond_dim": den.cond_dim,
        "cond_kind": den.cond_kind,
        "embed_dim": den.embed_dim,
    }
    meta.update(extra_meta or {})
    nn.save_checkpoint(path, den.params, meta)


def load_denoiser(path: str) -> tuple[Denoiser, dict]:
    params, meta = nn.load_checkpoint(path)
    den = Denoiser(
        params,
        n_steps=int(meta["n_steps"]),
        target_dim=int(meta["target_dim"]),
        cond_dim=int(meta["cond_dim"]),
        cond_kind=meta["cond_kind"],
        embed_dim=int(meta["embed_dim"]),
    )
    return den, meta
