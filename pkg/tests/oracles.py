"""Independent reference implementations used to pin expected test values.

These deliberately avoid the library code paths they check: finite
differences instead of backprop, closed-form Gaussian noise predictors
instead of trained networks, double loops instead of vectorized filters.
"""

from __future__ import annotations

import numpy as np


def finite_diff_grads(loss_fn, params, h=1e-5):
    """Central finite differences of loss_fn over every parameter entry.

    params is an MlpParams; returns (weights_grads, biases_grads) as lists of
    arrays. loss_fn takes the (mutated) params and returns a float.
    """
    g_w = [np.zeros_like(w) for w in params.weights]
    g_b = [np.zeros_like(b) for b in params.biases]
    for arrs, grads in ((params.weights, g_w), (params.biases, g_b)):
        for arr, g in zip(arrs, grads):
            flat = arr.ravel()
            gf = g.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = loss_fn(params)
                flat[i] = orig - h
                dn = loss_fn(params)
                flat[i] = orig
                gf[i] = (up - dn) / (2 * h)
    return g_w, g_b


class GaussianEps:
    """Exact noise predictor for N(mu, sigma^2 I) data under a schedule.

    eps*(a, k) = sqrt(1-abar_k) * (a - sqrt(abar_k)*mu) / (abar_k*sigma^2 + 1 - abar_k),
    i.e. -sqrt(1-abar_k) times the score of the noised marginal.
    """

    def __init__(self, mu, sigma, sched):
        self.mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
        self.sigma = float(sigma)
        self.sched = sched
        self.target_dim = self.mu.shape[0]
        self.n_steps = sched.n_steps
        self.cond_dim = 0

    def eps(self, a, cond, k):
        abar = self.sched.alpha_bars[k]
        var = abar * self.sigma**2 + (1.0 - abar)
        return np.sqrt(1.0 - abar) * (np.atleast_2d(a) - np.sqrt(abar) * self.mu) / var

    def eps_fn(self, cond=None):
        return lambda a, k: self.eps(a, cond, k)


class ZeroEps:
    """Score-free expert (improper uniform base distribution)."""

    def __init__(self, dim, sched):
        self.target_dim = dim
        self.n_steps = sched.n_steps
        self.cond_dim = 0

    def eps(self, a, cond, k):
        return np.zeros_like(np.atleast_2d(a))


class GaussianMixtureEps:
    """Exact noise predictor for an equal-weight Gaussian mixture."""

    def __init__(self, centers, sigma, sched):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        self.sigma = float(sigma)
        self.sched = sched
        self.target_dim = self.centers.shape[1]
        self.n_steps = sched.n_steps
        self.cond_dim = 0

    def eps(self, a, cond, k):
        abar = self.sched.alpha_bars[k]
        v = abar * self.sigma**2 + (1.0 - abar)
        diff = np.atleast_2d(a)[:, None, :] - np.sqrt(abar) * self.centers[None, :, :]
        logw = -np.sum(diff**2, axis=2) / (2 * v)
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        w /= w.sum(axis=1, keepdims=True)
        score = -(w[:, :, None] * diff).sum(axis=1) / v
        return -np.sqrt(1.0 - abar) * score

    def eps_fn(self, cond=None):
        return lambda a, k: self.eps(a, cond, k)


def product_of_gaussians(mus, sigmas):
    """Mean and sigma of the normalized product of 1-D Gaussian densities."""
    precisions = [1.0 / s**2 for s in sigmas]
    var = 1.0 / sum(precisions)
    mean = var * sum(m * p for m, p in zip(mus, precisions))
    return mean, np.sqrt(var)


def brute_force_pairs(actions, states, features, delta_z, delta_x, mode="action", chunk_len=1):
    """O(n^2) double loop over ordered pairs; returns list of (i, j)."""
    n = len(actions)
    scale = float(chunk_len) if (mode == "action" and chunk_len > 1) else 1.0
    out = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            dz = features[j] - features[i]
            dx = states[j] - states[i]
            if (dz @ dz) / scale > delta_z and (dx @ dx) < delta_x:
                out.append((i, j))
    return out


def cosine_alpha_bar(k, n_steps, s=0.008):
    """Direct closed-form evaluation f(k)/f(0)."""
    f = lambda t: np.cos(((t / n_steps + s) / (1 + s)) * np.pi / 2) ** 2
    return f(k) / f(0)
