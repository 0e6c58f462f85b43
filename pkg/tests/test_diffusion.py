import numpy as np
import pytest

from ccdp import diffusion
from ccdp.errors import NumericError, ShapeError

from .oracles import GaussianEps, cosine_alpha_bar


@pytest.fixture(scope="module")
def sched100():
    return diffusion.build_cosine_schedule(100)


def test_schedule_has_requested_length(sched100):
    assert sched100.n_steps == 100
    assert sched100.alpha_bars.shape == (101,)
    assert sched100.betas.shape == (101,)


def test_schedule_monotone_and_bounded(sched100):
    ab = sched100.alpha_bars
    assert ab[0] == 1.0
    assert np.all(np.diff(ab) < 0)
    assert np.all(ab[1:] > 0) and np.all(ab[1:] <= 1)
    assert np.all(sched100.betas[1:] > 0) and np.all(sched100.betas[1:] <= 0.999)
    assert np.all(sched100.sigmas >= 0)


def test_schedule_midpoint_matches_closed_form(sched100):
    # cumulative product telescopes back to f(50)/f(0)
    expected = cosine_alpha_bar(50, 100)
    assert abs(sched100.alpha_bars[50] - expected) / expected < 1e-9


def test_schedule_rejects_bad_step_count():
    with pytest.raises(ValueError):
        diffusion.build_cosine_schedule(0)
    with pytest.raises(ValueError):
        diffusion.build_cosine_schedule(-3)


def test_forward_noise_zero_eps_scales_input(sched100):
    a0 = np.array([0.5, -1.0, 0.25])
    out = diffusion.forward_noise(a0, 30, np.zeros(3), sched100)
    assert np.allclose(out, np.sqrt(sched100.alpha_bars[30]) * a0, atol=1e-15)


def test_forward_noise_first_step_stays_close(sched100):
    a0 = np.array([0.7, -0.2])
    eps = np.array([1.0, -1.0])
    out = diffusion.forward_noise(a0, 1, eps, sched100)
    bound = np.sqrt(1.0 - sched100.alpha_bars[1]) * np.abs(eps)
    assert np.all(np.abs(out - a0) <= bound + np.abs(a0) * 1e-3 + 1e-9)


def test_forward_noise_variance_matches_schedule(sched100):
    # Monte-Carlo check: per-coordinate variance is 1 - abar_k within 5%
    rng = np.random.default_rng(0)
    k = 40
    a0 = np.zeros((10_000, 2))
    eps = rng.standard_normal((10_000, 2))
    out = diffusion.forward_noise(a0, k, eps, sched100)
    target = 1.0 - sched100.alpha_bars[k]
    assert np.all(np.abs(out.var(axis=0) / target - 1.0) < 0.05)


def test_forward_noise_rejects_out_of_range_k(sched100):
    a0 = np.zeros(2)
    for k in (0, 101, -1):
        with pytest.raises(ValueError):
            diffusion.forward_noise(a0, k, a0, sched100)


def test_forward_noise_shape_mismatch(sched100):
    with pytest.raises(ShapeError):
        diffusion.forward_noise(np.zeros(2), 5, np.zeros(3), sched100)


def test_reverse_step_pure_rescale(sched100):
    a_k = np.array([0.4, -0.8])
    out = diffusion.reverse_step(a_k, np.zeros(2), 10, sched100, np.zeros(2))
    assert np.allclose(out, a_k / np.sqrt(sched100.alphas[10]), atol=1e-15)


def test_sample_final_step_adds_no_noise(sched100):
    # two chains with different trailing rng states at k=1 agree because the
    # last step draws no stochastic term
    sched = diffusion.build_cosine_schedule(1)
    eps_fn = lambda a, k: np.zeros_like(a)
    a1 = diffusion.sample(eps_fn, 3, sched, np.random.default_rng(5))
    a2 = diffusion.sample(eps_fn, 3, sched, np.random.default_rng(5))
    assert np.array_equal(a1, a2)
    # and matches the deterministic rescale of the initial draw
    start = np.random.default_rng(5).standard_normal((1, 3))
    assert np.allclose(a1, start / np.sqrt(sched.alphas[1]), atol=1e-15)


def test_sample_deterministic_given_seed(sched100):
    g = GaussianEps([0.3, -0.4], 0.2, sched100)
    a = diffusion.sample(g.eps_fn(), 2, sched100, np.random.default_rng(11), n=4)
    b = diffusion.sample(g.eps_fn(), 2, sched100, np.random.default_rng(11), n=4)
    assert np.array_equal(a, b)


def test_sample_executes_each_step_once(sched100):
    seen = []

    def eps_fn(a, k):
        seen.append(k)
        return np.zeros_like(a)

    diffusion.sample(eps_fn, 1, sched100, np.random.default_rng(0))
    assert seen == list(range(100, 0, -1))


def test_sample_rejects_nonfinite_eps(sched100):
    def eps_fn(a, k):
        return np.full_like(a, np.nan)

    with pytest.raises(NumericError):
        diffusion.sample(eps_fn, 2, sched100, np.random.default_rng(0))


def test_gaussian_chain_recovers_target_moments(sched100):
    # closed-form denoiser for N(mu, sigma^2): chain distribution matches
    # the target mean within 0.05 and variance within 5% over 10k runs
    mu, sigma = 0.7, 0.3
    g = GaussianEps([mu], sigma, sched100)
    out = diffusion.sample(g.eps_fn(), 1, sched100, np.random.default_rng(0), n=10_000)
    assert abs(out.mean() - mu) < 0.05
    assert abs(out.var() / sigma**2 - 1.0) < 0.05


def test_standard_normal_chain_moments(sched100):
    g = GaussianEps([0.0], 1.0, sched100)
    out = diffusion.sample(g.eps_fn(), 1, sched100, np.random.default_rng(1), n=10_000)
    assert abs(out.mean()) < 0.05
    assert abs(out.var() - 1.0) < 0.05


def _single_point_setup():
    sched = diffusion.build_cosine_schedule(50)
    a_star = np.array([0.4, -0.3])
    data = diffusion.ConditionedDataset(np.tile(a_star, (256, 1)), np.zeros((256, 0)), "none")
    return sched, a_star, data


def test_single_point_dataset_sampling_converges():
    sched, a_star, data = _single_point_setup()
    cfg = diffusion.TrainConfig(batch_size=64, epochs=300, lr=1e-3, hidden=(64, 64), seed=0)
    den, _ = diffusion.train_denoiser(data, cfg, sched)
    out = diffusion.sample(den.eps_fn(None), 2, sched, np.random.default_rng(0), n=1000)
    assert np.all(np.abs(out.mean(axis=0) - a_star) < 0.05)


def test_training_loss_non_increasing_early():
    sched, _, data = _single_point_setup()
    cfg = diffusion.TrainConfig(batch_size=64, epochs=5, lr=1e-3, hidden=(64, 64), seed=0)
    _, losses = diffusion.train_denoiser(data, cfg, sched)
    assert len(losses) == 5
    for prev, nxt in zip(losses, losses[1:]):
        assert nxt <= prev + 1e-9


def test_training_deterministic_per_seed():
    sched, _, data = _single_point_setup()
    cfg = diffusion.TrainConfig(batch_size=64, epochs=8, lr=1e-3, hidden=(32,), seed=3)
    d1, l1 = diffusion.train_denoiser(data, cfg, sched)
    d2, l2 = diffusion.train_denoiser(data, cfg, sched)
    assert l1 == l2
    for p, q in zip(d1.params.weights + d1.params.biases,
                    d2.params.weights + d2.params.biases):
        assert np.array_equal(p, q)


def test_condition_kinds_route_through_training():
    # the same machinery trains all four condition kinds, distinguished only
    # by the condition matrix width
    sched = diffusion.build_cosine_schedule(10)
    rng = np.random.default_rng(0)
    targets = rng.standard_normal((32, 2))
    cfg = diffusion.TrainConfig(batch_size=16, epochs=2, lr=1e-3, hidden=(16,), seed=0)
    for kind, width in (("none", 0), ("state", 3), ("history", 7), ("feature", 2)):
        data = diffusion.ConditionedDataset(targets, rng.standard_normal((32, width)), kind)
        den, _ = diffusion.train_denoiser(data, cfg, sched)
        assert den.cond_kind == kind
        assert den.cond_dim == width
        out = den.eps(targets[:4], rng.standard_normal((4, width)) if width else None, 5)
        assert out.shape == (4, 2)


def test_empty_dataset_rejected():
    sched = diffusion.build_cosine_schedule(10)
    with pytest.raises((ValueError, ShapeError)):
        data = diffusion.ConditionedDataset(np.zeros((0, 2)), np.zeros((0, 0)), "none")
        diffusion.train_denoiser(data, diffusion.TrainConfig(epochs=1), sched)


def test_denoiser_checkpoint_roundtrip(tmp_path):
    sched = diffusion.build_cosine_schedule(10)
    data = diffusion.ConditionedDataset(np.ones((8, 2)) * 0.2, np.zeros((8, 3)), "state")
    cfg = diffusion.TrainConfig(batch_size=8, epochs=2, hidden=(16,), seed=1)
    den, _ = diffusion.train_denoiser(data, cfg, sched)
    path = str(tmp_path / "den.ckpt")
    diffusion.save_denoiser(path, den, {"task": "toy"})
    loaded, meta = diffusion.load_denoiser(path)
    assert meta["task"] == "toy"
    assert loaded.cond_kind == "state"
    probe = np.array([[0.1, -0.2]])
    cond = np.array([[0.0, 0.5, 1.0]])
    assert np.array_equal(den.eps(probe, cond, 5), loaded.eps(probe, cond, 5))
