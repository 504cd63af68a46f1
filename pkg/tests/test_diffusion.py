import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegcast import diffusion as D


def test_single_step_schedule():
    s = D.build_schedule(1, 0.05, 0.05)
    assert s.alpha_bar[0] == pytest.approx(0.95)


@pytest.mark.parametrize("T,lo,hi", [(10, 1e-3, 0.2), (1000, 1e-4, 0.02), (5, 0.1, 0.1)])
def test_schedule_strictly_decreasing(T, lo, hi):
    ab = D.build_schedule(T, lo, hi).alpha_bar
    assert np.all(np.diff(ab) < 0)
    assert np.all((ab > 0) & (ab <= 1))
    assert ab[0] >= 1 - hi


def test_default_schedule_endpoint():
    # direct product of (1 - beta) over the linear ramp
    betas = [1e-4 + (0.02 - 1e-4) * k / 999 for k in range(1000)]
    expected = math.prod(1 - b for b in betas)
    ab = D.build_schedule(1000, 1e-4, 0.02).alpha_bar
    assert ab[-1] == pytest.approx(expected, rel=1e-10)
    assert ab[-1] < 1e-4


@pytest.mark.parametrize("args", [(0, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 1e-4, 1.0)])
def test_schedule_rejects_bad_parameters(args):
    with pytest.raises(ValueError):
        D.build_schedule(*args)


def test_mask_layout_and_validation():
    m = D.completion_mask(4, 3, 1)
    assert m[:1].sum() == 0 and m[1:].all()
    with pytest.raises(ValueError):
        D.validate_mask(np.array([[True, False], [True, True]]))
    with pytest.raises(ValueError):
        D.validate_mask(np.array([[True, True], [False, False]]))


class _Sched:
    """Minimal schedule stub with a chosen alpha_bar."""

    def __init__(self, values):
        self.alpha_bar = np.asarray(values, dtype=float)
        self.T = len(values)

    def abar(self, t):
        return np.concatenate([[1.0], self.alpha_bar])[np.asarray(t)]


def test_forward_noise_no_noise_retained():
    x0 = np.arange(4.0).reshape(2, 2)
    eps = np.ones((2, 2))
    out = D.forward_noise(x0, 1, eps, np.ones((2, 2), bool), _Sched([1.0]))
    np.testing.assert_array_equal(out, x0)


def test_forward_noise_empty_mask():
    x0 = np.arange(4.0).reshape(2, 2)
    out = D.forward_noise(x0, 7, np.full((2, 2), 3.0), np.zeros((2, 2), bool), D.build_schedule(10))
    np.testing.assert_array_equal(out, x0)


def test_forward_noise_direct_evaluation():
    x0 = np.array([[0.2, -0.4], [1.0, 0.6]])
    eps = np.array([[0.5, -1.0], [2.0, 0.0]])
    out = D.forward_noise(x0, 1, eps, np.ones((2, 2), bool), _Sched([0.25]))
    np.testing.assert_allclose(out, 0.5 * x0 + math.sqrt(0.75) * eps)


def test_forward_noise_shape_mismatch():
    with pytest.raises(ValueError):
        D.forward_noise(np.zeros((2, 2)), 1, np.zeros((3, 2)), np.ones((2, 2), bool), D.build_schedule(3))


def test_ddim_step_identity_when_alpha_unchanged():
    sched = _Sched([0.6, 0.6])
    x = np.array([[0.3, -1.2]])
    e = np.array([[0.7, 0.1]])
    np.testing.assert_allclose(D.ddim_step(x, e, 2, 1, sched, eta=0.0), x, atol=1e-15)


def test_ddim_sigma_eta_one_is_ddpm_posterior_std():
    sched = D.build_schedule(100, 1e-3, 0.05)
    for t in (2, 10, 57, 100):
        ab_t, ab_p = sched.alpha_bar[t - 1], sched.alpha_bar[t - 2]
        beta_t = 1 - ab_t / ab_p
        posterior_var = (1 - ab_p) / (1 - ab_t) * beta_t
        assert D.ddim_sigma(sched, t, t - 1, 1.0) == pytest.approx(math.sqrt(posterior_var), rel=1e-12)
        assert D.ddim_sigma(sched, t, t - 1, 0.0) == 0.0


def test_ddim_step_rejects_oversized_sigma():
    sched = D.build_schedule(10, 0.01, 0.3)
    with pytest.raises(ValueError):
        D.ddim_step(np.zeros(3), np.zeros(3), 5, 4, sched, eta=5.0, noise=np.zeros(3))


def test_ddim_eta0_deterministic():
    sched = D.build_schedule(50)
    x = np.random.default_rng(0).normal(size=(4, 4))
    e = np.random.default_rng(1).normal(size=(4, 4))
    assert np.array_equal(D.ddim_step(x, e, 30, 20, sched), D.ddim_step(x, e, 30, 20, sched))


def _oracle_chain(x0, eps, mask, sched, steps):
    x = D.forward_noise(x0, sched.T, eps, mask, sched)
    ts = list(D.inference_timesteps(sched.T, steps)) + [0]
    for t, tp in zip(ts[:-1], ts[1:]):
        x = np.where(mask, D.ddim_step(x, eps, int(t), int(tp), sched), x0)
    return x


@settings(max_examples=50, deadline=None)
@given(
    st.integers(0, 2**31 - 1),
    st.integers(2, 400),
    st.floats(1e-4, 5e-3),
    st.floats(5e-3, 0.05),
    st.integers(0, 7),
)
def test_oracle_noise_chain_recovers_x0(seed, T, lo, hi, observed_rows):
    rng = np.random.default_rng(seed)
    sched = D.build_schedule(T, lo, hi)
    x0 = rng.uniform(-1, 1, (8, 5))
    eps = rng.standard_normal((8, 5))
    mask = D.completion_mask(8, 5, observed_rows)
    out = _oracle_chain(x0, eps, mask, sched, min(T, 25))
    assert np.max(np.abs(out - x0)) <= 1e-5


def test_inference_timesteps():
    ts = D.inference_timesteps(1000, 50)
    assert ts[0] == 1000 and ts[-1] == 1 and len(ts) == 50
    assert np.all(np.diff(ts) < 0)
    assert list(D.inference_timesteps(10, 1)) == [10]
    with pytest.raises(ValueError):
        D.inference_timesteps(10, 11)


def test_training_loss_oracle_is_zero():
    sched = D.build_schedule(100)
    mask = D.completion_mask(4, 4, 2)
    x0 = np.random.default_rng(3).random((4, 4))
    x0m = D.to_model_space(x0)

    def oracle(x_t, t):
        ab = sched.abar(t)
        return np.where(mask, (x_t - math.sqrt(ab) * x0m) / math.sqrt(1 - ab), 0.0)

    assert D.training_loss(oracle, x0, mask, sched, np.random.default_rng(0)) == pytest.approx(0.0, abs=1e-20)


def test_training_loss_zero_model_monte_carlo():
    sched = D.build_schedule(100)
    mask = D.completion_mask(4, 4, 2)
    x0 = np.full((4, 4), 0.5)
    seen = []

    def zeros(x_t, t):
        seen.append(x_t)
        return np.zeros_like(x_t)

    rng = np.random.default_rng(5)
    losses = [D.training_loss(zeros, x0, mask, sched, rng) for _ in range(10_000)]
    assert np.mean(losses) == pytest.approx(1.0, abs=0.05)
    # observed rows reach the model clean
    assert all(np.array_equal(x[:2], np.zeros((2, 4))) for x in seen[:50])


def test_training_loss_rejects_empty_mask():
    with pytest.raises(ValueError, match="nothing to learn"):
        D.training_loss(lambda x, t: x, np.zeros((2, 2)), np.zeros((2, 2), bool), D.build_schedule(5), 0)


def test_complete_image_empty_mask_skips_model():
    calls = []
    img = np.random.default_rng(0).random((4, 4))
    out = D.complete_image(lambda x, t: calls.append(1), img, np.zeros((4, 4), bool), D.build_schedule(20), 5)
    assert not calls
    np.testing.assert_array_equal(out, img)


def test_complete_image_rejects_too_many_steps():
    with pytest.raises(ValueError):
        D.complete_image(lambda x, t: np.zeros_like(x), np.zeros((4, 4)), D.completion_mask(4, 4, 2),
                         D.build_schedule(10), num_steps=11)


def _x0_oracle(x0, sched):
    x0m = D.to_model_space(x0)

    def model(x_t, t):
        ab = sched.abar(t).reshape((-1,) + (1,) * (x_t.ndim - 1)) if np.ndim(t) else sched.abar(t)
        return (x_t - np.sqrt(ab) * x0m) / np.sqrt(1 - ab)

    return model


@pytest.mark.parametrize("batch", [False, True])
def test_complete_image_oracle_inversion(batch):
    rng = np.random.default_rng(11)
    sched = D.build_schedule(1000)
    shape = (3, 16, 16) if batch else (16, 16)
    x0 = rng.random(shape)
    mask = D.completion_mask(16, 16, 8)
    observed = np.where(mask, 123.0, x0)
    out = D.complete_image(_x0_oracle(x0, sched), observed, mask, sched, num_steps=50, eta=0.0, rng=rng)
    assert np.max(np.abs(out - x0)[..., mask]) <= 1e-4
    np.testing.assert_array_equal(out[..., ~mask], observed[..., ~mask])


def test_complete_image_keeps_observed_rows_with_noisy_model():
    rng = np.random.default_rng(2)
    sched = D.build_schedule(200)
    img = rng.uniform(-0.2, 1.2, (8, 6))
    mask = D.completion_mask(8, 6, 3)
    out = D.complete_image(lambda x, t: rng.normal(size=x.shape) * 3, img, mask, sched, 10, eta=0.5, rng=rng)
    np.testing.assert_array_equal(out[~mask], img[~mask])
    assert out[mask].min() >= 0 and out[mask].max() <= 1
