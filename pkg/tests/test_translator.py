import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentcond.diffcore import RngStream
from latentcond.diffcore.tensor import value_and_grad
from latentcond.errors import DegenerateInputError, ShapeError
from latentcond.models import PairDataset
from latentcond.oracle import finite_diff_grad, gaussian_mle_closed_form, relative_error
from latentcond.translator import (
    GmmParams,
    TranslatorTrainConfig,
    gmm_log_density,
    gmm_mean,
    gmm_sample,
    init_translator,
    nll_loss_fn,
    slerp,
    train_deterministic_translator,
    train_translator,
    translator_forward,
    translator_nll,
    translator_predict,
)

SMALL = TranslatorTrainConfig(hidden=6, n_components=3)


def small_translator(seed=0, cond_dim=4, latent_dim=2, **kw):
    return init_translator(cond_dim, latent_dim, replace(SMALL, **kw), RngStream(seed))


def random_gmm(rng, K, d):
    w = np.exp(rng.normal(size=K))
    return GmmParams(rng.normal(size=(K, d)) * 2, w / w.sum(), np.exp(rng.normal(size=d) * 0.3))


def normal_pdf(z, mu, var):
    return math.exp(-0.5 * (z - mu) ** 2 / var) / math.sqrt(2 * math.pi * var)


# ---------------------------------------------------------------- forward


def test_zero_weight_head_gives_uniform_weights():
    tr = small_translator()
    tr.arrays["Ww"][:] = 0.0
    tr.arrays["bw"][:] = 0.0
    np.testing.assert_allclose(translator_forward(tr, np.ones(4)).weights, np.full(3, 1 / 3), rtol=1e-15)


def test_fresh_sigma_is_one_hundredth():
    g = translator_forward(small_translator(), np.ones(4))
    np.testing.assert_allclose(g.sigma, 0.01, rtol=1e-12)
    assert np.all(g.sigma > 1e-6)


def test_forward_is_deterministic_and_batched():
    tr = small_translator()
    c = RngStream(1).normal(size=(5, 4))
    a, b = translator_forward(tr, c[2]), translator_forward(tr, c)
    np.testing.assert_array_equal(a.means, translator_forward(tr, c[2]).means)
    np.testing.assert_allclose(b.row(2).means, a.means, rtol=1e-14)
    np.testing.assert_allclose(b.weights.sum(1), 1.0, atol=1e-12)


def test_weight_softmax_survives_large_offsets():
    tr = small_translator()
    c = np.ones(4)
    before = translator_forward(tr, c).weights
    tr.arrays["bw"] += 1000.0
    np.testing.assert_allclose(translator_forward(tr, c).weights, before, rtol=1e-13)


def test_condition_shape_is_checked():
    with pytest.raises(ShapeError):
        translator_forward(small_translator(), np.ones(3))


def test_regression_head_is_deterministic():
    dt = init_translator(4, 2, SMALL, RngStream(2), deterministic=True)
    c = np.array([0.1, 0.2, -0.3, 0.4])
    assert translator_predict(dt, c).tobytes() == translator_predict(dt, c.copy()).tobytes()
    with pytest.raises(ValueError):
        translator_forward(dt, c)


# ---------------------------------------------------------------- density


def test_standard_normal_log_density_at_zero():
    g = GmmParams(np.zeros((1, 1)), np.ones(1), np.ones(1))
    assert gmm_log_density(g, np.zeros(1)) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)


def test_two_component_density_by_hand():
    g = GmmParams(np.array([[-1.0], [1.0]]), np.array([0.5, 0.5]), np.array([0.5]))
    direct = math.log(0.5 * normal_pdf(0, -1, 0.25) + 0.5 * normal_pdf(0, 1, 0.25))
    assert gmm_log_density(g, np.zeros(1)) == pytest.approx(direct, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-50, 50))
def test_density_is_translation_invariant(seed, shift):
    rng = RngStream(seed)
    g = random_gmm(rng, 3, 2)
    z = rng.normal(size=2)
    moved = GmmParams(g.means + shift, g.weights, g.sigma)
    assert gmm_log_density(moved, z + shift) == pytest.approx(gmm_log_density(g, z), abs=1e-9)


@pytest.mark.parametrize("d", [1, 2])
def test_density_integrates_to_one(d):
    rng = RngStream(10 + d)
    g = random_gmm(rng, 3, d)
    lo = (g.means - 8 * g.sigma).min(0)
    hi = (g.means + 8 * g.sigma).max(0)
    n = 4000 if d == 1 else 400
    axes = [np.linspace(lo[i], hi[i], n) for i in range(d)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    cell = np.prod([(hi[i] - lo[i]) / (n - 1) for i in range(d)])
    assert np.exp(gmm_log_density(g, pts)).sum() * cell == pytest.approx(1.0, abs=1e-3)


def test_density_shape_mismatch():
    with pytest.raises(ShapeError):
        gmm_log_density(GmmParams(np.zeros((2, 3)), np.full(2, 0.5), np.ones(3)), np.zeros(2))


# ---------------------------------------------------------------- sampling and mean


def test_vanishing_sigma_returns_the_mean():
    g = GmmParams(np.array([[1.5, -2.0]]), np.ones(1), np.zeros(2))
    np.testing.assert_array_equal(gmm_sample(g, RngStream(0)), [1.5, -2.0])


def test_sample_mean_and_component_frequencies():
    rng = RngStream(3)
    g = random_gmm(rng, 4, 2)
    n = 100_000
    z = gmm_sample(g, RngStream(4), n)
    spread = np.sqrt(((g.means - gmm_mean(g)) ** 2 * g.weights[:, None]).sum(0) + g.sigma**2)
    assert np.all(np.abs(z.mean(0) - gmm_mean(g)) < 5 * spread / math.sqrt(n))
    narrow = GmmParams(np.arange(4.0)[:, None] * 100, g.weights, np.ones(1))
    k = np.round(gmm_sample(narrow, RngStream(5), n)[:, 0] / 100).astype(int)
    np.testing.assert_allclose(np.bincount(k, minlength=4) / n, g.weights, atol=0.01)


def test_mean_examples():
    g = GmmParams(np.array([[-1.0], [1.0]]), np.array([0.5, 0.5]), np.ones(1))
    assert gmm_mean(g)[0] == 0.0
    one = GmmParams(np.array([[0.3, 0.4]]), np.ones(1), np.ones(2))
    np.testing.assert_array_equal(gmm_mean(one), [0.3, 0.4])


def test_mean_is_weighted_sum_and_matches_a_million_draws():
    rng = RngStream(6)
    g = random_gmm(rng, 5, 3)
    np.testing.assert_allclose(gmm_mean(g), (g.weights[:, None] * g.means).sum(0), atol=1e-12)
    z = gmm_sample(g, RngStream(7), 1_000_000)
    sd = z.std(0)
    assert np.all(np.abs(z.mean(0) - gmm_mean(g)) < 5 * sd / 1000)


def test_batched_sampling_shapes():
    tr = small_translator()
    g = translator_forward(tr, RngStream(1).normal(size=(6, 4)))
    assert gmm_sample(g, RngStream(2), 5).shape == (6, 5, 2)
    assert gmm_sample(g, RngStream(2)).shape == (6, 2)


# ---------------------------------------------------------------- nll


def test_tight_gaussian_nll_closed_form():
    tr = small_translator(n_components=1, latent_dim=2)
    c = np.ones(4)
    z = translator_forward(tr, c).means[0]
    expected = -2 * (-0.5 * math.log(2 * math.pi * (0.01) ** 2))
    assert translator_nll(tr, z, c) == pytest.approx(expected, rel=1e-9)
    assert translator_nll(tr, z, c, loss_scale=1e-4) == pytest.approx(expected * 1e-4, rel=1e-9)


def test_nll_is_a_batch_mean_and_scales_exactly():
    tr = small_translator()
    rng = RngStream(8)
    z, c = rng.normal(size=(7, 2)) * 0.01, rng.normal(size=(7, 4))
    base = translator_nll(tr, z, c)
    assert translator_nll(tr, np.repeat(z, 2, 0), np.repeat(c, 2, 0)) == pytest.approx(base, rel=1e-13)
    assert translator_nll(tr, z, c, loss_scale=1e-4) == pytest.approx(base * 1e-4, rel=1e-13)


def test_nll_rejects_empty_and_misaligned_batches():
    tr = small_translator()
    with pytest.raises(ValueError):
        translator_nll(tr, np.zeros((0, 2)), np.zeros((0, 4)))
    with pytest.raises(ShapeError):
        translator_nll(tr, np.zeros((3, 2)), np.zeros((2, 4)))


def test_nll_gradient_matches_finite_differences():
    tr = small_translator(sigma_init=0.5)
    rng = RngStream(9)
    z, c = rng.normal(size=(5, 2)), rng.normal(size=(5, 4))
    loss = nll_loss_fn(tr, 1.0)
    ps = tr.ordered()
    _, grads = value_and_grad(lambda *a: loss(a, z, c), *ps)
    for i in range(len(ps)):
        def fn(x, i=i):
            q = list(ps)
            q[i] = x
            return loss(q, z, c).data
        assert relative_error(grads[i], finite_diff_grad(fn, ps[i])) < 1e-4, tr.names[i]


# ---------------------------------------------------------------- training


def mle_problem():
    z = 2.0 + np.array([0.5, 1.5]) * RngStream(0).normal(size=(2000, 2))
    return PairDataset(z, np.tile([1.0, 0.0], (2000, 1)))


MLE_CFG = TranslatorTrainConfig(epochs=20, batch_size=64, lr=1e-2, loss_scale=1.0, n_components=1,
                                hidden=16, sigma_init=1.0)


def test_single_gaussian_recovers_closed_form_mle():
    pairs = mle_problem()
    g = translator_forward(train_translator(MLE_CFG, pairs, RngStream(1)), np.array([1.0, 0.0]))
    mean, var = gaussian_mle_closed_form(pairs.z)
    assert np.all(np.abs(g.means[0] / mean - 1) < 0.05)
    assert np.all(np.abs(g.sigma**2 / var - 1) < 0.05)


def test_training_is_seed_deterministic():
    pairs = mle_problem()
    cfg = replace(MLE_CFG, epochs=2)
    a = train_translator(cfg, pairs, RngStream(3))
    b = train_translator(cfg, pairs, RngStream(3))
    assert a.equals(b) and a.history == b.history


def test_desk_translator_nll_decreases(desk):
    hist = desk.translator.history
    assert len(hist) == desk.cfg.translator.epochs
    assert hist[-1] <= hist[0]


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        train_translator(SMALL, PairDataset(np.zeros((0, 2)), np.zeros((0, 4))), RngStream(0))


def test_regressor_recovers_affine_map():
    rng = RngStream(4)
    A, b = rng.normal(size=(3, 2)), rng.normal(size=2)
    c = rng.normal(size=(3000, 3))
    cfg = TranslatorTrainConfig(epochs=40, batch_size=32, lr=3e-3, loss_scale=1.0, hidden=32)
    dt = train_deterministic_translator(cfg, PairDataset(c @ A + b, c), RngStream(5))
    held = rng.normal(size=(500, 3))
    err = ((translator_predict(dt, held) - (held @ A + b)) ** 2).sum(1).mean()
    assert err <= 1e-3


def test_regressor_learns_conditional_means(desk):
    # many latents share each one-hot condition: the L2 optimum is the class-conditional mean
    fx = desk.fixture
    z = fx.prior.sample(RngStream(6), 8000)
    labels = fx.classifier(fx.generator(z)).argmax(1)
    c = np.eye(8)[labels]
    cfg = TranslatorTrainConfig(epochs=15, batch_size=64, lr=3e-3, loss_scale=1.0, hidden=32)
    dt = train_deterministic_translator(cfg, PairDataset(z, c), RngStream(7))
    for k in range(8):
        sel = labels == k
        cond_mean = z[sel].mean(0)
        tol = 4 * z[sel].std(0).max() / math.sqrt(sel.sum())
        assert np.abs(translator_predict(dt, np.eye(8)[k]) - cond_mean).max() < tol, k


# ---------------------------------------------------------------- slerp


def test_slerp_endpoints_and_midpoint():
    c1, c2 = np.array([3.0, 0.0, 0.0]), np.array([0.0, 0.5, 0.0])
    np.testing.assert_allclose(slerp(c1, c2, 0.0), [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(slerp(c1, c2, 1.0), [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(slerp(c1, c2, 0.5), np.array([1, 1, 0]) / math.sqrt(2), atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1))
def test_slerp_angle_is_linear_in_t(seed, t):
    rng = RngStream(seed)
    a, b = rng.normal(size=5), rng.normal(size=5)
    ua, ub = a / np.linalg.norm(a), b / np.linalg.norm(b)
    theta = math.acos(np.clip(ua @ ub, -1, 1))
    out = slerp(a, b, t)
    assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-12)
    assert math.acos(np.clip(out @ ua, -1, 1)) == pytest.approx(t * theta, abs=1e-6)


def test_slerp_degenerate_inputs():
    with pytest.raises(DegenerateInputError):
        slerp(np.zeros(2), np.ones(2), 0.3)
    with pytest.raises(DegenerateInputError):
        slerp(np.array([1.0, 0.0]), np.array([-2.0, 0.0]), 0.3)
