import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentcond.diffcore import Mlp, RngStream, init_mlp
from latentcond.energy import (
    AugmentedEnergy,
    BayesEnergy,
    ComposedEnergy,
    PerturbationFamily,
    energy_eval,
    energy_grad,
    energy_value_and_grad,
    u_cross_entropy,
    u_neg_cosine,
)
from latentcond.errors import DegenerateInputError, ShapeError
from latentcond.models import AuxModel, Generator, Prior
from latentcond.oracle import finite_diff_grad, relative_error

vec = st.lists(st.floats(-5, 5), min_size=3, max_size=3).map(np.array).filter(lambda v: np.linalg.norm(v) > 1e-3)


def identity_G(d=1):
    return Generator(Mlp((np.eye(d),), (np.zeros(d),), ("identity",)))


def logistic(a=1.5, b=0.5):
    """Two-class softmax classifier on a scalar input: p(class 0 | x) = sigmoid(2 (a x + b))."""
    return AuxModel("classifier", Mlp((np.array([[a, -a]]),), (np.array([b, -b]),), ("identity",)))


def random_models(seed, kind="classifier", d_z=3, d_x=4, k=5):
    rng = RngStream(seed)
    G = Generator(init_mlp([d_z, 8, d_x], ("tanh", "identity"), rng, gain=2.0))
    f = AuxModel(kind, init_mlp([d_x, 8, k], ("tanh", "identity"), rng, gain=2.0))
    return G, f, rng


# ---------------------------------------------------------------- discrepancies


def test_cross_entropy_zero_at_hot_index():
    assert u_cross_entropy(np.array([0.0, 1.0, 0.0]), np.array([0.0, 1.0, 0.0])) == 0.0


def test_cross_entropy_uniform_over_ten():
    assert u_cross_entropy(np.full(10, 0.1), np.eye(10)[3]) == pytest.approx(math.log(10), abs=1e-12)


def test_cross_entropy_soft_target():
    expected = -(0.5 * math.log(0.9) + 0.5 * math.log(0.1))
    assert u_cross_entropy(np.array([0.9, 0.1]), np.array([0.5, 0.5])) == pytest.approx(expected, rel=1e-14)


def test_cross_entropy_clamps_zero_probability():
    assert u_cross_entropy(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(-math.log(1e-12))


@pytest.mark.parametrize("pred,target", [([0.5, 0.6], [1.0, 0.0]), ([1.0, 0.0], [0.7, 0.2]), ([1.2, -0.2], [1, 0])])
def test_cross_entropy_rejects_non_simplex(pred, target):
    with pytest.raises(DegenerateInputError):
        u_cross_entropy(np.array(pred, float), np.array(target, float))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6), st.integers(0, 5))
def test_cross_entropy_nonnegative_for_one_hot(raw, hot):
    p = np.array(raw) / np.sum(raw)
    c = np.eye(len(p))[hot % len(p)]
    assert u_cross_entropy(p, c) >= 0


def test_neg_cosine_examples():
    c = np.array([1.0, -2.0, 0.5])
    assert u_neg_cosine(c, c) == pytest.approx(-1.0, abs=1e-15)
    assert u_neg_cosine(np.array([1.0, 0.0]), np.array([0.0, 3.0])) == 0.0


@settings(max_examples=50, deadline=None)
@given(vec, vec, st.floats(0.01, 100))
def test_neg_cosine_scale_invariant_symmetric_and_bounded(a, b, s):
    v = u_neg_cosine(a, b)
    assert -1 - 1e-12 <= v <= 1 + 1e-12
    assert u_neg_cosine(s * a, b) == pytest.approx(v, abs=1e-12)
    assert u_neg_cosine(b, a) == pytest.approx(v, abs=1e-15)


def test_neg_cosine_zero_vector_is_degenerate():
    with pytest.raises(DegenerateInputError):
        u_neg_cosine(np.zeros(3), np.ones(3))
    with pytest.raises(DegenerateInputError):
        u_neg_cosine(np.ones(3), np.zeros(3))


# ---------------------------------------------------------------- energy_eval


def test_bayes_pure_prior_term():
    E = BayesEnergy(identity_G(2), AuxModel("classifier", Mlp((np.zeros((2, 2)),), (np.zeros(2),), ("identity",))),
                    Prior(2), beta1=1.0, beta2=0.0)
    assert energy_eval(E, np.array([3.0, 4.0]), np.array([1.0, 0.0])) == 12.5


def test_augmented_with_degenerate_family_equals_composed():
    G, f, rng = random_models(1, kind="embedder")
    c = rng.normal(size=5)
    z = rng.normal(size=(6, 3))
    A = AugmentedEnergy(G, f, PerturbationFamily(0.0, 0.0), n_phi=7, discrepancy="neg_cosine")
    C = ComposedEnergy(G, f, "neg_cosine")
    np.testing.assert_allclose(energy_eval(A, z, c, RngStream(2)), energy_eval(C, z, c), rtol=1e-14)


def test_composed_logistic_by_hand():
    E = ComposedEnergy(identity_G(), logistic(), "cross_entropy")
    z = 0.4
    p0 = 1 / (1 + math.exp(-2 * (1.5 * z + 0.5)))
    assert energy_eval(E, np.array([z]), np.array([1.0, 0.0])) == pytest.approx(-math.log(p0), rel=1e-13)
    assert energy_eval(E, np.array([z]), np.array([0.0, 1.0])) == pytest.approx(-math.log(1 - p0), rel=1e-13)


def test_augmented_is_deterministic_given_rng_and_needs_one():
    G, f, rng = random_models(2, kind="embedder")
    A = AugmentedEnergy(G, f)
    z, c = rng.normal(size=3), rng.normal(size=5)
    assert energy_eval(A, z, c, RngStream(4)) == energy_eval(A, z, c, RngStream(4))
    with pytest.raises(ValueError):
        energy_eval(A, z, c)


def test_batch_rows_are_independent_energies():
    G, f, rng = random_models(3)
    E = ComposedEnergy(G, f)
    z = rng.normal(size=(5, 3))
    c = np.eye(5)
    batch = energy_eval(E, z, c)
    np.testing.assert_allclose(batch, [energy_eval(E, z[i], c[i]) for i in range(5)], rtol=1e-14)


def test_shape_mismatches():
    G, f, _ = random_models(4)
    E = ComposedEnergy(G, f)
    with pytest.raises(ShapeError):
        energy_eval(E, np.zeros(3), np.ones(4) / 4)
    with pytest.raises(ShapeError):
        energy_eval(E, np.zeros((2, 3)), np.eye(5)[:3])


def test_spec_validation():
    G, f, _ = random_models(5, kind="embedder")
    with pytest.raises(ValueError):
        BayesEnergy(G, f, Prior(3))
    with pytest.raises(ValueError):
        AugmentedEnergy(G, f, n_phi=0)
    with pytest.raises(ValueError):
        ComposedEnergy(G, f, "hinge")


# ---------------------------------------------------------------- gradients


def test_bayes_prior_gradient():
    E = BayesEnergy(identity_G(2), logistic().__class__("classifier", Mlp((np.zeros((2, 2)),), (np.zeros(2),), ("identity",))),
                    Prior(2, (0.5, 2.0)), beta1=1.0, beta2=0.0)
    z = np.array([0.7, -1.3])
    np.testing.assert_allclose(energy_grad(E, z, np.array([0.0, 1.0])), z / np.array([0.25, 4.0]), rtol=1e-14)


def test_constant_generator_has_zero_gradient():
    G = Generator(Mlp((np.zeros((3, 4)),), (np.ones(4),), ("identity",)))
    _, f, rng = random_models(6)
    for E, c in ((ComposedEnergy(G, f), np.eye(5)[1]),
                 (ComposedEnergy(G, AuxModel("embedder", f.body), "neg_cosine"), rng.normal(size=5))):
        np.testing.assert_array_equal(energy_grad(E, rng.normal(size=3), c), np.zeros(3))


def _variants(seed):
    G, f, rng = random_models(seed)
    emb = AuxModel("embedder", f.body)
    return [
        (ComposedEnergy(G, f, "cross_entropy"), "simplex"),
        (ComposedEnergy(G, emb, "neg_cosine"), "vector"),
        (AugmentedEnergy(G, emb, n_phi=5), "vector"),
        (AugmentedEnergy(G, f, n_phi=5, discrepancy="cross_entropy"), "simplex"),
        (BayesEnergy(G, f, Prior(3, 0.7), beta1=0.8, beta2=1.3), "simplex"),
    ], rng


def test_every_variant_matches_finite_differences_at_fifty_points():
    worst = 0.0
    for point in range(50):
        variants, rng = _variants(100 + point)
        for E, ckind in variants:
            z = rng.normal(size=3)
            if ckind == "simplex":
                w = np.exp(rng.normal(size=5))
                c = w / w.sum()
            else:
                c = rng.normal(size=5)
            draws = E.draw(rng, 1) if E.needs_rng else None
            g = energy_grad(E, z, c, draws=draws)
            fd = finite_diff_grad(lambda zz: energy_eval(E, zz, c, draws=draws), z)
            worst = max(worst, relative_error(g, fd))
    assert worst < 1e-4


def test_value_and_gradient_share_draws():
    G, f, rng = random_models(7, kind="embedder")
    A = AugmentedEnergy(G, f, n_phi=3)
    z, c = rng.normal(size=3), rng.normal(size=5)
    value, _ = energy_value_and_grad(A, z, c, RngStream(11))
    assert value == energy_eval(A, z, c, RngStream(11))


def test_estimator_spread_shrinks_with_more_draws():
    G, f, rng = random_models(8, kind="embedder")
    z, c = rng.normal(size=3), rng.normal(size=5)
    spread = {}
    for n_phi in (20, 80):
        A = AugmentedEnergy(G, f, n_phi=n_phi)
        spread[n_phi] = np.std([energy_eval(A, z, c, RngStream([n_phi, i])) for i in range(200)], ddof=1)
    assert spread[20] / spread[80] == pytest.approx(2.0, rel=0.3)


def test_bayes_energy_differences_match_log_joint():
    G, f, rng = random_models(9)
    prior = Prior(3, 0.7)
    E = BayesEnergy(G, f, prior, 1.0, 1.0)
    c = np.eye(5)[2]

    def log_joint(z):
        return prior.log_density(z) + math.log(f(G(z[None]))[0, 2])

    for _ in range(20):
        z1, z2 = rng.normal(size=3), rng.normal(size=3)
        lhs = energy_eval(E, z1, c) - energy_eval(E, z2, c)
        assert lhs == pytest.approx(-(log_joint(z1) - log_joint(z2)), abs=1e-10)
