import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_propensities
from pswkit.errors import ConfigError, DataError
from pswkit.glm import fit_binary_logistic
from pswkit.weights import (
    SCHEMES,
    PropensityMatrix,
    WeightScheme,
    effective_sample_size,
    tilting,
    tilting_gradient,
    unit_weights,
)

BIN = ("0", "1")


def pm(rows, labels=BIN):
    return PropensityMatrix.from_probabilities(np.atleast_2d(rows), labels)


def W(kind, treated=None):
    return WeightScheme.parse(kind, treated)


def test_overlap_binary_value():
    assert tilting(W("overlap"), pm([0.2, 0.8]))[0] == pytest.approx(0.16, abs=1e-15)


def test_entropy_at_half():
    assert tilting(W("entropy"), pm([0.5, 0.5]))[0] == pytest.approx(np.log(2), abs=1e-15)


def test_overlap_three_arms_uniform():
    e = pm([1 / 3, 1 / 3, 1 / 3], ("a", "b", "c"))
    assert tilting(W("overlap"), e)[0] == pytest.approx(1 / 9, abs=1e-15)


@pytest.mark.parametrize("kind, expected", [
    ("ipw", (1.25, 5.0)),
    ("overlap", (0.2, 0.8)),
    ("matching", (0.25, 1.0)),
])
def test_binary_weights_at_point_eight(kind, expected):
    e = pm([[0.2, 0.8], [0.2, 0.8]])
    tw = unit_weights(W(kind), e, np.array(["1", "0"], dtype=object))
    np.testing.assert_allclose(tw.w, expected, rtol=1e-14)


def test_unknown_scheme():
    with pytest.raises(ConfigError):
        W("cbps")


def test_treated_group_must_exist():
    with pytest.raises(ConfigError):
        tilting(W("treated", "7"), pm([0.3, 0.7]))


def test_clamping_counts_cells():
    e = PropensityMatrix.from_probabilities(np.array([0.0, 0.5, 1.0]), BIN)
    assert e.clamp_count == 4
    assert np.all(e.values >= 1e-6 / (1 + 1e-6))
    np.testing.assert_allclose(e.values.sum(axis=1), 1.0)


def test_rejects_non_stochastic_rows():
    with pytest.raises(DataError):
        PropensityMatrix(np.array([[0.3, 0.3]]), BIN)


@given(st.integers(0, 10_000))
def test_binary_reduction(seed):
    r = np.random.default_rng(seed)
    p = r.uniform(0.01, 0.99, size=20)
    e = pm(np.column_stack([1 - p, p]))
    np.testing.assert_allclose(tilting(W("overlap"), e), p * (1 - p), rtol=1e-12)
    np.testing.assert_allclose(tilting(W("matching"), e), np.minimum(p, 1 - p), rtol=1e-15)
    np.testing.assert_allclose(tilting(W("treated"), e), p, rtol=1e-15)
    np.testing.assert_allclose(tilting(W("entropy"), e),
                               -p * np.log(p) - (1 - p) * np.log(1 - p), rtol=1e-12)
    z = np.where(r.random(20) < p, "1", "0").astype(object)
    tw = unit_weights(W("overlap"), e, z)
    np.testing.assert_allclose(tw.w, np.where(z == "1", 1 - p, p), rtol=1e-12)


@given(st.integers(0, 10_000), st.integers(2, 4))
def test_treated_weight_one_in_treated_group(seed, J):
    r = np.random.default_rng(seed)
    labels = tuple("abcd"[:J])
    e = PropensityMatrix.from_probabilities(random_propensities(r, 30, J), labels)
    z = np.array(labels, dtype=object)[r.integers(0, J, 30)]
    tw = unit_weights(W("treated", labels[-1]), e, z)
    np.testing.assert_allclose(tw.w[z == labels[-1]], 1.0, rtol=1e-15)


@given(st.integers(0, 10_000), st.integers(2, 4), st.sampled_from(["ipw", "treated", "overlap", "entropy"]))
def test_tilting_gradient_finite_difference(seed, J, kind):
    r = np.random.default_rng(seed)
    v = random_propensities(r, 5, J, low=0.05)
    G = tilting_gradient(W(kind), v)
    h = 1e-7
    for k in range(J):
        up, dn = v.copy(), v.copy()
        up[:, k] += h
        dn[:, k] -= h
        num = (tilting(W(kind), up) - tilting(W(kind), dn)) / (2 * h)
        np.testing.assert_allclose(G[:, k], num, rtol=1e-6, atol=1e-8)


def test_matching_has_no_gradient():
    with pytest.raises(ValueError):
        tilting_gradient(W("matching"), np.array([[0.4, 0.6]]))


def test_ess_examples():
    z = np.array(["a"] * 10, dtype=object)
    assert effective_sample_size(np.full(10, 0.3), z)["a"] == pytest.approx(10.0, rel=1e-14)
    z3 = np.array(["a"] * 3, dtype=object)
    assert effective_sample_size(np.array([1.0, 1.0, 2.0]), z3)["a"] == pytest.approx(16 / 6, rel=1e-14)
    assert effective_sample_size(np.array([4.2]), np.array(["a"], dtype=object))["a"] == 1.0


@given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=40))
def test_ess_bounded_by_group_size(ws):
    w = np.array(ws)
    ess = effective_sample_size(w, np.array(["g"] * w.size, dtype=object))["g"]
    assert ess <= w.size * (1 + 1e-12)
    if np.ptp(w) == 0:
        assert ess == pytest.approx(w.size, rel=1e-12)
    elif np.ptp(w) > 1e-6:
        assert ess < w.size


@pytest.mark.parametrize("seed", range(5))
def test_overlap_exact_balance(seed):
    r = np.random.default_rng(seed)
    n = 500
    x = r.normal(size=(n, 2))
    X = np.column_stack([np.ones(n), x])
    z = (r.random(n) < 1 / (1 + np.exp(-(0.3 + x @ [0.8, -0.6])))).astype(float)
    fit = fit_binary_logistic(X, z)
    e = PropensityMatrix.from_probabilities(fit.fitted_values, BIN)
    lab = np.where(z == 1, "1", "0").astype(object)
    w = unit_weights(W("overlap"), e, lab).w
    for c in range(2):
        m1 = np.sum((w * x[:, c])[z == 1]) / np.sum(w[z == 1])
        m0 = np.sum((w * x[:, c])[z == 0]) / np.sum(w[z == 0])
        assert abs(m1 - m0) < 1e-6


def test_all_schemes_positive(rng):
    v = random_propensities(rng, 50, 3)
    e = PropensityMatrix.from_probabilities(v, ("a", "b", "c"))
    for kind in SCHEMES:
        assert np.all(tilting(W(kind), e) > 0)
