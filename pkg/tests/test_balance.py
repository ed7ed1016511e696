import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_propensities
from pswkit.balance import (
    asd,
    kernel_density,
    max_pairwise_asd,
    plot_series,
    psd,
    summarize_balance,
    weighted_moments,
)
from pswkit.errors import ConfigError
from pswkit.plots import render
from pswkit.weights import PropensityMatrix, WeightScheme, unit_weights

A = np.sqrt(0.5)


def labels(*groups):
    return np.array(groups, dtype=object)


def test_unweighted_moments():
    assert weighted_moments([1.0, 2.0, 3.0]) == (2.0, 1.0)


def test_degenerate_weight_mass():
    mean, var = weighted_moments([5.0, 1.0, 1.0], [2.0, 0.0, 0.0])
    assert mean == 5.0
    assert np.isnan(var)


def test_constant_covariate_variance():
    assert weighted_moments(np.full(6, 3.3), np.arange(1.0, 7.0))[1] == 0.0


def test_identical_groups_asd_zero():
    x = np.array([1.0, 2.0, 4.0, 1.0, 2.0, 4.0])
    z = labels("a", "a", "a", "b", "b", "b")
    assert asd(x, np.array([1, 2, 3, 1, 2, 3.0]), z) == 0.0


def test_asd_unit_difference():
    x = np.array([1 - A, 1 + A, -A, A])
    z = labels("1", "1", "0", "0")
    assert asd(x, None, z) == pytest.approx(1.0, rel=1e-14)


def test_psd_arithmetic():
    x = np.array([-A, A, 2 - A, 2 + A])
    z = labels("0", "0", "1", "1")
    assert psd(x, None, None, z) == pytest.approx(1.0, rel=1e-14)


def test_psd_zero_when_means_equal_target():
    x = np.array([0.0, 2.0, 1.0, 1.0])
    assert psd(x, None, None, labels("0", "0", "1", "1")) == 0.0


def test_ipw_target_is_sample_mean(rng):
    x = rng.normal(size=30)
    z = np.where(rng.random(30) < 0.5, "0", "1").astype(object)
    z[:2] = ["0", "1"]
    h = np.ones(30)
    # shifting by the full-sample mean changes PSD only through the target
    assert psd(x - x.mean(), None, h, z) == pytest.approx(psd(x, None, h, z), rel=1e-12)


def test_zero_variance_is_undefined():
    x = np.ones(4)
    assert np.isnan(asd(x, None, labels("0", "0", "1", "1")))


def test_three_arm_asd_is_max_over_pairs(rng):
    x = rng.normal(size=60)
    z = np.array(["a", "b", "c"] * 20, dtype=object)
    pairs = [asd(x, None, z, pair) for pair in (("a", "b"), ("a", "c"), ("b", "c"))]
    assert max_pairwise_asd(x, None, z) == max(pairs)


@given(st.integers(0, 10_000), st.floats(-5, 5).filter(lambda a: abs(a) > 0.1), st.floats(-10, 10))
def test_asd_affine_and_pair_symmetry(seed, a, b):
    r = np.random.default_rng(seed)
    x = r.normal(size=20)
    w = r.uniform(0.1, 2.0, 20)
    z = np.array(["0", "1"] * 10, dtype=object)
    base = asd(x, w, z)
    assert asd(x, w, z, ("1", "0")) == base
    assert asd(a * x + b, w, z) == pytest.approx(base, rel=1e-9, abs=1e-12)


@given(st.integers(0, 10_000))
def test_equal_within_group_weights_match_unweighted(seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=20)
    z = np.array(["0", "1"] * 10, dtype=object)
    w = np.where(z == "0", 0.3, 2.5)
    assert asd(x, w, z) == pytest.approx(asd(x, None, z), rel=1e-12)


def _report(seed, J=2, n=120, schemes=("ipw", "overlap")):
    r = np.random.default_rng(seed)
    labs = tuple(str(j) for j in range(J))
    e = PropensityMatrix.from_probabilities(random_propensities(r, n, J, 0.05), labs)
    z = np.array(labs, dtype=object)[np.arange(n) % J]
    X = r.normal(size=(n, 3))
    X[:, 2] += 2 * (z == labs[-1])
    return summarize_balance((X, ("x1", "x2", "x3")), z, e, schemes), e, z


def test_report_columns_and_flags():
    rep, _, _ = _report(0)
    assert rep.schemes == ("unweighted", "ipw", "overlap")
    assert rep.threshold == 0.1
    assert "x3" in rep.flagged("unweighted")
    d = rep.to_dict()
    assert set(d["schemes"]) == {"unweighted", "ipw", "overlap"}


@given(st.integers(0, 1000), st.floats(0.01, 100.0))
def test_h_scale_invariance(seed, c):
    r = np.random.default_rng(seed)
    n = 40
    e = PropensityMatrix.from_probabilities(random_propensities(r, n, 2, 0.05), ("0", "1"))
    z = np.array(["0", "1"] * (n // 2), dtype=object)
    x = r.normal(size=n)
    tw = unit_weights(WeightScheme("overlap"), e, z)
    base = (asd(x, tw.w, z), psd(x, tw.w, tw.h, z))
    scaled = (asd(x, c * tw.w, z), psd(x, c * tw.w, c * tw.h, z))
    np.testing.assert_allclose(scaled, base, rtol=1e-12)


def test_report_reproducible():
    a, _, _ = _report(3, J=3)
    b, _, _ = _report(3, J=3)
    assert a.to_dict() == b.to_dict()


def test_density_of_constant_scores():
    grid = np.linspace(0, 1, 512)
    dens = kernel_density(np.full(100, 0.5), grid)
    step = grid[1] - grid[0]
    total = step * (dens.sum() - 0.5 * (dens[0] + dens[-1]))
    assert total == pytest.approx(1.0, abs=1e-3)
    assert abs(grid[np.argmax(dens)] - 0.5) <= step


def test_love_series_default_threshold():
    rep, _, _ = _report(1)
    ps = plot_series("love", rep)
    assert ps.threshold == 0.1
    assert set(ps.series["values"]) == {"unweighted", "ipw", "overlap"}


def test_histogram_binary_only():
    rep, e, z = _report(2, J=3)
    with pytest.raises(ConfigError, match="binary"):
        plot_series("hist", rep, e, z)


def test_density_panels():
    _, e2, z2 = _report(4)
    assert list(plot_series("density", e=e2, z=z2).series["panels"]) == ["1"]
    _, e3, z3 = _report(4, J=3)
    assert list(plot_series("density", e=e3, z=z3).series["panels"]) == ["0", "1", "2"]


@pytest.mark.parametrize("kind", ["love", "density", "histogram"])
def test_svg_deterministic(tmp_path, kind):
    rep, e, z = _report(5)
    ps = plot_series(kind, rep, e, z)
    render(ps, tmp_path / "a.svg")
    render(ps, tmp_path / "b.svg")
    a = (tmp_path / "a.svg").read_bytes()
    assert a == (tmp_path / "b.svg").read_bytes()
    assert a.lstrip().startswith(b"<?xml") and b"<svg" in a
