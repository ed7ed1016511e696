import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_propensities(rng, n, J, low=0.02):
    """Rows of a random stochastic matrix with every entry at least ``low``."""
    P = rng.dirichlet(np.ones(J), size=n)
    P = low + (1 - J * low) * P
    return P / P.sum(axis=1, keepdims=True)


def fitted_system(scheme="overlap", J=2, augmented=False, family="gaussian", n=150, seed=0,
                  external_ps=False):
    """Fit a small simulated configuration through the pipeline; return (Fitted, StackedSystem)."""
    from pswkit.pipeline import AnalysisConfig, build_system, estimate_stage, prepare, propensity_stage
    from pswkit.simulation import get_scenario, simulate

    s = get_scenario("C" if J == 3 else "A", outcome="binary" if family == "binomial" else None)
    sim = simulate(s, n, seed)
    cols = sim.columns()
    if family == "poisson":
        r = np.random.default_rng(seed + 1)
        cols["y"] = r.poisson(np.exp(0.3 + 0.3 * sim.X[:, 0] + 0.2 * (sim.z == sim.z.max())))
    ps_cols = None
    if external_ps:
        for j, g in enumerate(s.groups):
            cols[f"e{g}"] = sim.e[:, j]
        ps_cols = tuple(f"e{g}" for g in s.groups)
    from pswkit.data import Dataset

    data = Dataset.from_columns(cols)
    cfg = AnalysisConfig(
        ps_formula=None if external_ps else "z ~ x1 + x2 + x3", ps_cols=ps_cols,
        treatment="z", outcome="y", weight=scheme, augmentation=augmented,
        out_formula="y ~ x1 + x2 + x3" if augmented else None, family=family)
    prep = prepare(data, cfg)
    st = estimate_stage(propensity_stage(prep, cfg), cfg)
    return st, build_system(st, cfg)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
