"""Synthetic observational data with known propensity and outcome mechanisms.

Covariates are independent standard normals. Treatment follows a
baseline-category logit in the covariates (optionally with a quadratic term
in x1); outcomes are m_Z(x) + noise, or Bernoulli(m_Z(x)) for binary
outcomes. ``true_wate`` evaluates any weighted average treatment effect by
Monte Carlo using the true propensities in the tilting function.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .errors import ConfigError
from .glm import expit
from .weights import WeightScheme, tilting


@dataclass(frozen=True)
class Scenario:
    name: str
    J: int = 2
    p: int = 3
    ps_intercepts: tuple[float, ...] = (0.0,)
    ps_coefs: tuple[tuple[float, ...], ...] = ((0.5, -0.5, 0.3),)
    ps_quadratic: float = 0.0
    outcome_intercept: float = 0.0
    outcome_coefs: tuple[float, ...] = (1.0, 0.5, -0.5)
    outcome_quadratic: float = 0.0
    effects: tuple[float, ...] = (0.0, 0.5)
    effect: str = "constant"  # or "heterogeneous": arm j adds (j / (J-1)) * x1 instead of effects[j]
    noise: float = 1.0
    outcome: str = "continuous"  # or "binary"

    def __post_init__(self):
        if len(self.ps_intercepts) != self.J - 1 or len(self.ps_coefs) != self.J - 1:
            raise ConfigError("propensity coefficients need one row per non-reference arm")
        if len(self.effects) != self.J:
            raise ConfigError("one effect per arm is required")
        if self.effect not in ("constant", "heterogeneous"):
            raise ConfigError(f"unknown effect structure {self.effect!r}")
        if self.outcome not in ("continuous", "binary"):
            raise ConfigError(f"unknown outcome kind {self.outcome!r}")

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(str(j) for j in range(self.J))

    @property
    def extra_columns(self) -> tuple[str, ...]:
        return ("x1sq",) if (self.ps_quadratic or self.outcome_quadratic) else ()

    def with_p(self, p: int) -> "Scenario":
        """Same scenario with ``p`` covariates (extra coefficients are zero)."""
        pad = lambda c: tuple(c[:p]) + (0.0,) * max(0, p - len(c))  # noqa: E731
        return replace(self, p=p, ps_coefs=tuple(pad(r) for r in self.ps_coefs),
                       outcome_coefs=pad(self.outcome_coefs))

    # mechanisms -----------------------------------------------------------

    def propensity(self, X: np.ndarray) -> np.ndarray:
        p = len(self.ps_coefs[0])
        lin = [np.zeros(X.shape[0])]
        for a, b in zip(self.ps_intercepts, self.ps_coefs):
            lin.append(a + X[:, :p] @ np.asarray(b) + self.ps_quadratic * X[:, 0] ** 2)
        eta = np.column_stack(lin)
        eta -= eta.max(axis=1, keepdims=True)
        P = np.exp(eta)
        return P / P.sum(axis=1, keepdims=True)

    def outcome_means(self, X: np.ndarray) -> np.ndarray:
        """N x J matrix of m_j(x)."""
        base = (self.outcome_intercept + X[:, :len(self.outcome_coefs)] @ np.asarray(self.outcome_coefs)
                + self.outcome_quadratic * X[:, 0] ** 2)
        cols = []
        for j, eff in enumerate(self.effects):
            if self.effect == "heterogeneous":
                lin = base + (j / (self.J - 1)) * X[:, 0]
            else:
                lin = base + eff
            cols.append(lin)
        M = np.column_stack(cols)
        return expit(M) if self.outcome == "binary" else M


SCENARIOS: dict[str, Scenario] = {
    # binary treatment, good overlap
    "A": Scenario("A"),
    # binary treatment, poor overlap: propensity coefficients scaled by 3
    "B": Scenario("B", ps_coefs=((1.5, -1.5, 0.9),)),
    # three arms
    "C": Scenario("C", J=3, ps_intercepts=(0.2, -0.2),
                  ps_coefs=((0.5, -0.5, 0.3), (-0.4, 0.3, 0.5)), effects=(0.0, 0.5, 1.0)),
    # binary treatment whose propensity depends on x1^2 (for misspecification studies)
    "D": Scenario("D", p=2, ps_intercepts=(-1.0,), ps_coefs=((0.5, 0.5),), ps_quadratic=0.8,
                  outcome_coefs=(1.0, 1.0), outcome_quadratic=2.0),
}


def get_scenario(name: str, p: int | None = None, effect: str | None = None,
                 outcome: str | None = None) -> Scenario:
    try:
        s = SCENARIOS[name.upper()]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; available: {', '.join(SCENARIOS)}") from None
    if p is not None and p != s.p:
        s = s.with_p(p)
    if effect is not None:
        s = replace(s, effect=effect)
    if outcome is not None:
        s = replace(s, outcome=outcome)
    return s


@dataclass(frozen=True)
class SimData:
    X: np.ndarray
    z: np.ndarray  # string labels
    y: np.ndarray
    e: np.ndarray  # true propensities, N x J
    m: np.ndarray = field(repr=False)  # true m_j(x)
    scenario: Scenario = field(repr=False)

    def columns(self) -> dict[str, np.ndarray]:
        cols = {f"x{k + 1}": self.X[:, k] for k in range(self.X.shape[1])}
        if "x1sq" in self.scenario.extra_columns:
            cols["x1sq"] = self.X[:, 0] ** 2
        cols["z"] = self.z
        cols["y"] = self.y
        return cols

    def to_dataset(self) -> Dataset:
        return Dataset.from_columns(self.columns())


def simulate(s: Scenario, n: int, seed: int) -> SimData:
    if n < 1:
        raise ConfigError("n must be at least 1")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, s.p))
    e = s.propensity(X)
    u = rng.random(n)
    zi = np.minimum((u[:, None] > np.cumsum(e, axis=1)).sum(axis=1), s.J - 1)
    m = s.outcome_means(X)
    mz = m[np.arange(n), zi]
    if s.outcome == "binary":
        y = (rng.random(n) < mz).astype(float)
    else:
        y = mz + s.noise * rng.standard_normal(n)
    z = np.array(s.groups, dtype=object)[zi]
    return SimData(X, z, y, e, m, s)


def generate(s: Scenario, n: int, seed: int) -> Dataset:
    return simulate(s, n, seed).to_dataset()


@dataclass(frozen=True)
class OracleValue:
    value: float
    mc_se: float
    scheme: str
    pair: tuple[str, str]
    draws: int
    mu: dict[str, float]

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "contrast": f"{self.pair[0]} - {self.pair[1]}",
                "value": self.value, "mc_se": self.mc_se, "draws": self.draws, "mu": self.mu}


def true_wate(s: Scenario, scheme: WeightScheme | str, m_draws: int = 1_000_000, seed: int = 0,
              pair: tuple[str, str] | None = None, chunk: int = 200_000) -> OracleValue:
    """E[h(x)(m_j(x) - m_k(x))] / E[h(x)] by Monte Carlo, with its delta-method MC SE."""
    if m_draws < 100_000:
        raise ConfigError("the oracle needs at least 1e5 Monte Carlo draws")
    scheme = WeightScheme.parse(scheme) if isinstance(scheme, str) else scheme
    groups = s.groups
    pair = (groups[-1], groups[0]) if pair is None else pair
    j, k = groups.index(pair[0]), groups.index(pair[1])
    ss = np.random.SeedSequence(seed)
    hs, hm, hd, hd2, hh, hdh = 0.0, np.zeros(s.J), 0.0, 0.0, 0.0, 0.0
    done = 0
    for c, child in enumerate(ss.spawn((m_draws + chunk - 1) // chunk)):
        size = min(chunk, m_draws - done)
        X = np.random.default_rng(child).standard_normal((size, s.p))
        e = s.propensity(X)
        h = tilting(scheme, e, groups)
        M = s.outcome_means(X)
        d = M[:, j] - M[:, k]
        hs += h.sum()
        hm += h @ M
        hd += h @ d
        hd2 += (h * d) @ (h * d)
        hh += h @ h
        hdh += (h * d) @ h
        done += size
    mean_h = hs / done
    value = hd / hs
    # linearisation of a ratio of means: u_i = h_i (d_i - value) / mean(h)
    su2 = (hd2 - 2 * value * hdh + value ** 2 * hh) / done
    sd_u = np.sqrt(max(su2 - 0.0, 0.0)) / mean_h
    mc_se = float(sd_u / np.sqrt(done))
    mu = {g: float(v) for g, v in zip(groups, hm / hs)}
    return OracleValue(float(value), mc_se, scheme.kind, pair, done, mu)
