"""Point estimation of average potential outcomes and their contrasts."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EstimationError
from .weights import TiltedWeights, WeightScheme, group_index

SCALES = ("DIF", "RR", "OR")


@dataclass(frozen=True)
class PotentialOutcomeMeans:
    mu: np.ndarray
    groups: tuple[str, ...]
    scheme: WeightScheme | None = None
    augmented: bool = False
    components: dict = field(default_factory=dict, repr=False)

    @property
    def J(self) -> int:
        return self.mu.size

    def as_dict(self) -> dict[str, float]:
        return {g: float(m) for g, m in zip(self.groups, self.mu)}


@dataclass(frozen=True)
class ContrastSpec:
    matrix: np.ndarray
    scale: str = "DIF"
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, float))
        object.__setattr__(self, "matrix", m)
        scale = self.scale.upper()
        if scale not in SCALES:
            raise ConfigError(f"contrast scale must be one of {SCALES}, got {self.scale!r}")
        object.__setattr__(self, "scale", scale)
        if self.labels is None:
            object.__setattr__(self, "labels", tuple(f"Contrast {k + 1}" for k in range(m.shape[0])))
        elif len(self.labels) != m.shape[0]:
            raise ConfigError("one label per contrast row is required")

    @classmethod
    def pairwise(cls, groups, scale: str = "DIF") -> "ContrastSpec":
        """All J(J-1)/2 pairwise comparisons, later group minus earlier group."""
        J = len(groups)
        rows, labels = [], []
        for j, k in itertools.combinations(range(J), 2):
            a = np.zeros(J)
            a[k], a[j] = 1.0, -1.0
            rows.append(a)
            labels.append(f"{groups[k]} vs {groups[j]}")
        return cls(np.array(rows), scale, tuple(labels))

    @classmethod
    def parse(cls, text: str, scale: str = "DIF") -> "ContrastSpec":
        """Semicolon-separated rows of comma-separated coefficients, e.g. ``"1,-1,0;0,1,-1"``."""
        try:
            rows = [[float(v) for v in r.split(",")] for r in text.split(";") if r.strip()]
        except ValueError:
            raise ConfigError(f"cannot parse contrast matrix {text!r}") from None
        if not rows or len({len(r) for r in rows}) != 1:
            raise ConfigError(f"contrast rows must be non-empty and of equal length: {text!r}")
        return cls(np.array(rows), scale)

    def check(self, J: int) -> None:
        if self.matrix.shape[1] != J:
            raise ConfigError(f"contrast has {self.matrix.shape[1]} columns but there are {J} groups")


def _group_weight_sums(w, idx, J):
    sums = np.bincount(idx, weights=w, minlength=J)
    if np.any(~(sums > 0)):
        bad = int(np.flatnonzero(~(sums > 0))[0])
        raise EstimationError(f"group {bad} has zero total weight")
    return sums


def hajek_means(y, w: TiltedWeights, z, groups) -> PotentialOutcomeMeans:
    """mu_j = sum_i w_i D_ij Y_i / sum_i w_i D_ij."""
    y = np.asarray(y, float)
    groups = tuple(groups)
    idx = group_index(z, groups)
    ww = w.w if isinstance(w, TiltedWeights) else np.asarray(w, float)
    J = len(groups)
    sums = _group_weight_sums(ww, idx, J)
    mu = np.bincount(idx, weights=ww * y, minlength=J) / sums
    scheme = w.scheme if isinstance(w, TiltedWeights) else None
    return PotentialOutcomeMeans(mu, groups, scheme, False, {"weight_sums": sums})


def augmented_means(y, w: TiltedWeights, z, groups, h=None, m=None) -> PotentialOutcomeMeans:
    """Hajek mean of the residuals Y - m_j(x) plus the h-weighted average of m_j(x)."""
    y = np.asarray(y, float)
    groups = tuple(groups)
    J = len(groups)
    idx = group_index(z, groups)
    ww = w.w if isinstance(w, TiltedWeights) else np.asarray(w, float)
    h = (w.h if isinstance(w, TiltedWeights) else None) if h is None else np.asarray(h, float)
    if h is None:
        raise ConfigError("augmented estimator needs the tilting values h")
    m = np.asarray(m, float)
    if m.shape != (y.size, J):
        raise ConfigError(f"outcome predictions must be N x J = {(y.size, J)}, got {m.shape}")
    sums = _group_weight_sums(ww, idx, J)
    resid = y - m[np.arange(y.size), idx]
    nu = np.bincount(idx, weights=ww * resid, minlength=J) / sums
    hs = h.sum()
    if not hs > 0:
        raise EstimationError("tilting function sums to zero")
    eta = (h @ m) / hs
    scheme = w.scheme if isinstance(w, TiltedWeights) else None
    return PotentialOutcomeMeans(nu + eta, groups, scheme, True,
                                 {"nu": nu, "eta": eta, "weight_sums": sums})


def transform_means(mu, scale: str) -> np.ndarray:
    mu = np.asarray(mu, float)
    scale = scale.upper()
    if scale == "DIF":
        return mu
    if scale == "RR":
        if np.any(mu <= 0):
            raise EstimationError("RR scale requires every average potential outcome to be positive")
        return np.log(mu)
    if scale == "OR":
        if np.any((mu <= 0) | (mu >= 1)):
            raise EstimationError("OR scale requires every average potential outcome in (0, 1)")
        return np.log(mu) - np.log1p(-mu)
    raise ConfigError(f"unknown scale {scale!r}")


def transform_gradient(mu, scale: str) -> np.ndarray:
    """Elementwise derivative of :func:`transform_means`."""
    mu = np.asarray(mu, float)
    transform_means(mu, scale)  # domain checks
    scale = scale.upper()
    if scale == "DIF":
        return np.ones_like(mu)
    if scale == "RR":
        return 1.0 / mu
    return 1.0 / (mu * (1.0 - mu))


def apply_contrast(pom, c: ContrastSpec) -> np.ndarray:
    mu = pom.mu if isinstance(pom, PotentialOutcomeMeans) else np.asarray(pom, float)
    c.check(mu.size)
    return c.matrix @ transform_means(mu, c.scale)
