"""Tilting functions and balancing weights for binary and multi-arm treatments.

Every scheme is written in its multi-arm form; with two arms the formulas
reduce to the familiar binary ones (overlap: e(1-e), matching:
min(e, 1-e), and so on). Unit i receives h(x_i) / e_{Z_i}(x_i) with no
global normalisation; Hajek estimators normalise within group.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

SCHEMES = ("ipw", "treated", "overlap", "matching", "entropy")
CLAMP = 1e-6


@dataclass(frozen=True)
class PropensityMatrix:
    values: np.ndarray
    group_labels: tuple[str, ...]
    source: str = "fitted"
    clamp_count: int = 0

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[1] != len(self.group_labels):
            raise DataError("propensity matrix needs one column per treatment level")
        if len(self.group_labels) < 2:
            raise DataError("at least two treatment levels are required")
        if not np.all((v > 0) & (v < 1)):
            raise DataError("propensity scores must lie strictly inside (0, 1)")
        if not np.allclose(v.sum(axis=1), 1.0, rtol=0, atol=1e-8):
            raise DataError("propensity rows must sum to 1")

    @classmethod
    def from_probabilities(cls, probs, labels, source: str = "fitted",
                           eps: float = CLAMP) -> "PropensityMatrix":
        """Clamp into [eps, 1-eps], renormalise rows, and count clamped cells."""
        p = np.array(probs, dtype=float, copy=True)
        if p.ndim == 1:
            p = np.column_stack([1.0 - p, p])
        if not np.all(np.isfinite(p)):
            raise DataError("non-finite propensity score")
        low, high = p < eps, p > 1 - eps
        count = int(low.sum() + high.sum())
        if count:
            p = np.clip(p, eps, 1 - eps)
            p /= p.sum(axis=1, keepdims=True)
        return cls(p, tuple(labels), source, count)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def J(self) -> int:
        return self.values.shape[1]

    def take(self, index) -> "PropensityMatrix":
        return PropensityMatrix(self.values[index], self.group_labels, self.source, self.clamp_count)


@dataclass(frozen=True)
class WeightScheme:
    kind: str
    treated_group: str | None = None

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ConfigError(f"unknown weight scheme {self.kind!r}; expected one of {SCHEMES}")

    @classmethod
    def parse(cls, name: str, treated_group: str | None = None) -> "WeightScheme":
        return cls(name.strip().lower(), treated_group)

    def treated_index(self, labels: tuple[str, ...]) -> int:
        if self.treated_group is None:
            return len(labels) - 1
        if self.treated_group not in labels:
            raise ConfigError(f"treated group {self.treated_group!r} not among levels {labels}")
        return labels.index(self.treated_group)

    @property
    def differentiable(self) -> bool:
        return self.kind != "matching"

    def __str__(self) -> str:
        return self.kind


@dataclass(frozen=True)
class TiltedWeights:
    h: np.ndarray
    w: np.ndarray
    scheme: WeightScheme
    group_weights: np.ndarray = field(repr=False)  # N x J matrix h / e_j
    clamp_count: int = 0


def _values(e) -> np.ndarray:
    return e.values if isinstance(e, PropensityMatrix) else np.asarray(e, float)


def tilting(scheme: WeightScheme, e, labels=None) -> np.ndarray:
    v = _values(e)
    labels = e.group_labels if isinstance(e, PropensityMatrix) else labels
    k = scheme.kind
    if k == "ipw":
        return np.ones(v.shape[0])
    if k == "treated":
        if labels is None:
            return v[:, -1].copy()
        return v[:, scheme.treated_index(tuple(labels))].copy()
    if k == "overlap":
        return 1.0 / np.sum(1.0 / v, axis=1)
    if k == "matching":
        return v.min(axis=1)
    if k == "entropy":
        return -np.sum(v * np.log(v), axis=1)
    raise AssertionError(k)


def tilting_gradient(scheme: WeightScheme, e, labels=None) -> np.ndarray:
    """Partial derivatives dh/de_k, N x J, treating each e_k as free."""
    v = _values(e)
    labels = e.group_labels if isinstance(e, PropensityMatrix) else labels
    k = scheme.kind
    if k == "ipw":
        return np.zeros_like(v)
    if k == "treated":
        out = np.zeros_like(v)
        idx = v.shape[1] - 1 if labels is None else scheme.treated_index(tuple(labels))
        out[:, idx] = 1.0
        return out
    if k == "overlap":
        h = tilting(scheme, v)
        return (h[:, None] / v) ** 2
    if k == "entropy":
        return -(np.log(v) + 1.0)
    raise ValueError("matching weights have no gradient (tilting not differentiable)")


def group_index(z, labels) -> np.ndarray:
    z = np.asarray(z, dtype=object)
    lookup = {lab: j for j, lab in enumerate(labels)}
    try:
        return np.array([lookup[v] for v in z], dtype=int)
    except KeyError as exc:
        raise DataError(f"treatment label {exc.args[0]!r} not among {tuple(labels)}") from None


def unit_weights(scheme: WeightScheme, e: PropensityMatrix, z) -> TiltedWeights:
    idx = group_index(z, e.group_labels)
    h = tilting(scheme, e)
    gw = h[:, None] / e.values
    w = gw[np.arange(e.n), idx]
    return TiltedWeights(h, w, scheme, gw, e.clamp_count)


def effective_sample_size(w, z, labels=None) -> dict[str, float]:
    """Kish effective sample size per group, (sum w)^2 / sum w^2."""
    w = w.w if isinstance(w, TiltedWeights) else np.asarray(w, float)
    z = np.asarray(z, dtype=object)
    labels = tuple(sorted(set(z.tolist()))) if labels is None else tuple(labels)
    out = {}
    for lab in labels:
        wj = w[z == lab]
        if wj.size == 0:
            raise DataError(f"group {lab!r} is empty")
        s2 = float(np.sum(wj ** 2))
        out[lab] = float(np.sum(wj)) ** 2 / s2 if s2 > 0 else 0.0
    return out
