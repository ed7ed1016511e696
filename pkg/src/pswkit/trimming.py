"""Propensity score trimming.

Symmetric trimming keeps unit i when min_j e_j(x_i) >= delta. Optimal
trimming keeps the lower level set {g <= gamma*} of g = sum_k 1/e_k(x)
(1/(e(1-e)) with two arms), with gamma* chosen to minimise the sample
variance proxy sum_{kept} g / |kept|^2. At the continuous limit this is the
fixed point gamma = 2 E[g | g <= gamma]; when no cut improves on the full
sample every unit is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .weights import PropensityMatrix, group_index


@dataclass(frozen=True)
class TrimResult:
    kept_mask: np.ndarray
    delta_used: float | None
    counts: dict[str, dict[str, int]]  # label -> {"trimmed": .., "remained": ..}
    gamma: float | None = None
    method: str = "symmetric"

    @property
    def n_trimmed(self) -> int:
        return int((~self.kept_mask).sum())

    @property
    def n_remained(self) -> int:
        return int(self.kept_mask.sum())

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "delta": self.delta_used,
            "gamma": self.gamma,
            "trimmed": self.n_trimmed,
            "remained": self.n_remained,
            "by_group": self.counts,
        }

    def render(self) -> str:
        labels = list(self.counts)
        width = max([8] + [len(lab) for lab in labels] + [len(str(self.n_remained))])
        lines = [
            f"{self.n_trimmed} cases trimmed,  {self.n_remained} cases remained",
            "",
            "trimmed result by trt group:",
            " " * 8 + "".join(f" {lab:>{width}}" for lab in labels),
            f"{'trimmed':<8}" + "".join(f" {self.counts[lab]['trimmed']:>{width}}" for lab in labels),
            f"{'remained':<8}" + "".join(f" {self.counts[lab]['remained']:>{width}}" for lab in labels),
        ]
        return "\n".join(lines) + "\n"


def _counts(kept: np.ndarray, z, labels) -> dict[str, dict[str, int]]:
    if z is None:
        return {"(all)": {"trimmed": int((~kept).sum()), "remained": int(kept.sum())}}
    idx = group_index(z, labels)
    return {
        lab: {
            "trimmed": int(np.sum((idx == j) & ~kept)),
            "remained": int(np.sum((idx == j) & kept)),
        }
        for j, lab in enumerate(labels)
    }


def check_delta(delta: float, J: int) -> None:
    if not (0.0 <= delta < 1.0 / J):
        raise ConfigError(f"trimming threshold delta={delta} must satisfy 0 <= delta < 1/J = {1.0 / J:.6g}")


def symmetric_trim(e: PropensityMatrix, delta: float, z=None) -> TrimResult:
    check_delta(delta, e.J)
    kept = e.values.min(axis=1) >= delta
    return TrimResult(kept, float(delta), _counts(kept, z, e.group_labels), None, "symmetric")


def trimming_objective(g: np.ndarray) -> np.ndarray:
    """Variance proxy sum g / k^2 for keeping the k smallest g values, k = 1..N."""
    gs = np.sort(g)
    k = np.arange(1, gs.size + 1)
    return np.cumsum(gs) / k ** 2


def optimal_gamma(g: np.ndarray) -> float:
    """Smallest threshold among the observed g values minimising the proxy."""
    gs = np.sort(np.asarray(g, float))
    obj = trimming_objective(gs)
    # only cuts between distinct values are realisable thresholds
    last_of_tie = np.r_[gs[1:] != gs[:-1], True]
    cand = np.flatnonzero(last_of_tie)
    best = cand[np.argmin(obj[cand])]
    return float(gs[best])


def inverse_propensity_sum(e: PropensityMatrix) -> np.ndarray:
    return np.sum(1.0 / e.values, axis=1)


def optimal_trim(e: PropensityMatrix, z=None) -> TrimResult:
    g = inverse_propensity_sum(e)
    gamma = optimal_gamma(g)
    kept = g <= gamma
    # implied propensity cut for reporting: for two arms alpha solves 1/(a(1-a)) = gamma
    delta = None
    if e.J == 2:
        delta = float(0.5 - np.sqrt(max(0.25 - 1.0 / gamma, 0.0)))
    return TrimResult(kept, delta, _counts(kept, z, e.group_labels), gamma, "optimal")
