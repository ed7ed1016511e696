"""Design-stage balance diagnostics.

Weighted moments use reliability-weight variances

    s^2 = sum w (x - xbar_w)^2 * sum w / ((sum w)^2 - sum w^2),

which reduce to the usual n-1 divisor when all weights are equal. With more
than two arms the reported ASD is the maximum over all pairs (each pair
pooled as sqrt((s_j^2 + s_k^2)/2)) and PSD is the maximum over groups,
pooled across all groups as sqrt(mean_j s_j^2). Undefined metrics (zero
pooled variance) are NaN and serialise as null.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .formula import DesignMatrix
from .weights import (
    PropensityMatrix,
    TiltedWeights,
    WeightScheme,
    effective_sample_size,
    group_index,
    unit_weights,
)

THRESHOLD = 0.1
DENSITY_GRID = 512
HIST_BINS = 30


def weighted_moments(x, w=None, mask=None) -> tuple[float, float]:
    x = np.asarray(x, float)
    w = np.ones_like(x) if w is None else np.asarray(w, float)
    if mask is not None:
        mask = np.asarray(mask, bool)
        x, w = x[mask], w[mask]
    if x.size == 0:
        raise DataError("empty group")
    sw = w.sum()
    if not sw > 0:
        raise DataError("zero total weight in group")
    mean = float(np.dot(w, x) / sw)
    denom = sw ** 2 - np.dot(w, w)
    if denom <= 0:
        return mean, float("nan")
    var = float(np.dot(w, (x - mean) ** 2) * sw / denom)
    return mean, max(var, 0.0)


def _group_stats(x, w, idx, J, weighted_var):
    means = np.empty(J)
    var = np.empty(J)
    for j in range(J):
        m = idx == j
        means[j], wv = weighted_moments(x, w, m)
        var[j] = wv if weighted_var else weighted_moments(x, None, m)[1]
    return means, var


def _as_arrays(w, z, labels):
    if isinstance(w, TiltedWeights):
        w = w.w
    z = np.asarray(z, dtype=object)
    labels = tuple(sorted(set(z.tolist()))) if labels is None else tuple(labels)
    w = np.ones(len(z)) if w is None else np.asarray(w, float)
    return w, group_index(z, labels), labels


def _std_diff(diff: float, pooled_var: float) -> float:
    if not np.isfinite(pooled_var) or pooled_var <= 0:
        return float("nan")
    return abs(diff) / np.sqrt(pooled_var)


def asd(x, w, z, pair=None, weighted_var: bool = True, labels=None) -> float:
    """Absolute standardized difference between two groups (default: the only pair)."""
    w, idx, labels = _as_arrays(w, z, labels)
    J = len(labels)
    if pair is None:
        if J != 2:
            raise ConfigError("asd needs an explicit group pair when there are more than two groups")
        pair = (0, 1)
    j, k = (labels.index(p) if isinstance(p, str) else int(p) for p in pair)
    means, var = _group_stats(np.asarray(x, float), w, idx, J, weighted_var)
    return _std_diff(means[j] - means[k], (var[j] + var[k]) / 2.0)


def max_pairwise_asd(x, w, z, weighted_var: bool = True, labels=None) -> float:
    w, idx, labels = _as_arrays(w, z, labels)
    J = len(labels)
    means, var = _group_stats(np.asarray(x, float), w, idx, J, weighted_var)
    vals = [_std_diff(means[j] - means[k], (var[j] + var[k]) / 2.0)
            for j, k in itertools.combinations(range(J), 2)]
    vals = [v for v in vals if np.isfinite(v)]
    return max(vals) if vals else float("nan")


def psd(x, w, h, z, weighted_var: bool = True, labels=None) -> float:
    """Maximum over groups of |group mean - target mean| / pooled sd."""
    w, idx, labels = _as_arrays(w, z, labels)
    x = np.asarray(x, float)
    h = np.ones_like(x) if h is None else np.asarray(h, float)
    J = len(labels)
    means, var = _group_stats(x, w, idx, J, weighted_var)
    target = float(np.dot(h, x) / h.sum())
    pooled = float(np.mean(var))
    vals = [_std_diff(means[j] - target, pooled) for j in range(J)]
    vals = [v for v in vals if np.isfinite(v)]
    return max(vals) if vals else float("nan")


# reports ---------------------------------------------------------------


@dataclass
class BalanceReport:
    groups: tuple[str, ...]
    covariates: tuple[str, ...]
    schemes: tuple[str, ...]  # "unweighted" first
    means: dict[str, np.ndarray]  # scheme -> J x p
    variances: dict[str, np.ndarray]
    asd: dict[str, np.ndarray]  # scheme -> p (max pairwise for J >= 3)
    psd: dict[str, np.ndarray]
    ess: dict[str, dict[str, float]]
    group_sizes: dict[str, int]
    weighted_var: bool = True
    metric: str = "ASD"
    threshold: float = THRESHOLD
    trim: dict | None = None
    clamp_count: int = 0
    extra: dict = field(default_factory=dict)

    def metric_values(self, scheme: str, metric: str | None = None) -> np.ndarray:
        metric = (metric or self.metric).upper()
        return self.asd[scheme] if metric == "ASD" else self.psd[scheme]

    def flagged(self, scheme: str) -> list[str]:
        vals = self.metric_values(scheme)
        return [c for c, v in zip(self.covariates, vals) if np.isfinite(v) and v > self.threshold]

    def to_dict(self) -> dict:
        def clean(a):
            return [None if not np.isfinite(v) else float(v) for v in np.ravel(a)]

        by_scheme = {}
        for s in self.schemes:
            by_scheme[s] = {
                "means": {g: clean(self.means[s][j]) for j, g in enumerate(self.groups)},
                "variances": {g: clean(self.variances[s][j]) for j, g in enumerate(self.groups)},
                "ASD": clean(self.asd[s]),
                "PSD": clean(self.psd[s]),
                "flagged": self.flagged(s),
                "ess": self.ess[s],
            }
        return {
            "groups": list(self.groups),
            "group_sizes": self.group_sizes,
            "covariates": list(self.covariates),
            "options": {"weighted_var": self.weighted_var, "metric": self.metric,
                        "threshold": self.threshold},
            "clamp_count": self.clamp_count,
            "trim": self.trim,
            "schemes": by_scheme,
        }

    def render(self) -> str:
        lines = []
        for s in self.schemes:
            lines.append(f"{s}:")
            head = f"{'':<20}" + "".join(f"{g:>12}" for g in self.groups) + f"{self.metric:>10}"
            lines.append(head)
            vals = self.metric_values(s)
            for c, name in enumerate(self.covariates):
                row = f"{name[:20]:<20}" + "".join(f"{self.means[s][j, c]:>12.4f}" for j in range(len(self.groups)))
                v = vals[c]
                row += f"{v:>10.4f}" if np.isfinite(v) else f"{'NA':>10}"
                lines.append(row)
            lines.append("")
        return "\n".join(lines)


def _covariate_arrays(covariates):
    if isinstance(covariates, DesignMatrix):
        X, names = covariates.covariates()
    else:
        X, names = covariates
    X = np.asarray(X, float)
    if X.ndim == 1:
        X = X[:, None]
    return X, tuple(names)


def summarize_balance(covariates, z, e: PropensityMatrix, schemes, weighted_var: bool = True,
                      metric: str = "ASD", threshold: float = THRESHOLD, trim=None) -> BalanceReport:
    """Weighted means, variances, ASD/PSD and ESS for each scheme plus the unweighted sample."""
    metric = metric.upper()
    if metric not in ("ASD", "PSD"):
        raise ConfigError(f"metric must be ASD or PSD, got {metric!r}")
    schemes = [WeightScheme.parse(s) if isinstance(s, str) else s for s in schemes]
    if not schemes:
        raise ConfigError("at least one weighting scheme is required")
    X, names = _covariate_arrays(covariates)
    labels = e.group_labels
    z = np.asarray(z, dtype=object)
    idx = group_index(z, labels)
    J = len(labels)
    sizes = {lab: int(np.sum(idx == j)) for j, lab in enumerate(labels)}
    if min(sizes.values()) == 0:
        raise DataError("every treatment group must be non-empty")

    entries = [("unweighted", np.ones(len(z)), np.ones(len(z)))]
    for s in schemes:
        tw = unit_weights(s, e, z)
        entries.append((s.kind, tw.w, tw.h))

    means, variances, asds, psds, ess = {}, {}, {}, {}, {}
    for name, w, h in entries:
        M = np.empty((J, X.shape[1]))
        V = np.empty((J, X.shape[1]))
        a = np.empty(X.shape[1])
        p = np.empty(X.shape[1])
        for c in range(X.shape[1]):
            M[:, c], V[:, c] = _group_stats(X[:, c], w, idx, J, weighted_var)
            a[c] = max_pairwise_asd(X[:, c], w, z, weighted_var, labels)
            p[c] = psd(X[:, c], w, h, z, weighted_var, labels)
        means[name], variances[name], asds[name], psds[name] = M, V, a, p
        ess[name] = effective_sample_size(w, z, labels)
    return BalanceReport(
        groups=labels,
        covariates=names,
        schemes=tuple(n for n, _, _ in entries),
        means=means,
        variances=variances,
        asd=asds,
        psd=psds,
        ess=ess,
        group_sizes=sizes,
        weighted_var=weighted_var,
        metric=metric,
        threshold=threshold,
        trim=trim.to_dict() if trim is not None and hasattr(trim, "to_dict") else trim,
        clamp_count=e.clamp_count,
    )


# plot data -------------------------------------------------------------


@dataclass
class PlotSeries:
    kind: str
    series: dict
    threshold: float | None = None


def _silverman(x: np.ndarray) -> float:
    n = x.size
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * n ** (-0.2)


def kernel_density(x, grid: np.ndarray) -> np.ndarray:
    """Gaussian KDE (Silverman bandwidth) renormalised to integrate to 1 on ``grid``."""
    x = np.asarray(x, float)
    step = grid[1] - grid[0]
    bw = max(_silverman(x), step)
    u = (grid[:, None] - x[None, :]) / bw
    dens = np.exp(-0.5 * u * u).sum(axis=1) / (x.size * bw * np.sqrt(2 * np.pi))
    total = step * (dens.sum() - 0.5 * (dens[0] + dens[-1]))
    return dens / total if total > 0 else dens


def plot_series(kind: str, report: BalanceReport | None = None, e: PropensityMatrix | None = None,
                z=None, metric: str | None = None, threshold: float = THRESHOLD) -> PlotSeries:
    kind = {"balance": "love", "hist": "histogram"}.get(kind, kind)
    if kind == "love":
        if report is None:
            raise ConfigError("love plot needs a balance report")
        series = {s: dict(zip(report.covariates, map(float, report.metric_values(s, metric))))
                  for s in report.schemes}
        return PlotSeries("love", {"metric": (metric or report.metric).upper(), "values": series},
                          threshold)
    if e is None or z is None:
        raise ConfigError(f"{kind} plot needs propensity scores and treatment labels")
    idx = group_index(z, e.group_labels)
    if kind == "density":
        grid = np.linspace(0.0, 1.0, DENSITY_GRID)
        cols = [e.J - 1] if e.J == 2 else list(range(e.J))
        panels = {}
        for c in cols:
            panels[e.group_labels[c]] = {
                g: kernel_density(e.values[idx == j, c], grid)
                for j, g in enumerate(e.group_labels) if np.any(idx == j)
            }
        return PlotSeries("density", {"grid": grid, "panels": panels})
    if kind == "histogram":
        if e.J != 2:
            raise ConfigError("histogram is only available for binary treatments")
        edges = np.linspace(0.0, 1.0, HIST_BINS + 1)
        counts = {g: np.histogram(e.values[idx == j, 1], bins=edges)[0]
                  for j, g in enumerate(e.group_labels)}
        return PlotSeries("histogram", {"edges": edges, "counts": counts})
    raise ConfigError(f"unknown plot type {kind!r}")
