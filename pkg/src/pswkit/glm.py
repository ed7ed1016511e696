"""Maximum-likelihood fitting of canonical-link GLMs.

Binary and multinomial logistic models back the propensity score; gaussian,
binomial and poisson models back the group-specific outcome regressions.
All fits use Newton-Raphson (equivalently IRLS under canonical links) with
step-halving, and expose per-unit score contributions and the observed
information so that downstream M-estimation can stack them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConvergenceError, DataError, RankDeficientError
from .formula import DesignMatrix

TOL = 1e-8
MAX_ITER = 100
MAX_HALVINGS = 10

FAMILIES = ("binomial", "multinomial", "gaussian", "poisson")


@dataclass(frozen=True)
class GlmFamily:
    kind: str
    offset: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ConfigError(f"unknown family {self.kind!r}; expected one of {FAMILIES}")
        if self.offset is not None and self.kind != "poisson":
            raise ConfigError("an offset is only valid for the poisson family")


# link helpers (canonical links throughout) ------------------------------


def expit(eta):
    return np.exp(-np.logaddexp(0.0, -eta))


def inverse_link(kind: str, eta: np.ndarray) -> np.ndarray:
    if kind == "gaussian":
        return eta
    if kind == "binomial":
        return expit(eta)
    if kind == "poisson":
        return np.exp(eta)
    raise ValueError(kind)


def mean_derivative(kind: str, eta: np.ndarray) -> np.ndarray:
    """d mu / d eta, which for canonical links equals the variance function."""
    if kind == "gaussian":
        return np.ones_like(eta)
    if kind == "binomial":
        return expit(eta) * expit(-eta)
    if kind == "poisson":
        return np.exp(eta)
    raise ValueError(kind)


def softmax_probs(X: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Baseline-category probabilities; ``coef`` is (J-1, q), level 0 is the reference."""
    eta = np.column_stack([np.zeros(X.shape[0]), X @ coef.T])
    eta -= eta.max(axis=1, keepdims=True)
    p = np.exp(eta)
    return p / p.sum(axis=1, keepdims=True)


def unit_loglik(kind: str, X: np.ndarray, y: np.ndarray, coef: np.ndarray,
                offset: np.ndarray | None = None) -> np.ndarray:
    """Per-unit log-likelihood (up to terms free of ``coef``)."""
    if kind == "multinomial":
        eta = np.column_stack([np.zeros(X.shape[0]), X @ coef.T])
        lse = np.logaddexp.reduce(eta, axis=1)
        return (y * eta).sum(axis=1) - lse
    eta = X @ coef
    if offset is not None:
        eta = eta + offset
    if kind == "binomial":
        return y * eta - np.logaddexp(0.0, eta)
    if kind == "poisson":
        return y * eta - np.exp(eta)
    if kind == "gaussian":
        return -0.5 * (y - eta) ** 2
    raise ValueError(kind)


def _deviance(kind, X, y, coef, offset) -> float:
    ll = unit_loglik(kind, X, y, coef, offset)
    if kind == "poisson":
        pos = y > 0
        sat = np.zeros_like(y)
        sat[pos] = y[pos] * np.log(y[pos]) - y[pos]
        sat[~pos] = 0.0
        return float(2.0 * np.sum(sat - ll))
    # binomial / multinomial with 0-1 responses: saturated log-likelihood is 0
    return float(-2.0 * np.sum(ll))


def _score_and_info(kind, X, y, coef, offset):
    if kind == "multinomial":
        P = softmax_probs(X, coef)
        W = P[:, 1:]
        R = y[:, 1:] - W
        g = (R.T @ X).ravel()
        K, q = W.shape[1], X.shape[1]
        XX = np.einsum("ia,ib->iab", X, X)
        H = -np.einsum("ik,il,iab->kalb", W, W, XX)
        diag = np.einsum("ik,iab->kab", W, XX)
        for k in range(K):
            H[k, :, k, :] += diag[k]
        return g, H.reshape(K * q, K * q)
    eta = X @ coef
    if offset is not None:
        eta = eta + offset
    mu = inverse_link(kind, eta)
    v = mean_derivative(kind, eta)
    g = X.T @ (y - mu)
    H = (X * v[:, None]).T @ X
    return g, H


# fitted model ---------------------------------------------------------------


@dataclass(frozen=True)
class GlmFit:
    """A fitted GLM.

    ``fitted_values`` covers every row of ``X`` (for outcome models this
    includes units outside the fitting subset). Score contributions are zero
    for rows outside ``mask``.
    """

    kind: str
    coefficients: np.ndarray
    fitted_values: np.ndarray
    converged: bool
    iterations: int
    deviance: float
    deviance_path: tuple[float, ...]
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    offset: np.ndarray | None = field(default=None, repr=False)
    levels: tuple[str, ...] | None = None
    column_names: tuple[str, ...] | None = None

    @property
    def n_params(self) -> int:
        return int(self.coefficients.size)

    def score_contributions(self, coef: np.ndarray | None = None) -> np.ndarray:
        """N x dim matrix of per-unit scores S(unit i) (rows outside mask are 0)."""
        coef = self.coefficients if coef is None else coef
        X = self.X
        out = np.zeros((X.shape[0], coef.size))
        m = self.mask
        if self.kind == "multinomial":
            P = softmax_probs(X, coef)
            R = self.y[:, 1:] - P[:, 1:]
            out[m] = np.einsum("ik,ia->ika", R[m], X[m]).reshape(int(m.sum()), -1)
            return out
        eta = X @ coef
        if self.offset is not None:
            eta = eta + self.offset
        mu = inverse_link(self.kind, eta)
        out[m] = X[m] * (self.y[m] - mu[m])[:, None]
        return out

    def score(self, unit: int) -> np.ndarray:
        return self.score_contributions()[unit]

    def information(self) -> np.ndarray:
        m = self.mask
        off = None if self.offset is None else self.offset[m]
        _, H = _score_and_info(self.kind, self.X[m], self.y[m], self.coefficients, off)
        return H

    def unit_loglik(self, coef: np.ndarray | None = None) -> np.ndarray:
        coef = self.coefficients if coef is None else coef
        ll = unit_loglik(self.kind, self.X, self.y, coef, self.offset)
        return np.where(self.mask, ll, 0.0)


def _as_matrix(X) -> tuple[np.ndarray, tuple[str, ...] | None]:
    if isinstance(X, DesignMatrix):
        return np.asarray(X.values, float), X.column_names
    return np.asarray(X, float), None


def _check_rank(X: np.ndarray, what: str) -> None:
    n, q = X.shape
    if n <= q:
        raise RankDeficientError(f"{what}: {n} observations for {q} parameters")
    if np.linalg.matrix_rank(X) < q:
        raise RankDeficientError(f"{what}: design matrix is rank deficient")


def _newton(kind, X, y, start, offset, what):
    coef = start.copy()
    dev = _deviance(kind, X, y, coef, offset)
    path = [dev]
    for it in range(1, MAX_ITER + 1):
        g, H = _score_and_info(kind, X, y, coef, offset)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            raise ConvergenceError(f"{what}: singular information matrix at iteration {it}") from None
        if not np.all(np.isfinite(step)):
            raise ConvergenceError(f"{what}: non-finite Newton step at iteration {it}")
        step = step.reshape(coef.shape)
        t = 1.0
        new = coef + step
        new_dev = _deviance(kind, X, y, new, offset)
        # deviance is flat near the optimum; allow rounding-level increases
        slack = 1e-12 * max(abs(dev), 1.0)
        halvings = 0
        while not (np.isfinite(new_dev) and new_dev <= dev + slack) and halvings < MAX_HALVINGS:
            t *= 0.5
            halvings += 1
            new = coef + t * step
            new_dev = _deviance(kind, X, y, new, offset)
        if not (np.isfinite(new_dev) and new_dev <= dev + slack):
            # no descent possible along the Newton direction: numerically at the optimum
            new, new_dev = coef, dev
        rel = abs(dev - new_dev) / max(abs(new_dev), 1e-300)
        coef, dev = new, new_dev
        path.append(dev)
        if rel < TOL:
            # one polishing step pushes the score identity to machine level
            g, H = _score_and_info(kind, X, y, coef, offset)
            try:
                polished = coef + np.linalg.solve(H, g).reshape(coef.shape)
            except np.linalg.LinAlgError:
                polished = coef
            pdev = _deviance(kind, X, y, polished, offset)
            if np.isfinite(pdev) and pdev <= dev + slack:
                coef, dev = polished, pdev
            path.append(dev)
            return coef, it, dev, tuple(path)
    raise ConvergenceError(
        f"{what}: no convergence after {MAX_ITER} iterations (possible separation)"
    )


def fit_binary_logistic(X, z) -> GlmFit:
    """Logistic regression of a 0/1 vector ``z`` on ``X``."""
    Xv, names = _as_matrix(X)
    z = np.asarray(z, float)
    if not np.all((z == 0) | (z == 1)):
        raise DataError("binary logistic response must be coded 0/1")
    if z.min() == z.max():
        raise DataError("binary logistic fit requires both classes present")
    _check_rank(Xv, "propensity model")
    coef, it, dev, path = _newton("binomial", Xv, z, np.zeros(Xv.shape[1]), None, "propensity model")
    fitted = expit(Xv @ coef)
    return GlmFit("binomial", coef, fitted, True, it, dev, path, Xv, z,
                  np.ones(len(z), bool), None, None, names)


def fit_multinomial_logistic(X, z) -> GlmFit:
    """Baseline-category logit for J >= 3 labels (reference = lexicographically first)."""
    Xv, names = _as_matrix(X)
    z = np.asarray(z, dtype=object)
    levels = tuple(sorted(set(z.tolist())))
    J = len(levels)
    if J < 3:
        raise ConfigError(
            f"multinomial fit needs at least 3 treatment levels, got {J}; use fit_binary_logistic"
        )
    n, q = Xv.shape
    if n <= q * (J - 1):
        raise RankDeficientError(f"propensity model: {n} observations for {q * (J - 1)} parameters")
    _check_rank(Xv, "propensity model")
    Y = np.column_stack([(z == lev).astype(float) for lev in levels])
    start = np.zeros((J - 1, q))
    coef, it, dev, path = _newton("multinomial", Xv, Y, start, None, "propensity model")
    fitted = softmax_probs(Xv, coef)
    return GlmFit("multinomial", coef, fitted, True, it, dev, path, Xv, Y,
                  np.ones(n, bool), None, levels, names)


def fit_outcome_glm(X, y, fam: GlmFamily, subset=None) -> GlmFit:
    """Fit ``y ~ X`` on the units selected by ``subset``; predict for all units."""
    Xv, names = _as_matrix(X)
    y = np.asarray(y, float)
    n = Xv.shape[0]
    mask = np.ones(n, bool) if subset is None else np.asarray(subset, bool)
    kind = fam.kind
    if kind == "multinomial":
        raise ConfigError("multinomial is not an outcome family")
    ys = y[mask]
    if kind == "binomial" and not np.all((ys == 0) | (ys == 1)):
        raise DataError("binomial outcome family requires outcomes in {0, 1}")
    if kind == "poisson" and not (np.all(ys >= 0) and np.all(ys == np.round(ys))):
        raise DataError("poisson outcome family requires non-negative integer counts")
    offset = None if fam.offset is None else np.asarray(fam.offset, float)
    Xs = Xv[mask]
    _check_rank(Xs, f"outcome model ({kind})")
    if kind == "gaussian":
        coef = np.linalg.lstsq(Xs, ys, rcond=None)[0]
        # one Newton refinement step tightens the normal equations
        r = ys - Xs @ coef
        coef = coef + np.linalg.solve(Xs.T @ Xs, Xs.T @ r)
        dev = float(np.sum((ys - Xs @ coef) ** 2))
        it, path = 1, (dev,)
    else:
        off_s = None if offset is None else offset[mask]
        if kind == "poisson":
            target = np.log(ys + 0.5) - (0.0 if off_s is None else off_s)
            start = np.linalg.lstsq(Xs, target, rcond=None)[0]
        else:
            start = np.zeros(Xs.shape[1])
        coef, it, dev, path = _newton(kind, Xs, ys, start, off_s, f"outcome model ({kind})")
    eta = Xv @ coef
    if offset is not None:
        eta = eta + offset
    fitted = inverse_link(kind, eta)
    return GlmFit(kind, coef, fitted, True, it, dev, path, Xv, y, mask, offset, None, names)
