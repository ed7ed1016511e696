"""Variance estimation: stacked-estimating-equation sandwich and bootstrap.

The stacked system has parameter vector

    theta = (nu_1..nu_J, eta_1..eta_J, beta, alpha)

with per-unit contributions

    w_j(x; beta) D_ij (Y_i - m_j(x_i; alpha) - nu_j)      j = 1..J
    h(x; beta) (m_j(x_i; alpha) - eta_j)                  j = 1..J  (augmented only)
    S_beta(Z_i, x_i; beta)                                propensity score
    S_alpha(Y_i, Z_i, x_i; alpha)                         outcome scores (augmented only)

and mu_j = nu_j + eta_j. The propensity block is dropped (propensities held
fixed) when the scores were supplied externally or the scheme is matching;
the outcome block is dropped when predictions were supplied externally or
the scheme is matching.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable

import numpy as np

from .errors import ConfigError, EstimationError, PswError
from .estimation import ContrastSpec, transform_gradient, transform_means
from .glm import GlmFit, inverse_link, mean_derivative, softmax_probs
from .weights import CLAMP, WeightScheme, group_index, tilting, tilting_gradient

Z975 = NormalDist().inv_cdf(0.975)
DEFAULT_REPLICATES = 50
MAX_REDRAWS = 5
MAX_FAILED_FRACTION = 0.10


def _clamp(p: np.ndarray) -> np.ndarray:
    if np.any((p < CLAMP) | (p > 1 - CLAMP)):
        p = np.clip(p, CLAMP, 1 - CLAMP)
        p = p / p.sum(axis=1, keepdims=True)
    return p


@dataclass
class StackedSystem:
    y: np.ndarray
    idx: np.ndarray
    groups: tuple[str, ...]
    scheme: WeightScheme
    nu: np.ndarray
    eta: np.ndarray | None = None
    ps_X: np.ndarray | None = None
    beta: np.ndarray | None = None  # (J-1, q); level 0 is the reference
    e_fixed: np.ndarray | None = None
    out_X: np.ndarray | None = None
    alpha: np.ndarray | None = None  # (J, q_out)
    family: str | None = None
    offset: np.ndarray | None = None
    m_fixed: np.ndarray | None = None
    adjustments: tuple[str, ...] = ()

    # structure ---------------------------------------------------------

    @property
    def J(self) -> int:
        return len(self.groups)

    @property
    def augmented(self) -> bool:
        return self.eta is not None

    @property
    def has_ps_block(self) -> bool:
        return self.beta is not None

    @property
    def has_out_block(self) -> bool:
        return self.alpha is not None

    def block_sizes(self) -> dict[str, int]:
        sizes = {"nu": self.J}
        if self.augmented:
            sizes["eta"] = self.J
        if self.has_ps_block:
            sizes["beta"] = self.beta.size
        if self.has_out_block:
            sizes["alpha"] = self.alpha.size
        return sizes

    @property
    def theta(self) -> np.ndarray:
        parts = [self.nu]
        if self.augmented:
            parts.append(self.eta)
        if self.has_ps_block:
            parts.append(self.beta.ravel())
        if self.has_out_block:
            parts.append(self.alpha.ravel())
        return np.concatenate(parts)

    def _unpack(self, theta):
        out, pos = {}, 0
        for name, size in self.block_sizes().items():
            out[name] = theta[pos:pos + size]
            pos += size
        nu = out["nu"]
        eta = out.get("eta")
        beta = out["beta"].reshape(self.beta.shape) if "beta" in out else None
        alpha = out["alpha"].reshape(self.alpha.shape) if "alpha" in out else None
        return nu, eta, beta, alpha

    # nuisance quantities ------------------------------------------------

    def _propensity(self, beta):
        if beta is None:
            return self.e_fixed, self.e_fixed
        raw = softmax_probs(self.ps_X, beta)
        return raw, _clamp(raw)

    def _outcome(self, alpha):
        n = self.y.size
        if not self.augmented:
            return np.zeros((n, self.J)), None
        if alpha is None:
            return self.m_fixed, None
        lin = self.out_X @ alpha.T
        if self.offset is not None:
            lin = lin + self.offset[:, None]
        return inverse_link(self.family, lin), mean_derivative(self.family, lin)

    # estimating functions ----------------------------------------------

    def psi(self, theta: np.ndarray | None = None) -> np.ndarray:
        """N x P matrix of per-unit estimating-function values."""
        theta = self.theta if theta is None else np.asarray(theta, float)
        nu, eta, beta, alpha = self._unpack(theta)
        n, J = self.y.size, self.J
        D = np.zeros((n, J))
        D[np.arange(n), self.idx] = 1.0
        raw, E = self._propensity(beta)
        h = tilting(self.scheme, E, self.groups)
        W = h[:, None] / E
        M, _ = self._outcome(alpha)
        cols = [W * D * (self.y[:, None] - M - nu[None, :])]
        if self.augmented:
            cols.append(h[:, None] * (M - eta[None, :]))
        if beta is not None:
            R = D[:, 1:] - raw[:, 1:]
            cols.append(np.einsum("ik,ia->ika", R, self.ps_X).reshape(n, -1))
        if alpha is not None:
            R = D * (self.y[:, None] - M)
            cols.append(np.einsum("ij,ia->ija", R, self.out_X).reshape(n, -1))
        return np.concatenate(cols, axis=1)

    def jacobian(self, theta: np.ndarray | None = None) -> np.ndarray:
        """Analytic sum over units of d Psi_i / d theta^T (P x P)."""
        theta = self.theta if theta is None else np.asarray(theta, float)
        nu, eta, beta, alpha = self._unpack(theta)
        n, J = self.y.size, self.J
        sizes = self.block_sizes()
        P = sum(sizes.values())
        offs, pos = {}, 0
        for name, size in sizes.items():
            offs[name] = pos
            pos += size
        A = np.zeros((P, P))
        D = np.zeros((n, J))
        D[np.arange(n), self.idx] = 1.0
        raw, E = self._propensity(beta)
        h = tilting(self.scheme, E, self.groups)
        W = h[:, None] / E
        M, V = self._outcome(alpha)
        resid = self.y[:, None] - M - nu[None, :]

        o_nu = offs["nu"]
        A[o_nu:o_nu + J, o_nu:o_nu + J] = -np.diag((W * D).sum(axis=0))
        if self.augmented:
            o_eta = offs["eta"]
            A[o_eta:o_eta + J, o_eta:o_eta + J] = -np.eye(J) * h.sum()

        if beta is not None:
            X = self.ps_X
            q = X.shape[1]
            K = J - 1
            o_b = offs["beta"]
            # dE_k/dbeta_l = E_k (delta_kl - E_l) X, l = 1..J-1
            G = E[:, :, None] * (np.eye(J)[None, :, 1:] - E[:, None, 1:])  # n x J x K
            hg = tilting_gradient(self.scheme, E, self.groups)  # n x J
            dh = np.einsum("ik,ikl->il", hg, G)  # n x K
            # dW_j/dbeta_l = dh_l / E_j - W_j (delta_jl - E_l)
            dW = dh[:, None, :] / E[:, :, None] - W[:, :, None] * (
                np.eye(J)[None, :, 1:] - E[:, None, 1:])  # n x J x K
            coef = D * resid  # n x J
            blk = np.einsum("ij,ijl,ia->jla", coef, dW, X).reshape(J, K * q)
            A[o_nu:o_nu + J, o_b:o_b + K * q] = blk
            if self.augmented:
                o_eta = offs["eta"]
                blk = np.einsum("ij,il,ia->jla", M - eta[None, :], dh, X).reshape(J, K * q)
                A[o_eta:o_eta + J, o_b:o_b + K * q] = blk
            Wr = raw[:, 1:]
            XX = np.einsum("ia,ib->iab", X, X)
            H = -np.einsum("ik,il,iab->kalb", Wr, Wr, XX)
            diag = np.einsum("ik,iab->kab", Wr, XX)
            for k in range(K):
                H[k, :, k, :] += diag[k]
            A[o_b:o_b + K * q, o_b:o_b + K * q] = -H.reshape(K * q, K * q)

        if alpha is not None:
            Xo = self.out_X
            qo = Xo.shape[1]
            o_a = offs["alpha"]
            for j in range(J):
                cols = slice(o_a + j * qo, o_a + (j + 1) * qo)
                A[o_nu + j, cols] = -(W[:, j] * D[:, j] * V[:, j]) @ Xo
                if self.augmented:
                    A[offs["eta"] + j, cols] = (h * V[:, j]) @ Xo
                A[cols, cols] = -(Xo * (D[:, j] * V[:, j])[:, None]).T @ Xo
        return A

    def mu_selector(self) -> np.ndarray:
        """Linear map from theta to (mu_1..mu_J)."""
        P = self.theta.size
        L = np.zeros((self.J, P))
        L[:, :self.J] = np.eye(self.J)
        if self.augmented:
            L[:, self.J:2 * self.J] = np.eye(self.J)
        return L

    @property
    def mu(self) -> np.ndarray:
        return self.mu_selector() @ self.theta

    # construction -------------------------------------------------------

    @classmethod
    def from_fits(cls, y, z, groups, scheme: WeightScheme, *, e: np.ndarray,
                  ps_fit: GlmFit | None = None, augmented: bool = False,
                  out_fits: list[GlmFit] | None = None, m: np.ndarray | None = None,
                  nu: np.ndarray, eta: np.ndarray | None = None) -> "StackedSystem":
        """Assemble the system from fitted nuisance models and point estimates.

        ``e`` holds the (clamped) propensities actually used for weighting;
        ``ps_fit``/``out_fits`` are ``None`` when those values were imported.
        """
        groups = tuple(groups)
        idx = group_index(z, groups)
        adjustments = []
        kw = {}
        use_ps = ps_fit is not None and scheme.differentiable
        if use_ps:
            beta = np.atleast_2d(ps_fit.coefficients)
            kw.update(ps_X=ps_fit.X, beta=beta)
            adjustments.append("propensity score block included")
        else:
            kw.update(e_fixed=np.asarray(e, float))
            why = "matching weights" if ps_fit is not None else "external propensity scores"
            adjustments.append(f"propensity score block dropped ({why})")
        if augmented:
            use_out = out_fits is not None and scheme.differentiable
            if use_out:
                fam = out_fits[0].kind
                kw.update(out_X=out_fits[0].X,
                          alpha=np.vstack([f.coefficients for f in out_fits]),
                          family=fam, offset=out_fits[0].offset)
                adjustments.append("outcome model block included")
            else:
                if m is None:
                    m = np.column_stack([f.fitted_values for f in out_fits])
                kw.update(m_fixed=np.asarray(m, float))
                why = "matching weights" if out_fits is not None else "external outcome predictions"
                adjustments.append(f"outcome model block dropped ({why})")
        return cls(np.asarray(y, float), idx, groups, scheme, np.asarray(nu, float),
                   None if not augmented else np.asarray(eta, float),
                   adjustments=tuple(adjustments), **kw)


def numerical_jacobian(sys: StackedSystem, theta=None, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of sum_i Psi_i(theta); used for validation only."""
    theta = sys.theta if theta is None else np.asarray(theta, float)
    P = theta.size
    A = np.empty((P, P))
    for k in range(P):
        hk = step * max(1.0, abs(theta[k]))
        tp, tm = theta.copy(), theta.copy()
        tp[k] += hk
        tm[k] -= hk
        A[:, k] = (sys.psi(tp).sum(axis=0) - sys.psi(tm).sum(axis=0)) / (2 * hk)
    return A


# variance results ------------------------------------------------------


@dataclass
class VarianceResult:
    vcov_mu: np.ndarray
    method: str
    adjustments: tuple[str, ...] = ()
    bootstrap_draws: np.ndarray | None = None
    failed_replicates: int = 0
    vcov_theta: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "vcov_mu": self.vcov_mu.tolist(),
            "adjustments": list(self.adjustments),
        }
        if self.bootstrap_draws is not None:
            out["replicates"] = int(self.bootstrap_draws.shape[0])
            out["failed_replicates"] = self.failed_replicates
        return out


def sandwich_variance(sys: StackedSystem) -> VarianceResult:
    """A^{-1} B A^{-T} with A = sum dPsi_i/dtheta^T and B = sum Psi_i Psi_i^T."""
    Psi = sys.psi()
    A = sys.jacobian()
    B = Psi.T @ Psi
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e14:
        raise EstimationError(f"singular bread matrix in sandwich variance (condition number {cond:.3g})")
    Ainv = np.linalg.inv(A)
    V = Ainv @ B @ Ainv.T
    V = 0.5 * (V + V.T)
    L = sys.mu_selector()
    Vmu = L @ V @ L.T
    Vmu = 0.5 * (Vmu + Vmu.T)
    return VarianceResult(Vmu, "sandwich", sys.adjustments, None, 0, V)


def replicate_rng(seed: int, replicate: int, attempt: int = 0) -> np.random.Generator:
    """Independent stream per (replicate, attempt), so replicates can run in any order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replicate, attempt)))


def bootstrap_variance(pipeline: Callable[[np.ndarray], np.ndarray], n: int,
                       R: int = DEFAULT_REPLICATES, seed: int = 12345,
                       map_fn: Callable = map) -> VarianceResult:
    """Resample ``n`` units with replacement ``R`` times and rerun ``pipeline``.

    ``pipeline`` takes an index vector and returns the J average potential
    outcomes for that resample. A replicate whose pipeline raises a pswkit
    error is redrawn up to five times and then counted as failed; more than
    10% failed replicates aborts. ``map_fn`` may be a parallel map.
    """
    if R < 2:
        raise ConfigError("bootstrap needs at least 2 replicates")

    def one(r):
        last = None
        for attempt in range(MAX_REDRAWS + 1):
            rows = replicate_rng(seed, r, attempt).integers(0, n, size=n)
            try:
                return np.asarray(pipeline(rows), float)
            except PswError as exc:
                last = exc
        return last

    results = list(map_fn(one, range(R)))
    draws = [res for res in results if isinstance(res, np.ndarray)]
    failed = R - len(draws)
    if failed > MAX_FAILED_FRACTION * R:
        raise EstimationError(f"bootstrap aborted: {failed} of {R} replicates failed")
    draws = np.vstack(draws)
    vcov = np.atleast_2d(np.cov(draws, rowvar=False, ddof=1))
    adj = ("bootstrap: full pipeline re-run per replicate",)
    return VarianceResult(vcov, "bootstrap", adj, draws, failed)


# summaries -------------------------------------------------------------


@dataclass
class SummaryTable:
    labels: tuple[str, ...]
    estimate: np.ndarray
    std_error: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    z_value: np.ndarray
    p_value: np.ndarray
    scale: str
    contrast: np.ndarray
    groups: tuple[str, ...]
    method: str = "sandwich"
    exponentiated: bool = False

    def exponentiate(self) -> "SummaryTable":
        """Ratio scale: exp of estimate and confidence limits."""
        if self.scale == "DIF":
            raise ConfigError("exponentiation only applies to RR and OR scales")
        nan = np.full_like(self.estimate, np.nan)
        return SummaryTable(self.labels, np.exp(self.estimate), nan, np.exp(self.lower),
                            np.exp(self.upper), self.z_value, self.p_value, self.scale,
                            self.contrast, self.groups, self.method, True)

    def to_dict(self) -> dict:
        def f(v):
            return None if not np.isfinite(v) else float(v)

        rows = []
        for k, lab in enumerate(self.labels):
            rows.append({
                "label": lab,
                "contrast": [float(a) for a in self.contrast[k]],
                "estimate": f(self.estimate[k]),
                "std_error": f(self.std_error[k]),
                "lwr": f(self.lower[k]),
                "upr": f(self.upper[k]),
                "z": f(self.z_value[k]),
                "p_value": f(self.p_value[k]),
            })
        return {"scale": self.scale, "method": self.method,
                "exponentiated": self.exponentiated, "groups": list(self.groups),
                "contrasts": rows}

    def render(self, ci: bool = True) -> str:
        head = {"sandwich": "Closed-form inference:", "bootstrap": "Bootstrap inference:"}
        out = [head.get(self.method, self.method), ""]
        if self.scale == "RR":
            out += ["Inference in log scale:", ""] if not self.exponentiated else ["Causal risk ratio:", ""]
        elif self.scale == "OR":
            out += ["Inference in log odds ratio scale:", ""] if not self.exponentiated else [
                "Causal odds ratio:", ""]
        out += ["Original group value:  " + ", ".join(self.groups), "", "Contrast:"]
        lw = max(len(lab) for lab in self.labels)
        cw = max([len(g) for g in self.groups] + [4])
        out.append(" " * lw + "".join(f" {g:>{cw}}" for g in self.groups))
        for lab, row in zip(self.labels, self.contrast):
            out.append(f"{lab:<{lw}}" + "".join(f" {_num(a):>{cw}}" for a in row))
        out.append("")
        if ci:
            cols = ["Estimate", "Std.Error", "lwr", "upr", "Pr(>|z|)"]
            vals = [self.estimate, self.std_error, self.lower, self.upper, self.p_value]
        else:
            cols = ["Estimate", "Std.Error", "z value", "Pr(>|z|)"]
            vals = [self.estimate, self.std_error, self.z_value, self.p_value]
        if self.exponentiated:
            cols = ["Estimate", "lwr", "upr"]
            vals = [self.estimate, self.lower, self.upper]
        out.append(" " * lw + "".join(f" {c:>11}" for c in cols))
        for k, lab in enumerate(self.labels):
            cells = []
            for c, v in zip(cols, vals):
                x = v[k]
                if c == "Pr(>|z|)":
                    cells.append(f" {_pval(x):>11}")
                else:
                    cells.append(f" {x:>11.6f}" if np.isfinite(x) else f" {'NA':>11}")
            out.append(f"{lab:<{lw}}" + "".join(cells))
        return "\n".join(out) + "\n"


def _num(a: float) -> str:
    return str(int(a)) if float(a).is_integer() else f"{a:g}"


def _pval(p: float) -> str:
    if not np.isfinite(p):
        return "NA"
    if p < 2.2e-16:
        return "< 2.2e-16"
    return f"{p:.4g}"


def _normal_pvalues(est, se):
    zval = np.full_like(est, np.nan)
    p = np.empty_like(est)
    nd = NormalDist()
    for k, (e, s) in enumerate(zip(est, se)):
        if s > 0:
            zval[k] = e / s
            p[k] = min(1.0, 2.0 * (1.0 - nd.cdf(abs(zval[k]))))
        else:
            p[k] = 1.0 if e == 0 else 0.0
    return zval, p


def delta_transform(v: VarianceResult, mu, c: ContrastSpec, level: float = 0.95) -> SummaryTable:
    """Delta-method standard errors, symmetric normal CIs and two-sided p-values."""
    mu = np.asarray(mu, float)
    c.check(mu.size)
    est = c.matrix @ transform_means(mu, c.scale)
    G = c.matrix * transform_gradient(mu, c.scale)[None, :]
    var = np.einsum("kj,jl,kl->k", G, v.vcov_mu, G)
    se = np.sqrt(np.clip(var, 0.0, None))
    zc = NormalDist().inv_cdf(0.5 + level / 2.0)
    zval, p = _normal_pvalues(est, se)
    groups = tuple(str(k) for k in range(mu.size))
    return SummaryTable(c.labels, est, se, est - zc * se, est + zc * se, zval, p, c.scale,
                        c.matrix, groups, v.method)


def bootstrap_summary(v: VarianceResult, mu, c: ContrastSpec, level: float = 0.95) -> SummaryTable:
    """Percentile intervals (linear interpolation between order statistics) from the draws."""
    mu = np.asarray(mu, float)
    c.check(mu.size)
    est = c.matrix @ transform_means(mu, c.scale)
    T = np.vstack([c.matrix @ transform_means(d, c.scale) for d in v.bootstrap_draws])
    se = T.std(axis=0, ddof=1)
    alpha = (1.0 - level) / 2.0
    lo = np.quantile(T, alpha, axis=0, method="linear")
    hi = np.quantile(T, 1.0 - alpha, axis=0, method="linear")
    zval, p = _normal_pvalues(est, se)
    groups = tuple(str(k) for k in range(mu.size))
    return SummaryTable(c.labels, est, se, lo, hi, zval, p, c.scale, c.matrix, groups, "bootstrap")


def summarize(v: VarianceResult, mu, c: ContrastSpec, groups=None, level: float = 0.95) -> SummaryTable:
    tab = bootstrap_summary(v, mu, c, level) if v.method == "bootstrap" else delta_transform(v, mu, c, level)
    if groups is not None:
        tab.groups = tuple(groups)
    return tab
