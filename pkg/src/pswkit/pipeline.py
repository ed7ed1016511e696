"""End-to-end analysis: ingest -> propensity -> (trim -> refit) -> weights ->
(outcome fits) -> means -> variance.

Columns are converted to arrays once (:func:`prepare`); trimming and
bootstrap resampling then work on row subsets of those arrays, so factor
coding is fixed by the full data set.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .balance import BalanceReport, summarize_balance
from .data import Dataset
from .errors import ConfigError, DataError
from .estimation import ContrastSpec, PotentialOutcomeMeans, augmented_means, hajek_means
from .formula import DesignMatrix, build_design_matrix, parse_formula
from .glm import GlmFamily, GlmFit, fit_binary_logistic, fit_multinomial_logistic, fit_outcome_glm
from .inference import (
    StackedSystem,
    SummaryTable,
    VarianceResult,
    bootstrap_variance,
    sandwich_variance,
    summarize,
)
from .trimming import TrimResult, check_delta, optimal_trim, symmetric_trim
from .weights import (
    PropensityMatrix,
    TiltedWeights,
    WeightScheme,
    effective_sample_size,
    group_index,
    unit_weights,
)


@dataclass(frozen=True)
class AnalysisConfig:
    ps_formula: str | None = None
    ps_cols: tuple[str, ...] | None = None
    treatment: str | None = None
    treated_group: str | None = None
    outcome: str | None = None
    weight: str = "overlap"
    delta: float = 0.0
    optimal: bool = False
    augmentation: bool = False
    out_formula: str | None = None
    out_cols: tuple[str, ...] | None = None
    family: str = "gaussian"
    offset: str | None = None
    bootstrap: bool = False
    replicates: int = 50
    seed: int = 12345
    covariates: str | None = None

    def validate(self, need_outcome: bool = True) -> None:
        if self.ps_formula and self.ps_cols:
            raise ConfigError("--ps-formula and --ps-cols are mutually exclusive")
        if not self.ps_formula and not self.ps_cols:
            raise ConfigError("either a propensity formula or external propensity columns is required")
        if self.ps_cols and not self.treatment:
            raise ConfigError("external propensity columns need the treatment column name")
        if self.optimal and self.delta:
            raise ConfigError("--delta and --optimal are mutually exclusive")
        if self.delta < 0:
            raise ConfigError("delta must be non-negative")
        WeightScheme.parse(self.weight, self.treated_group)
        if self.family not in ("gaussian", "binomial", "poisson"):
            raise ConfigError(f"unknown outcome family {self.family!r}")
        if self.offset and self.family != "poisson":
            raise ConfigError("--offset is only valid with --family poisson")
        if need_outcome:
            if self.augmentation:
                if not self.out_formula and not self.out_cols:
                    raise ConfigError("--augmentation requires --out-formula or --out-cols")
                if self.out_formula and self.out_cols:
                    raise ConfigError("--out-formula and --out-cols are mutually exclusive")
            if not self.outcome and not self.out_formula:
                raise ConfigError("the outcome column name is required")
        if self.replicates < 2:
            raise ConfigError("--replicates must be at least 2")

    @property
    def outcome_name(self) -> str | None:
        if self.outcome:
            return self.outcome
        if self.out_formula:
            return parse_formula(self.out_formula).response
        return None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("ps_cols", "out_cols"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d


@dataclass(frozen=True)
class Prepared:
    """Numeric arrays needed by the pipeline, row-aligned."""

    z: np.ndarray
    groups: tuple[str, ...]
    ps_X: DesignMatrix | None = None
    e_ext: np.ndarray | None = None
    y: np.ndarray | None = None
    out_X: DesignMatrix | None = None
    m_ext: np.ndarray | None = None
    offset: np.ndarray | None = None
    cov_X: np.ndarray | None = None
    cov_names: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return len(self.z)

    def take(self, rows) -> "Prepared":
        rows = np.asarray(rows)

        def sub(a):
            if a is None:
                return None
            if isinstance(a, DesignMatrix):
                return DesignMatrix(a.values[rows], a.column_names, a.has_intercept)
            return a[rows]

        return Prepared(self.z[rows], self.groups, sub(self.ps_X), sub(self.e_ext), sub(self.y),
                        sub(self.out_X), sub(self.m_ext), sub(self.offset), sub(self.cov_X),
                        self.cov_names)


def prepare(data: Dataset, cfg: AnalysisConfig, need_outcome: bool = True) -> Prepared:
    cfg.validate(need_outcome)
    ps_X = e_ext = y = out_X = m_ext = offset = None
    if cfg.ps_formula:
        f = parse_formula(cfg.ps_formula)
        if cfg.treatment and cfg.treatment != f.response:
            raise ConfigError("treatment column differs from the propensity formula response")
        z = data.labels(f.response)
        ps_X = build_design_matrix(f, data)
    else:
        z = data.labels(cfg.treatment)
    groups = tuple(sorted(set(z.tolist())))
    if len(groups) < 2:
        raise DataError("the treatment must have at least two observed levels")
    J = len(groups)
    if cfg.ps_cols:
        e_ext = _external_propensity(data, cfg, groups)
    if cfg.covariates:
        cf = parse_formula("__ ~ " + cfg.covariates)
        cov_X, cov_names = build_design_matrix(cf, data, intercept=False).covariates()
    elif ps_X is not None:
        cov_X, cov_names = ps_X.covariates()
    else:
        cov_X, cov_names = None, ()
    if need_outcome:
        yname = cfg.outcome_name
        y = data.numeric(yname, "outcome")
        if cfg.augmentation and cfg.out_formula:
            of = parse_formula(cfg.out_formula)
            if of.response != yname:
                raise ConfigError(f"outcome formula response {of.response!r} differs from outcome {yname!r}")
            out_X = build_design_matrix(of, data)
        elif cfg.augmentation:
            if len(cfg.out_cols) != J:
                raise ConfigError(f"--out-cols needs one column per treatment level ({J})")
            m_ext = np.column_stack([data.numeric(c, "outcome prediction") for c in cfg.out_cols])
        if cfg.offset:
            offset = data.numeric(cfg.offset, "offset")
    return Prepared(z, groups, ps_X, e_ext, y, out_X, m_ext, offset,
                    None if cov_X is None else np.asarray(cov_X), tuple(cov_names))


def _external_propensity(data: Dataset, cfg: AnalysisConfig, groups) -> np.ndarray:
    J = len(groups)
    cols = [data.numeric(c, "propensity score") for c in cfg.ps_cols]
    if len(cols) == 1 and J == 2:
        treated = cfg.treated_group or groups[-1]
        if treated not in groups:
            raise ConfigError(f"treated group {treated!r} not among levels {groups}")
        p = cols[0]
        p_last = p if treated == groups[-1] else 1.0 - p
        e = np.column_stack([1.0 - p_last, p_last])
    elif len(cols) == J:
        e = np.column_stack(cols)
        if not np.allclose(e.sum(axis=1), 1.0, atol=1e-6):
            raise DataError("external generalized propensity scores must sum to 1 in every row")
    else:
        raise ConfigError(f"--ps-cols needs {J} columns (or one column for a binary treatment)")
    if np.any((e <= 0) | (e >= 1)):
        raise DataError("external propensity scores must lie strictly inside (0, 1)")
    return e


# stages -----------------------------------------------------------------


def fit_propensity(prep: Prepared) -> tuple[PropensityMatrix, GlmFit | None]:
    groups = prep.groups
    if prep.e_ext is not None:
        return PropensityMatrix.from_probabilities(prep.e_ext, groups, source="external"), None
    if len(set(prep.z.tolist())) != len(groups):
        raise DataError("a treatment group has no units")
    if len(groups) == 2:
        fit = fit_binary_logistic(prep.ps_X, (prep.z == groups[1]).astype(float))
        probs = fit.fitted_values
    else:
        fit = fit_multinomial_logistic(prep.ps_X, prep.z)
        probs = fit.fitted_values
    return PropensityMatrix.from_probabilities(probs, groups), fit


@dataclass
class Fitted:
    prep: Prepared  # kept units
    e: PropensityMatrix
    ps_fit: GlmFit | None
    trim: TrimResult | None
    weights: TiltedWeights | None = None
    pom: PotentialOutcomeMeans | None = None
    out_fits: list[GlmFit] | None = None
    m: np.ndarray | None = None
    system: StackedSystem | None = None


def propensity_stage(prep: Prepared, cfg: AnalysisConfig) -> Fitted:
    """Fit or import propensities; trim and refit on the kept units when requested."""
    e, fit = fit_propensity(prep)
    trim = None
    if cfg.optimal or cfg.delta > 0:
        if cfg.optimal:
            trim = optimal_trim(e, prep.z)
        else:
            check_delta(cfg.delta, e.J)
            trim = symmetric_trim(e, cfg.delta, prep.z)
        prep = prep.take(np.flatnonzero(trim.kept_mask))
        if len(set(prep.z.tolist())) != len(prep.groups):
            raise DataError("trimming removed every unit of a treatment group")
        e, fit = fit_propensity(prep)
    elif cfg.delta:
        check_delta(cfg.delta, e.J)
    return Fitted(prep, e, fit, trim)


def estimate_stage(st: Fitted, cfg: AnalysisConfig) -> Fitted:
    prep = st.prep
    scheme = WeightScheme.parse(cfg.weight, cfg.treated_group)
    tw = unit_weights(scheme, st.e, prep.z)
    out_fits = m = None
    if cfg.augmentation:
        if prep.m_ext is not None:
            m = prep.m_ext
        else:
            fam = GlmFamily(cfg.family, prep.offset)
            out_fits = [fit_outcome_glm(prep.out_X, prep.y, fam, prep.z == g) for g in prep.groups]
            m = np.column_stack([f.fitted_values for f in out_fits])
        pom = augmented_means(prep.y, tw, prep.z, prep.groups, m=m)
    else:
        pom = hajek_means(prep.y, tw, prep.z, prep.groups)
    return dataclasses.replace(st, weights=tw, pom=pom, out_fits=out_fits, m=m)


def build_system(st: Fitted, cfg: AnalysisConfig) -> StackedSystem:
    pom = st.pom
    return StackedSystem.from_fits(
        st.prep.y, st.prep.z, st.prep.groups, st.weights.scheme, e=st.e.values,
        ps_fit=st.ps_fit, augmented=cfg.augmentation, out_fits=st.out_fits, m=st.m,
        nu=pom.components.get("nu", pom.mu), eta=pom.components.get("eta"))


def point_estimate(prep: Prepared, cfg: AnalysisConfig) -> np.ndarray:
    return estimate_stage(propensity_stage(prep, cfg), cfg).pom.mu


@dataclass
class AnalysisResult:
    config: AnalysisConfig
    fitted: Fitted
    variance: VarianceResult
    n_input: int

    @property
    def mu(self) -> np.ndarray:
        return self.fitted.pom.mu

    @property
    def groups(self) -> tuple[str, ...]:
        return self.fitted.prep.groups

    def summary(self, contrast: ContrastSpec | None = None, scale: str = "DIF") -> SummaryTable:
        if contrast is None:
            contrast = ContrastSpec.pairwise(self.groups, scale)
        return summarize(self.variance, self.mu, contrast, self.groups)

    def to_dict(self) -> dict:
        st = self.fitted
        return {
            "groups": list(self.groups),
            "n_input": self.n_input,
            "n_analysed": st.prep.n,
            "weight": st.weights.scheme.kind,
            "augmented": self.config.augmentation,
            "clamp_count": st.e.clamp_count,
            "trim": None if st.trim is None else st.trim.to_dict(),
            "mu": {g: float(v) for g, v in zip(self.groups, self.mu)},
            "variance": self.variance.to_dict(),
            "ess": _ess(st),
        }


def _ess(st: Fitted) -> dict[str, float]:
    return effective_sample_size(st.weights, st.prep.z, st.prep.groups)


def run_analysis(prep: Prepared, cfg: AnalysisConfig, map_fn=map) -> AnalysisResult:
    st = estimate_stage(propensity_stage(prep, cfg), cfg)
    if cfg.bootstrap:
        var = bootstrap_variance(lambda rows: point_estimate(prep.take(rows), cfg), prep.n,
                                 cfg.replicates, cfg.seed, map_fn)
    else:
        sysm = build_system(st, cfg)
        st.system = sysm
        var = sandwich_variance(sysm)
    return AnalysisResult(cfg, st, var, prep.n)


def run_design(prep: Prepared, cfg: AnalysisConfig, schemes, weighted_var: bool = True,
               metric: str = "ASD", threshold: float = 0.1) -> tuple[BalanceReport, Fitted]:
    if prep.cov_X is None:
        raise ConfigError("balance diagnostics need covariates (a propensity formula or --covariates)")
    st = propensity_stage(prep, cfg)
    schemes = [WeightScheme.parse(s, cfg.treated_group) for s in schemes]
    report = summarize_balance((st.prep.cov_X, prep.cov_names), st.prep.z, st.e, schemes,
                               weighted_var, metric, threshold, st.trim)
    return report, st


def group_sizes(prep: Prepared) -> dict[str, int]:
    idx = group_index(prep.z, prep.groups)
    return {g: int(np.sum(idx == j)) for j, g in enumerate(prep.groups)}
