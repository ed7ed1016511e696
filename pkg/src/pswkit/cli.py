"""Command-line front end: ``pswkit design|trim|estimate|simulate``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 fit failure.
Errors are reported as a single ``pswkit: error[<kind>]: <message>`` line on
stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .balance import plot_series
from .data import Dataset
from .errors import ConfigError, DataError, FitError, PswError
from .estimation import ContrastSpec
from .pipeline import AnalysisConfig, prepare, propensity_stage, run_analysis, run_design
from .simulation import get_scenario, simulate, true_wate
from .trimming import symmetric_trim
from .weights import SCHEMES

SCHEMA = "psw/1"
EXIT_CODES = ((ConfigError, 2), (DataError, 3), (FitError, 4))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_json(payload: dict) -> str:
    return json.dumps(_jsonable(payload), indent=2, allow_nan=False) + "\n"


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _split(text: str | None) -> tuple[str, ...] | None:
    if text is None:
        return None
    items = tuple(s.strip() for s in text.split(",") if s.strip())
    if not items:
        raise ConfigError(f"empty column list {text!r}")
    return items


# argument parsing ------------------------------------------------------


def _add_propensity(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="input CSV with a header row")
    p.add_argument("--ps-formula", help='propensity model, e.g. "z ~ x1 + factor(x2)"')
    p.add_argument("--ps-cols", help="comma-separated external propensity score columns")
    p.add_argument("--treatment", help="treatment column (required with --ps-cols)")
    p.add_argument("--treated-group", help="treated level for the treated weights / single-column scores")
    trim = p.add_mutually_exclusive_group()
    trim.add_argument("--delta", type=float, default=0.0, help="symmetric trimming threshold")
    trim.add_argument("--optimal", action="store_true", help="data-driven optimal trimming")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pswkit", description="Propensity score weighting analyses.")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="propensity fit and covariate balance diagnostics")
    _add_propensity(d)
    d.add_argument("--weights", default="overlap", help=f"comma list from {', '.join(SCHEMES)}")
    d.add_argument("--weighted-var", dest="weighted_var", action="store_true", default=True)
    d.add_argument("--no-weighted-var", dest="weighted_var", action="store_false")
    d.add_argument("--metric", default="ASD", choices=["ASD", "PSD", "asd", "psd"])
    d.add_argument("--threshold", type=float, default=0.1)
    d.add_argument("--covariates", help='balance covariates as a formula right-hand side, e.g. "x1 + x2"')
    d.add_argument("--plot-love", metavar="SVG")
    d.add_argument("--plot-density", metavar="SVG")
    d.add_argument("--plot-hist", metavar="SVG")
    d.add_argument("--out", help="balance report JSON (default stdout)")

    t = sub.add_parser("trim", help="trim units with extreme propensity scores")
    _add_propensity(t)
    t.add_argument("--out", required=True, help="CSV of the kept rows")

    e = sub.add_parser("estimate", help="weighted estimates of average potential outcomes")
    _add_propensity(e)
    e.add_argument("--yname", required=True, help="outcome column")
    e.add_argument("--weight", default="overlap", choices=SCHEMES)
    e.add_argument("--augmentation", action="store_true")
    e.add_argument("--out-formula", help='outcome model, e.g. "y ~ x1 + x2"')
    e.add_argument("--out-cols", help="comma-separated external outcome predictions, one per group")
    e.add_argument("--family", default="gaussian", choices=["gaussian", "binomial", "poisson"])
    e.add_argument("--offset", help="offset column (poisson only)")
    e.add_argument("--bootstrap", action="store_true")
    e.add_argument("--replicates", type=int, default=50)
    e.add_argument("--seed", type=int, default=12345)
    e.add_argument("--contrast", help='rows separated by ";", e.g. "1,-1,0;0,1,-1"')
    e.add_argument("--type", dest="scale", default="DIF", choices=["DIF", "RR", "OR"])
    e.add_argument("--no-ci", action="store_true", help="print z statistics instead of intervals")
    e.add_argument("--exponentiate", action="store_true", help="report RR/OR on the ratio scale")
    e.add_argument("--out", help="estimate JSON")

    s = sub.add_parser("simulate", help="generate a synthetic data set")
    s.add_argument("--scenario", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=12345)
    s.add_argument("--p", type=int)
    s.add_argument("--effect", choices=["constant", "heterogeneous"])
    s.add_argument("--outcome", choices=["continuous", "binary"])
    s.add_argument("--emit-truth", metavar="SCHEME", choices=SCHEMES)
    s.add_argument("--truth-draws", type=int, default=1_000_000)
    s.add_argument("--truth-out", help="oracle JSON path (default: next to --out)")
    s.add_argument("--out", help="CSV path (default stdout)")
    return parser


def _config(args, outcome: bool) -> AnalysisConfig:
    kw = dict(
        ps_formula=args.ps_formula,
        ps_cols=_split(args.ps_cols),
        treatment=args.treatment,
        treated_group=args.treated_group,
        delta=args.delta,
        optimal=args.optimal,
    )
    if outcome:
        kw.update(outcome=args.yname, weight=args.weight, augmentation=args.augmentation,
                  out_formula=args.out_formula, out_cols=_split(args.out_cols), family=args.family,
                  offset=args.offset, bootstrap=args.bootstrap, replicates=args.replicates,
                  seed=args.seed)
    elif getattr(args, "covariates", None):
        kw.update(covariates=args.covariates)
    return AnalysisConfig(**kw)


# commands --------------------------------------------------------------


def cmd_design(args) -> int:
    from .plots import render

    cfg = _config(args, outcome=False)
    schemes = _split(args.weights)
    data = Dataset.from_csv(args.data)
    prep = prepare(data, cfg, need_outcome=False)
    report, st = run_design(prep, cfg, schemes, args.weighted_var, args.metric.upper(), args.threshold)
    run = {**vars(args), "resolved": cfg.to_dict()}
    payload = {"schema": SCHEMA, "command": "design", "config": run,
               "n_input": prep.n, "report": report.to_dict()}
    _write(dump_json(payload), args.out)
    for kind, path in (("love", args.plot_love), ("density", args.plot_density),
                       ("histogram", args.plot_hist)):
        if path:
            render(plot_series(kind, report, st.e, st.prep.z, threshold=args.threshold), path)
    return 0


def cmd_trim(args) -> int:
    cfg = _config(args, outcome=False)
    data = Dataset.from_csv(args.data)
    prep = prepare(data, cfg, need_outcome=False)
    st = propensity_stage(prep, cfg)
    trim = st.trim if st.trim is not None else symmetric_trim(st.e, 0.0, prep.z)
    sys.stdout.write(trim.render())
    if trim.method == "optimal":
        sys.stdout.write(f"optimal threshold gamma = {trim.gamma:.6g}\n")
    kept = trim.kept_mask
    data.take(np.flatnonzero(kept)).to_csv(args.out)
    return 0


def cmd_estimate(args) -> int:
    cfg = _config(args, outcome=True)
    data = Dataset.from_csv(args.data)
    prep = prepare(data, cfg)
    if args.contrast:
        contrast = ContrastSpec.parse(args.contrast, args.scale)
        contrast.check(len(prep.groups))
    else:
        contrast = ContrastSpec.pairwise(prep.groups, args.scale)
    if args.exponentiate and args.scale == "DIF":
        raise ConfigError("--exponentiate requires --type RR or OR")
    res = run_analysis(prep, cfg)
    table = res.summary(contrast)
    shown = table.exponentiate() if args.exponentiate else table
    sys.stdout.write(shown.render(ci=not args.no_ci))
    payload = {"schema": SCHEMA, "command": "estimate",
               "config": {**vars(args), "resolved": cfg.to_dict()},
               "result": res.to_dict(), "summary": table.to_dict()}
    if args.exponentiate:
        payload["summary_ratio_scale"] = shown.to_dict()
    if args.out:
        _write(dump_json(payload), args.out)
    return 0


def cmd_simulate(args) -> int:
    s = get_scenario(args.scenario, args.p, args.effect, args.outcome)
    if args.n < 1:
        raise ConfigError("--n must be positive")
    sim = simulate(s, args.n, args.seed)
    _write(sim.to_dataset().to_text(), args.out)
    if args.emit_truth:
        path = args.truth_out
        if path is None:
            if not args.out or args.out == "-":
                raise ConfigError("--emit-truth needs --truth-out when the CSV goes to stdout")
            path = str(Path(args.out).with_suffix(".truth.json"))
        oracle = true_wate(s, args.emit_truth, args.truth_draws, seed=args.seed)
        payload = {"schema": SCHEMA, "command": "simulate", "config": vars(args),
                   "scenario": s.name, "truth": oracle.to_dict()}
        Path(path).write_text(dump_json(payload), encoding="utf-8")
    return 0


COMMANDS = {"design": cmd_design, "trim": cmd_trim, "estimate": cmd_estimate, "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except PswError as exc:
        code = next((c for cls, c in EXIT_CODES if isinstance(exc, cls)), 4)
        msg = " ".join(str(exc).split())
        sys.stderr.write(f"pswkit: error[{exc.kind}]: {msg}\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
