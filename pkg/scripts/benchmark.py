"""Wall-clock timings of the estimate pipeline across sample sizes and covariate counts."""

from __future__ import annotations

import argparse
import time

from pswkit.pipeline import AnalysisConfig, prepare, run_analysis
from pswkit.simulation import get_scenario, simulate


def time_once(data, formula, **kw):
    cfg = AnalysisConfig(ps_formula=formula, outcome="y", **kw)
    t0 = time.perf_counter()
    run_analysis(prepare(data, cfg), cfg)
    return time.perf_counter() - t0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="1000,10000,50000")
    ap.add_argument("--p", default="3,20")
    ap.add_argument("--replicates", type=int, default=50)
    args = ap.parse_args(argv)
    print(f"{'n':>7}{'p':>4}{'sandwich':>10}{'augmented':>11}{'bootstrap':>11}")
    for p in map(int, args.p.split(",")):
        formula = "z ~ " + " + ".join(f"x{k}" for k in range(1, p + 1))
        for n in map(int, args.sizes.split(",")):
            data = simulate(get_scenario("A", p=p), n, 0).to_dataset()
            t_s = time_once(data, formula)
            t_a = time_once(data, formula, augmentation=True, out_formula=formula.replace("z", "y", 1))
            t_b = time_once(data, formula, bootstrap=True, replicates=args.replicates)
            print(f"{n:>7}{p:>4}{t_s:>10.3f}{t_a:>11.3f}{t_b:>11.3f}")


if __name__ == "__main__":
    main()
