import json

import numpy as np
import pytest

from pswkit.cli import main
from pswkit.data import Dataset
from pswkit.simulation import get_scenario, simulate


@pytest.fixture
def binary_csv(tmp_path):
    path = tmp_path / "a.csv"
    assert main(["simulate", "--scenario", "A", "--n", "600", "--seed", "7", "--out", str(path)]) == 0
    return path


@pytest.fixture
def three_arm_csv(tmp_path):
    sim = simulate(get_scenario("C"), 900, 3)
    cols = sim.columns()
    cols["ybin"] = (cols["y"] > 0.5).astype(int)
    for j, g in enumerate(sim.scenario.groups):
        cols[f"e{g}"] = sim.e[:, j]
    path = tmp_path / "c.csv"
    Dataset.from_columns(cols).to_csv(path)
    return path


PS = "z ~ x1 + x2 + x3"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_deterministic(tmp_path, capsys):
    a, b = tmp_path / "1.csv", tmp_path / "2.csv"
    for p in (a, b):
        assert run(capsys, "simulate", "--scenario", "A", "--n", 2000, "--seed", 7, "--out", p)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == "x1,x2,x3,z,y"


def test_simulate_truth_sidecar(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code, _, _ = run(capsys, "simulate", "--scenario", "A", "--n", 50, "--out", out,
                     "--emit-truth", "overlap", "--truth-draws", 100000)
    assert code == 0
    truth = json.loads((tmp_path / "s.truth.json").read_text())
    assert truth["schema"] == "psw/1"
    assert truth["truth"]["value"] == pytest.approx(0.5)
    assert "mc_se" in truth["truth"]


def test_unknown_scenario_exit_2(capsys):
    code, _, err = run(capsys, "simulate", "--scenario", "nope", "--n", 5)
    assert code == 2
    assert err.startswith("pswkit: error[config]:") and err.count("\n") == 1


def test_design_json_and_svg(binary_csv, tmp_path, capsys):
    love, rep = tmp_path / "love.svg", tmp_path / "rep.json"
    code, _, _ = run(capsys, "design", "--data", binary_csv, "--ps-formula", "z ~ x1 + x2",
                     "--weights", "overlap,ipw", "--plot-love", love, "--out", rep)
    assert code == 0
    assert b"<svg" in love.read_bytes()
    d = json.loads(rep.read_text())
    assert d["schema"] == "psw/1"
    assert d["config"]["resolved"]["ps_formula"] == "z ~ x1 + x2"
    assert list(d["report"]["schemes"]) == ["unweighted", "overlap", "ipw"]
    assert max(d["report"]["schemes"]["overlap"]["ASD"]) < 1e-6


def test_design_trim_counts(three_arm_csv, capsys):
    code, out, _ = run(capsys, "design", "--data", three_arm_csv, "--ps-formula", PS, "--delta", 0.067)
    assert code == 0
    trim = json.loads(out)["report"]["trim"]
    assert trim["trimmed"] + trim["remained"] == 900
    assert set(trim["by_group"]) == {"0", "1", "2"}


def test_design_exclusive_ps_sources(three_arm_csv, capsys):
    code, _, err = run(capsys, "design", "--data", three_arm_csv, "--ps-formula", PS,
                       "--ps-cols", "e0,e1,e2")
    assert code == 2


def test_design_external_scores(three_arm_csv, capsys):
    code, out, _ = run(capsys, "design", "--data", three_arm_csv, "--ps-cols", "e0,e1,e2",
                       "--treatment", "z", "--covariates", "x1 + x2")
    assert code == 0
    assert json.loads(out)["report"]["covariates"] == ["x1", "x2"]


def test_design_histogram_three_arms(three_arm_csv, tmp_path, capsys):
    code, _, _ = run(capsys, "design", "--data", three_arm_csv, "--ps-formula", PS,
                     "--plot-hist", tmp_path / "h.svg", "--out", tmp_path / "r.json")
    assert code == 2


def test_trim_delta_zero_identity(three_arm_csv, tmp_path, capsys):
    out = tmp_path / "t.csv"
    code, text, _ = run(capsys, "trim", "--data", three_arm_csv, "--ps-formula", PS, "--delta", 0, "--out", out)
    assert code == 0
    assert out.read_bytes() == three_arm_csv.read_bytes()
    assert "0 cases trimmed" in text


def test_trim_optimal(three_arm_csv, tmp_path, capsys):
    out = tmp_path / "t.csv"
    code, text, _ = run(capsys, "trim", "--data", three_arm_csv, "--ps-formula", PS, "--optimal", "--out", out)
    assert code == 0
    assert "trimmed result by trt group:" in text
    assert "optimal threshold" in text
    kept = out.read_text().splitlines()
    src = three_arm_csv.read_text().splitlines()
    assert kept[0] == src[0] and set(kept[1:]) <= set(src[1:])


def test_trim_delta_too_large(three_arm_csv, tmp_path, capsys):
    code, _, _ = run(capsys, "trim", "--data", three_arm_csv, "--ps-formula", PS, "--delta", 0.4,
                     "--out", tmp_path / "t.csv")
    assert code == 2


def test_delta_optimal_exclusive(three_arm_csv, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["trim", "--data", str(three_arm_csv), "--ps-formula", PS, "--delta", "0.1", "--optimal",
              "--out", str(tmp_path / "t.csv")])
    assert exc.value.code == 2


def test_estimate_rr_contrasts(three_arm_csv, capsys):
    code, out, _ = run(capsys, "estimate", "--data", three_arm_csv, "--ps-formula", PS,
                       "--weight", "overlap", "--yname", "ybin", "--type", "RR",
                       "--contrast", "1,-1,0;1,0,-1;0,-1,1")
    assert code == 0
    assert "Inference in log scale:" in out
    rows = [ln for ln in out.splitlines() if ln.startswith("Contrast ")]
    assert len(rows) == 6  # contrast block and estimate block


def test_estimate_default_pairwise(three_arm_csv, tmp_path, capsys):
    js = tmp_path / "e.json"
    code, _, _ = run(capsys, "estimate", "--data", three_arm_csv, "--ps-formula", PS, "--yname", "y",
                     "--out", js)
    assert code == 0
    d = json.loads(js.read_text())
    assert [r["label"] for r in d["summary"]["contrasts"]] == ["1 vs 0", "2 vs 0", "2 vs 1"]
    assert d["result"]["variance"]["method"] == "sandwich"


def test_estimate_augmentation_needs_model(three_arm_csv, capsys):
    code, _, err = run(capsys, "estimate", "--data", three_arm_csv, "--ps-formula", PS, "--yname", "y",
                       "--augmentation")
    assert code == 2
    assert "--out-formula" in err


def test_estimate_missing_outcome_exit_3(three_arm_csv, capsys):
    code, _, err = run(capsys, "estimate", "--data", three_arm_csv, "--ps-formula", PS, "--yname", "nope")
    assert code == 3
    assert err.startswith("pswkit: error[data]:")


def test_estimate_fit_failure_exit_4(tmp_path, capsys):
    x = np.linspace(-1, 1, 40)
    path = tmp_path / "sep.csv"
    Dataset.from_columns({"x": x, "z": (x > 0).astype(int), "y": x}).to_csv(path)
    code, _, err = run(capsys, "estimate", "--data", path, "--ps-formula", "z ~ x", "--yname", "y")
    assert code == 4
    assert err.startswith("pswkit: error[convergence]:")


def test_estimate_bootstrap_byte_identical(binary_csv, tmp_path, capsys):
    outs = []
    for k in range(2):
        js = tmp_path / "b.json"
        run(capsys, "estimate", "--data", binary_csv, "--ps-formula", PS, "--yname", "y",
            "--bootstrap", "--seed", 7, "--replicates", 20, "--out", js)
        outs.append(js.read_bytes())
    assert outs[0] == outs[1]


def test_estimate_exponentiate_and_no_ci(three_arm_csv, capsys):
    code, out, _ = run(capsys, "estimate", "--data", three_arm_csv, "--ps-formula", PS, "--yname", "ybin",
                       "--type", "OR", "--exponentiate")
    assert code == 0 and "Causal odds ratio:" in out
    code, out, _ = run(capsys, "estimate", "--data", three_arm_csv, "--ps-formula", PS, "--yname", "ybin",
                       "--no-ci")
    assert code == 0 and "z value" in out
    code, _, _ = run(capsys, "estimate", "--data", three_arm_csv, "--ps-formula", PS, "--yname", "y",
                     "--exponentiate")
    assert code == 2
