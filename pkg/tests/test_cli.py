import csv
import json
import subprocess
import sys

import pytest

from cpal.cli import main
from cpal.localization import Halfspace, init_ball
from cpal.relu_model import ReconstructedNetwork


@pytest.fixture
def spiral_csv(tmp_path):
    p = tmp_path / "spiral.csv"
    assert main(["gen-data", "--task", "spiral", "--n-points", "40", "--out", str(p)]) == 0
    return p


def test_gen_data_and_patterns(tmp_path, spiral_csv, capsys):
    assert spiral_csv.read_text().splitlines()[0] == "f0,f1,y"
    pat = tmp_path / "p.json"
    assert main(["enumerate-patterns", "--data", str(spiral_csv), "--target", "10",
                 "--simulations", "200", "--out", str(pat)]) == 0
    assert json.loads(pat.read_text())
    assert "10 patterns over 32 rows" in capsys.readouterr().out


def test_al_run_writes_trace_and_model(tmp_path, spiral_csv):
    pat, trace, model = tmp_path / "p.json", tmp_path / "t.csv", tmp_path / "m.json"
    main(["enumerate-patterns", "--data", str(spiral_csv), "--target", "30", "--simulations", "300",
          "--out", str(pat)])
    code = main(["al-run", "--algo", "lq", "--data", str(spiral_csv), "--patterns", str(pat),
                 "--budget", "5", "--trace", str(trace), "--model", str(model)])
    assert code == 0
    with open(trace, newline="") as fh:
        header = next(csv.reader(fh))
    assert header[:3] == ["iter", "queried_row", "label"]
    net = ReconstructedNetwork.from_dict(json.loads(model.read_text()))
    assert net.layers == 2


def test_al_run_margin_one_training_with_radius(tmp_path):
    data, pat, model = tmp_path / "s.csv", tmp_path / "p.json", tmp_path / "m.json"
    main(["gen-data", "--task", "spiral", "--n-points", "40", "--k3", "22", "--out", str(data)])
    main(["enumerate-patterns", "--data", str(data), "--simulations", "2000", "--out", str(pat)])
    assert main(["al-run", "--algo", "train", "--data", str(data), "--patterns", str(pat),
                 "--margin", "1", "--radius", "100", "--model", str(model)]) == 0
    assert model.exists()


def test_al_run_needs_patterns(spiral_csv, capsys):
    assert main(["al-run", "--algo", "lq", "--data", str(spiral_csv)]) == 1
    assert "--patterns" in capsys.readouterr().err


def test_linear_regression_reports_infeasible_as_success(tmp_path):
    data = tmp_path / "q.csv"
    main(["gen-data", "--task", "quadratic", "--out", str(data)])
    assert main(["al-run", "--algo", "linear-reg", "--data", str(data), "--budget", "20"]) == 0


def test_final_solve_and_row_validation(tmp_path):
    data, pat, out = tmp_path / "q.csv", tmp_path / "p.json", tmp_path / "s.json"
    main(["gen-data", "--task", "quadratic", "--n-points", "20", "--out", str(data)])
    main(["enumerate-patterns", "--data", str(data), "--all-rows", "--out", str(pat)])
    assert main(["final-solve", "--data", str(data), "--rows", "0,3,7,12", "--patterns", str(pat),
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text())["constraint_violation_max"] <= 1e-9
    with pytest.raises(SystemExit):
        main(["final-solve", "--data", str(data), "--rows", "99", "--patterns", str(pat),
              "--out", str(out)])


def test_volumetrics_report(tmp_path):
    s, rep = tmp_path / "L.json", tmp_path / "r.csv"
    init_ball(2).add_cuts([Halfspace([1, 0], 0.3)]).to_json(s)
    assert main(["volumetrics", "--set", str(s), "--samples", "2000", "--burn-in", "100",
                 "--report", str(rep)]) == 0
    with open(rep, newline="") as fh:
        row = list(csv.DictReader(fh))[0]
    assert row["passed"] == "1"


def test_run_experiment_and_report(tmp_path):
    cfg = {"task": "quadratic", "algo": "reg", "seeds": [0, 1], "out_dir": str(tmp_path / "out"),
           "data": {"n_points": 30}, "al": {"budget": 4, "record_timing": False},
           "patterns": {"simulations": 200}}
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    assert main(["run-experiment", "--config", str(p)]) == 0
    out = tmp_path / "summary.csv"
    assert main(["report", "--traces", str(tmp_path / "out" / "trace_*.csv"), "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "query_index,metric_mean,metric_std,algo,seed_count"


def test_bad_csv_is_a_clean_error(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("a,y\nx,1\n")
    assert main(["enumerate-patterns", "--data", str(p), "--out", str(tmp_path / "p.json")]) == 1
    assert "non-numeric" in capsys.readouterr().err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "cpal.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("enumerate-patterns", "volumetrics", "al-run", "final-solve", "gen-data",
                "report", "run-experiment"):
        assert cmd in out.stdout
