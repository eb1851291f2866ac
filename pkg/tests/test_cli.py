import os

import pytest

from gapsgd.cli import main


def write_hand_file(tmp_path):
    p = tmp_path / "hand.txt"
    p.write_text("1 1:1 2:2\n-1 1:3 2:4\n")
    return str(p)


def test_lambda_max_command_prints_hand_value(tmp_path, capsys):
    path = write_hand_file(tmp_path)
    assert main(["lambda-max", "--data", path, "--model", "lasso",
                 "--blocks", "2"]) == 0
    assert float(capsys.readouterr().out.strip()) == pytest.approx(1.0)


def test_solve_command_writes_trace(tmp_path, capsys):
    from gapsgd.harness import SyntheticParams, build_spec, generate_synthetic
    from conftest import tuned_eta

    data = generate_synthetic(SyntheticParams(n=60, d=50, sparsity=0.5,
                                              noise=0.05, seed=3))
    eta = tuned_eta(build_spec(data, model="lasso", lambda_ratio=0.5, q=10))
    out = str(tmp_path / "trace.csv")
    code = main(["solve", "--synthetic", "60,50,0.5,0.05", "--model", "lasso",
                 "--solver", "adsgd", "--lambda-ratio", "0.5", "--seed", "3",
                 "--eta", repr(eta), "--gap-tol", "1e-4", "--max-outer", "150",
                 "--out", out])
    assert code == 0
    text = capsys.readouterr().out
    assert "converged=True" in text
    assert os.path.exists(out)
    header = open(out).readline().strip()
    assert header == "outer_iter,elapsed_s,objective,gap,active_blocks,active_features"


def test_solve_command_reference_solver(capsys):
    code = main(["solve", "--synthetic", "40,30,0.5,0.05", "--solver",
                 "reference", "--gap-tol", "1e-8", "--seed", "1"])
    assert code == 0
    assert "converged=True" in capsys.readouterr().out


def test_oracle_command_prints_support(capsys):
    code = main(["oracle", "--synthetic", "50,40,0.5,0.05", "--seed", "2",
                 "--lambda-ratio", "0.4"])
    assert code == 0
    out = capsys.readouterr().out
    assert "support_size=" in out and "support=" in out


def test_bench_command_runs_plan(tmp_path, capsys):
    plan = tmp_path / "p.plan"
    plan.write_text(
        "n = 40\nd = 30\nnoise = 0.05\nseed = 5\n"
        "solvers = adsgd\nlambda_ratios = 0.5\nrepetitions = 1\n"
        "gap_tol = 1e-4\nmax_outer = 120\n"
        f"out = {tmp_path / 'runs'}\n")
    assert main(["bench", str(plan)]) == 0
    out = capsys.readouterr().out
    assert "adsgd" in out
    assert os.path.exists(tmp_path / "runs" / "summary.csv")


def test_missing_data_file_exits_3(capsys):
    assert main(["lambda-max", "--data", "/nonexistent/file.txt"]) == 3


def test_malformed_data_file_exits_3(tmp_path, capsys):
    p = tmp_path / "bad.txt"
    p.write_text("1 3:1 2:1\n")
    assert main(["solve", "--data", str(p)]) == 3


def test_bad_synthetic_argument_exits_3(capsys):
    assert main(["lambda-max", "--synthetic", "10,20"]) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_diverging_solve_exits_4(capsys):
    code = main(["solve", "--synthetic", "40,30,0.5,0.05", "--eta", "1e9",
                 "--max-outer", "30", "--seed", "0"])
    assert code == 4


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--model", "ridge"])
    assert exc.value.code == 2


def test_out_dir_env_override(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("GAPSGD_OUT_DIR", str(tmp_path / "redirected"))
    code = main(["solve", "--synthetic", "40,30,0.5,0.05", "--gap-tol", "1e-3",
                 "--max-outer", "80", "--seed", "4", "--out", "t.csv"])
    assert code == 0
    assert os.path.exists(tmp_path / "redirected" / "t.csv")
