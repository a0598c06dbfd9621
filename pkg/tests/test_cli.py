import json

import numpy as np
import pytest

from src.cli import RunConfig, build_parser, make_config, run
from src.export import read_test_function_csv


@pytest.fixture
def tc_spec(tmp_path):
    path = tmp_path / "tc.spec"
    path.write_text("family=tc beta=1\n")
    return str(path)


@pytest.fixture
def gaussian_spec(tmp_path):
    path = tmp_path / "gaussian.spec"
    path.write_text('{"family": "gaussian", "sigma": 1}\n')
    return str(path)


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    monkeypatch.delenv("KSTAB_SEED", raising=False)


def _stdout_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_zoo(capsys):
    assert run(["zoo", "--quiet"]) == 0
    out = capsys.readouterr().out
    for family in ("tc", "gaussian", "rank_one", "diagonal", "matrix"):
        assert family in out


def test_help_exits_cleanly():
    assert run(["norm", "--help"]) == 0


def test_missing_kernel_is_usage_error(capsys):
    assert run(["norm", "--horizon", "4"]) == 1
    err = capsys.readouterr().err
    assert "error" in err and "usage:" in err


def test_unknown_subcommand(capsys):
    assert run(["plot"]) == 1


def test_non_symmetric_matrix_is_rejected(capsys):
    assert run(["norm", "--matrix", "[[1,-2],[3,4]]", "--quiet"]) == 1
    assert "non-symmetric" in capsys.readouterr().err


def test_symmetric_matrix_proceeds(capsys):
    assert run(["norm", "--matrix", "[[1,3],[3,4]]", "--quiet"]) == 0
    data = _stdout_json(capsys)
    assert data["method"] == "exact"
    assert data["lower"] == data["upper"] == 11.0
    assert data["grid"] == {"horizon": 2, "mode": "discrete", "step": 1.0}


def test_matrix_horizon_must_match_size():
    assert run(["norm", "--matrix", "[[1,3],[3,4]]", "--horizon", "3", "--quiet"]) == 1


def test_enumeration_guard_exit_code():
    eye = json.dumps(np.eye(26).tolist())
    assert run(["norm", "--matrix", eye, "--enum-limit", "30", "--quiet"]) == 2


def test_tc_norm(capsys, tc_spec):
    assert run(["norm", "--spec", tc_spec, "--horizon", "20", "--step", "0.01", "--quiet"]) == 0
    data = _stdout_json(capsys)
    assert data["lower"] == pytest.approx(2.0, rel=0.02)
    assert data["method"] == "restarts"


def test_step_rejected_for_discrete_kernel():
    assert run(["norm", "--matrix", "[[1]]", "--step", "0.1", "--quiet"]) == 1


def test_invalid_seed_environment(monkeypatch, tc_spec):
    monkeypatch.setenv("KSTAB_SEED", "abc")
    assert run(["norm", "--spec", tc_spec, "--horizon", "1", "--step", "0.1", "--quiet"]) == 1


def test_seed_environment_overrides_flag(monkeypatch, tc_spec):
    monkeypatch.setenv("KSTAB_SEED", "99")
    args = build_parser().parse_args(["norm", "--spec", tc_spec, "--seed", "5"])
    assert make_config(args).seed == 99


def test_defaults():
    args = build_parser().parse_args(["norm", "--matrix", "[[1]]"])
    config = make_config(args)
    assert config.seed == RunConfig.DEFAULT_SEED == 20240607
    assert config.restarts == 16 and config.enum_limit == 20
    assert config.grid.n == 1


def test_norm_outputs_are_reproducible(tmp_path, gaussian_spec):
    outputs = []
    for run_index in range(2):
        json_path, csv_path = tmp_path / f"n{run_index}.json", tmp_path / f"n{run_index}.csv"
        argv = ["norm", "--spec", gaussian_spec, "--horizon", "3", "--step", "0.1", "--restarts", "4",
                "--out-json", str(json_path), "--out-csv", str(csv_path), "--quiet"]
        assert run(argv) == 0
        outputs.append((json_path.read_bytes(), csv_path.read_bytes()))
    assert outputs[0] == outputs[1]
    header, values = read_test_function_csv(tmp_path / "n0.csv")
    assert header["mode"] == "continuous" and len(values) == 30


def test_single_discrete_and_continuous(tmp_path, capsys):
    path = tmp_path / "f.csv"
    path.write_text("value\n1\n-2\n3\n")
    assert run(["single", str(path), "--quiet"]) == 0
    assert _stdout_json(capsys)["l1_norm"] == 6.0
    assert run(["single", str(path), "--step", "0.5", "--quiet"]) == 0
    assert _stdout_json(capsys)["l1_norm"] == 3.0


def test_single_rejects_non_numeric(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("value\n1\nx\n")
    assert run(["single", str(path), "--quiet"]) == 1


def test_boost_emits_trace_and_sign_pattern(tmp_path, capsys):
    u = tmp_path / "u.csv"
    u.write_text('# {"horizon": 3, "mode": "discrete", "step": 1.0}\nvalue\n0.1\n-0.3\n0.9\n')
    trace_path, pattern_path = tmp_path / "trace.json", tmp_path / "s.csv"
    argv = ["boost", str(u), "--matrix", "[[2,1,0],[1,2,1],[0,1,2]]",
            "--out-json", str(trace_path), "--out-csv", str(pattern_path), "--quiet"]
    assert run(argv) == 0

    data = _stdout_json(capsys)
    assert data == json.loads(trace_path.read_text())
    assert data["eps"] == pytest.approx(0.01)
    assert data["steps"][0]["stage"] == "lemma2-scale"
    objectives = [data["initial_objective"]] + [step["objective"] for step in data["steps"]]
    assert all(b >= a - 1e-12 for a, b in zip(objectives, objectives[1:]))
    assert data["stop_index"] >= 1

    _, signs = read_test_function_csv(pattern_path)
    assert set(np.abs(signs)) == {1.0}


def test_boost_rejects_large_input(tmp_path):
    u = tmp_path / "u.csv"
    u.write_text("value\n2.0\n0.5\n")
    assert run(["boost", str(u), "--matrix", "[[1,0],[0,1]]", "--horizon", "2", "--quiet"]) == 1


def test_stability_gaussian_is_unstable(tmp_path, capsys, gaussian_spec):
    csv_path = tmp_path / "seq.csv"
    argv = ["stability", "--spec", gaussian_spec, "--horizons", "5,10,20,40", "--step", "0.1",
            "--out-csv", str(csv_path), "--quiet"]
    assert run(argv) == 0
    data = _stdout_json(capsys)
    assert data["classification"] == "unstable"
    assert data["growth_model"] == "polynomial"
    assert csv_path.read_text().splitlines()[0] == "horizon,a_value,upper,converged,tail_fraction"


def test_stability_validates_before_writing(tmp_path, gaussian_spec):
    out = tmp_path / "verdict.json"
    argv = ["stability", "--spec", gaussian_spec, "--horizons", "5,10,20", "--out-json", str(out), "--quiet"]
    assert run(argv) == 1
    assert not out.exists()
    argv = ["stability", "--spec", gaussian_spec, "--horizons", "5,20,10,40", "--out-json", str(out), "--quiet"]
    assert run(argv) == 1
    assert not out.exists()


def test_stability_default_horizons_for_diagonal(capsys, tmp_path):
    spec = tmp_path / "d.spec"
    spec.write_text("family=diagonal p=2\n")
    assert run(["stability", "--spec", str(spec), "--horizon", "4096", "--quiet"]) == 0
    assert _stdout_json(capsys)["classification"] == "stable"


def test_stability_of_finite_matrix(capsys):
    matrix = "[[2,0,0,0],[0,0,0,0],[0,0,0,0],[0,0,0,0]]"
    assert run(["stability", "--matrix", matrix, "--horizons", "1,2,3,4", "--quiet"]) == 0
    data = _stdout_json(capsys)
    assert data["classification"] == "stable"
    assert data["growth_model"] == "bounded"


def test_stability_and_boost_outputs_are_reproducible(tmp_path, gaussian_spec):
    u = tmp_path / "u.csv"
    u.write_text('# {"horizon": 3, "mode": "discrete", "step": 1.0}\nvalue\n0.1\n-0.3\n0.9\n')
    commands = {
        "stability": ["stability", "--spec", gaussian_spec, "--horizons", "1,2,3,4", "--step", "0.1",
                      "--restarts", "4"],
        "boost": ["boost", str(u), "--matrix", "[[2,1,0],[1,2,1],[0,1,2]]"],
    }
    for name, argv in commands.items():
        outputs = []
        for run_index in range(2):
            json_path, csv_path = tmp_path / f"{name}{run_index}.json", tmp_path / f"{name}{run_index}.csv"
            assert run(argv + ["--out-json", str(json_path), "--out-csv", str(csv_path), "--quiet"]) == 0
            outputs.append((json_path.read_bytes(), csv_path.read_bytes()))
        assert outputs[0] == outputs[1]


def test_single_writes_sign_pattern_with_grid_header(tmp_path):
    path, out = tmp_path / "f.csv", tmp_path / "s.csv"
    path.write_text("value\n1\n-2\n0\n")
    assert run(["single", str(path), "--out-csv", str(out), "--quiet"]) == 0
    assert out.read_text().splitlines()[0] == '# {"horizon": 3, "mode": "discrete", "step": 1.0}'
    header, signs = read_test_function_csv(out)
    assert header["mode"] == "discrete"
    np.testing.assert_array_equal(signs, [1.0, -1.0, 1.0])


@pytest.mark.parametrize("flag", ["--restarts", "--seed"])
def test_boost_has_no_solver_flags(tmp_path, flag):
    u = tmp_path / "u.csv"
    u.write_text("value\n0.5\n-0.5\n")
    assert run(["boost", str(u), "--matrix", "[[1,0],[0,1]]", flag, "3", "--quiet"]) == 1
