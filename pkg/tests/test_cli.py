import json

import numpy as np
import pytest

from neuradr import assemble_adr_stencil, make_uniform_grid
from neuradr import io
from neuradr.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_INPUT, ConfigError, load_config, main

ADR = [
    "--set", "grid.n=64", "--set", "kernel.U=0.4", "--set", "kernel.D=0.15",
    "--set", "dynamics.steps=9", "--set", "dynamics.activation=tanh",
]


def run(out, command, *args, config=None):
    argv = [command, "--out", str(out), *args]
    if config is not None:
        argv += ["--config", str(config)]
    return main(argv)


@pytest.fixture
def teacher_target(tmp_path):
    assert run(tmp_path / "teacher", "evolve", *ADR) == 0
    return tmp_path / "teacher" / "final.csv"


def test_evolve_adr_outputs(tmp_path):
    out = tmp_path / "ev"
    assert run(out, "evolve", *ADR) == 0
    rows = (out / "trajectory.csv").read_text().splitlines()
    assert rows[0] == "step,node,q,value"
    assert len(rows) - 1 == 10 * 64
    steps = np.array([int(r.split(",")[0]) for r in rows[1:]])
    assert np.all(np.bincount(steps) == 64)
    final = json.loads((out / "final.json").read_text())
    assert final["schema_version"] == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "evolve" and manifest["config"]["dynamics"]["steps"] == 9


def test_evolve_identity_keeps_initial(tmp_path):
    out = tmp_path / "id"
    args = ["--set", "kernel.type=identity", "--set", "dynamics.activation=identity", "--set", "dynamics.steps=5",
            "--set", "dynamics.omega=0.3", "--set", "initial.profile=step", "--set", "initial.value=2.5"]
    assert run(out, "evolve", *args) == 0
    assert (out / "final.csv").read_text() == (out / "initial.csv").read_text()


def test_ini_config_and_overrides(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[grid]\nn = 8\ndelta = 0.5\n[dynamics]\nsteps = 3\nomega = 0.5\n")
    cfg = load_config(ini, ["dynamics.steps=4"])
    assert cfg["grid"]["n"] == 8 and cfg["grid"]["delta"] == 0.5 and cfg["dynamics"]["steps"] == 4
    with pytest.raises(ConfigError, match="grid.nn"):
        load_config(None, ["grid.nn=3"])
    with pytest.raises(ConfigError, match="dynamics.omega"):
        load_config(None, ["dynamics.omega=1.5"])


def test_steps_zero_fails_naming_key(tmp_path, capsys):
    out = tmp_path / "bad"
    assert run(out, "evolve", "--set", "dynamics.steps=0") == EXIT_CONFIG
    assert "dynamics.steps" in capsys.readouterr().err
    assert not out.exists()


def test_divergence_exit_code_names_step(tmp_path, capsys):
    out = tmp_path / "div"
    args = ["--set", "kernel.type=identity", "--set", "dynamics.activation=square", "--set", "initial.profile=constant",
            "--set", "initial.value=10", "--set", "dynamics.steps=20"]
    assert run(out, "evolve", *args) == EXIT_DIVERGED
    assert "step 9" in capsys.readouterr().err
    assert not out.exists()


def test_failure_leaves_existing_output_untouched(tmp_path):
    out = tmp_path / "keep"
    out.mkdir()
    (out / "marker.txt").write_text("x")
    assert run(out, "train") == EXIT_CONFIG
    assert [p.name for p in out.iterdir()] == ["marker.txt"]


def test_train_missing_target_names_key(tmp_path, capsys):
    assert run(tmp_path / "t", "train") == EXIT_CONFIG
    assert "train.target" in capsys.readouterr().err


def test_train_teacher_student(tmp_path, teacher_target):
    out = tmp_path / "fit"
    assert run(out, "train", *ADR, "--set", f"train.target={teacher_target}") == 0
    res = json.loads((out / "result.json").read_text())
    assert res["schema_version"] == 1 and res["converged"] is True
    assert res["mode"] == "homogeneous" and len(res["params"]) == 3
    assert abs(res["params"]["U"] - 0.4) < 0.02
    loss = (out / "loss.csv").read_text().splitlines()
    assert loss[0] == "iter,loss" and len(loss) == res["iterations"] + 2
    assert len((out / "layer_losses.csv").read_text().splitlines()) == 11


def test_manifest_rerun_is_byte_identical(tmp_path, teacher_target):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "train", *ADR, "--set", f"train.target={teacher_target}") == 0
    assert run(b, "train", config=a / "manifest.json") == 0
    for name in ("result.json", "loss.csv", "layer_losses.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_explain_roundtrip(tmp_path):
    g = make_uniform_grid(32, 0.5)
    m = tmp_path / "m.csv"
    io.write_matrix_csv(m, assemble_adr_stencil(0.3, 0.1, 0.05, g).to_dense().matrix)
    out = tmp_path / "ex"
    assert run(out, "explain", "--set", f"explain.matrix={m}", "--set", "grid.delta=0.5") == 0
    rep = json.loads((out / "explain.json").read_text())
    # one estimate per matrix row
    np.testing.assert_allclose(rep["U_hat"], 0.3, atol=1e-12)
    np.testing.assert_allclose(rep["D_hat"], 0.1, atol=1e-12)
    np.testing.assert_allclose(rep["R_hat"], 0.05, atol=1e-12)
    assert len(rep["U_hat"]) == 32
    mom = json.loads((out / "moments.json").read_text())
    assert mom["max_order"] == 4 and len(mom["moments"]) == 5


def test_explain_identity_matrix(tmp_path):
    m = tmp_path / "eye.csv"
    io.write_matrix_csv(m, np.eye(6))
    assert run(tmp_path / "ex", "explain", "--set", f"explain.matrix={m}") == 0
    rep = json.loads((tmp_path / "ex" / "explain.json").read_text())
    for key in ("U_hat", "D_hat", "R_hat"):
        assert rep[key] == [0.0] * 6


def test_explain_non_square_is_input_error(tmp_path):
    m = tmp_path / "bad.csv"
    m.write_text("1,2,3\n4,5,6\n")
    assert run(tmp_path / "ex", "explain", "--set", f"explain.matrix={m}") == EXIT_INPUT
    assert not (tmp_path / "ex").exists()


def test_dense_kernel_size_mismatch(tmp_path):
    m = tmp_path / "eye.csv"
    io.write_matrix_csv(m, np.eye(3))
    args = ["--set", "kernel.type=dense", "--set", f"kernel.matrix={m}", "--set", "grid.n=4"]
    assert run(tmp_path / "ev", "evolve", *args) == EXIT_INPUT


def test_report_numbers(tmp_path):
    out = tmp_path / "r"
    assert run(out, "report", "--set", "report.N=1000", "--set", "report.L=100") == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["N_W"] == 10**8
    assert rep["parameter_counts"]["homogeneous"] == 3
    assert rep["log10_N_P"] == pytest.approx(300.0)
    out = tmp_path / "r64"
    assert run(out, "report", "--set", "report.N=64", "--set", "report.L=8") == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["parameter_counts"] == {"homogeneous": 3, "heterogeneous": 192, "onthefly": 1536}


def test_attractor_command(tmp_path):
    args = ["--set", "grid.n=16", "--set", "kernel.U=0.2", "--set", "kernel.D=0.1", "--set", "kernel.R=-0.5",
            "--set", "dynamics.activation=tanh", "--set", "bias.value=0.1"]
    out = tmp_path / "at"
    assert run(out, "attractor", *args) == 0
    res = json.loads((out / "attractor.json").read_text())
    assert res["converged"] and res["residual"] <= 1e-10
    z = io.read_field_csv(out / "z_star.csv").values
    assert np.allclose(z, z[0])


def test_sweep(tmp_path, teacher_target):
    out = tmp_path / "sw"
    args = [*ADR, "--set", f"train.target={teacher_target}", "--set", "sweep.key=train.lr",
            "--set", "sweep.values=0.5, 1.0", "--set", "sweep.workers=2"]
    assert run(out, "sweep", *args) == 0
    summary = json.loads((out / "sweep.json").read_text())
    assert [r["value"] for r in summary["runs"]] == ["0.5", "1.0"]
    assert all(r["converged"] for r in summary["runs"])
    assert (out / "run_001" / "result.json").exists()


def test_sweep_bad_key(tmp_path, teacher_target):
    args = ["--set", f"train.target={teacher_target}", "--set", "sweep.key=train.nope", "--set", "sweep.values=1"]
    assert run(tmp_path / "sw", "sweep", *args) == EXIT_CONFIG
