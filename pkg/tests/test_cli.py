import json

import numpy as np
import pytest

from bundlerqm import io
from bundlerqm.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main


def run(tmp_path, *args, prefix="run"):
    return main(list(args) + [f"output.directory={tmp_path}", f"output.prefix={prefix}"])


def read_triplets(path):
    return np.loadtxt(path, comments="#", ndmin=2)


def test_reduce_block_structure(tmp_path):
    assert run(tmp_path, "reduce", "model.name=kg_canonical", "grid.points=8") == EXIT_OK
    desc = json.loads((tmp_path / "run_system.json").read_text())
    assert desc["companion"] == "block" and desc["dim"] == 16
    t = read_triplets(tmp_path / "run_hamiltonian.txt")
    rows, cols = t[:, 0].astype(int), t[:, 1].astype(int)
    upper = rows < 8
    # top block row is i*hbar*I in the velocity slot
    assert np.array_equal(cols[upper] - rows[upper], np.full(upper.sum(), 8))
    assert np.allclose(t[upper, 3], 1.0) and np.allclose(t[upper, 2], 0.0)


def test_reduce_first_order_equation(tmp_path):
    assert run(tmp_path, "reduce", "model.name=equation", "equation.order=1",
               "equation.f0=-id", "grid.points=4") == EXIT_OK
    desc = json.loads((tmp_path / "run_system.json").read_text())
    assert desc["companion"] == "none" and desc["block_size"] == 4


def test_malformed_key_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[model]\nnam = dirac\n")
    assert main(["evolve", str(p)]) == EXIT_USAGE
    assert "bad.ini:2" in capsys.readouterr().err


def test_unknown_command():
    assert main(["frobnicate"]) == EXIT_USAGE


def test_evolve_norm_and_determinism(tmp_path):
    args = ("evolve", "grid.points=16", "evolution.steps=50", "evolution.t_end=0.5")
    assert run(tmp_path, *args, prefix="a") == EXIT_OK
    assert run(tmp_path, *args, prefix="b") == EXIT_OK
    a = (tmp_path / "a_trajectory.csv").read_bytes()
    assert a == (tmp_path / "b_trajectory.csv").read_bytes()
    assert (tmp_path / "a_final.snap").read_bytes() == (tmp_path / "b_final.snap").read_bytes()
    header, data = io.read_csv(tmp_path / "a_trajectory.csv")
    norm = data[:, header.index("norm")]
    assert np.max(np.abs(norm - norm[0])) <= 1e-12
    psi = data[-1, header.index("re0")::2] + 1j * data[-1, header.index("im0")::2]
    snap, t, _, _ = io.read_snapshot(tmp_path / "a_final.snap")
    assert t == 0.5 and np.array_equal(psi, snap)


def test_evolve_from_snapshot(tmp_path):
    base = ("evolve", "grid.points=8", "evolution.steps=20", "evolution.t_end=0.2")
    assert run(tmp_path, *base, prefix="a") == EXIT_OK
    snap = tmp_path / "a_final.snap"
    assert run(tmp_path, *base, "evolution.initial=snapshot", f"evolution.snapshot_in={snap}",
               prefix="b") == EXIT_OK
    header, data = io.read_csv(tmp_path / "b_trajectory.csv")
    first = data[0, header.index("re0")::2] + 1j * data[0, header.index("im0")::2]
    assert np.array_equal(first, io.read_snapshot(snap)[0])


def test_transport_identity_frames(tmp_path):
    assert run(tmp_path, "transport", "grid.points=4", "evolution.steps=20",
               "evolution.t_end=0.2", "bundle.samples=3", "bundle.eps=0.01") == EXIT_OK
    header, data = io.read_csv(tmp_path / "run_gamma.csv")
    assert run(tmp_path, "reduce", "grid.points=4") == EXIT_OK
    H = read_triplets(tmp_path / "run_hamiltonian.txt")
    first = data[data[:, 0] == 0.0]
    gamma = {(int(r), int(c)): complex(re, im) for _, r, c, re, im in first}
    for r, c, re, im in H:
        assert abs(gamma[(int(r), int(c))] - (-1j) * complex(re, im)) <= 1e-15
    report = json.loads((tmp_path / "run_transport_report.json").read_text())
    assert all(c["pass"] for c in report["checks"])
    fine_run = ("transport", "grid.points=4", "evolution.steps=40", "evolution.t_end=0.2",
                "bundle.samples=3")
    assert run(tmp_path, *fine_run, "bundle.eps=0.01") == EXIT_OK
    _, coarse = io.read_csv(tmp_path / "run_residual.csv")
    assert run(tmp_path, *fine_run, "bundle.eps=0.005") == EXIT_OK
    _, fine = io.read_csv(tmp_path / "run_residual.csv")
    assert np.all(coarse[:, 1] <= 1e-2)
    assert np.all(np.abs(coarse[:, 1] / fine[:, 1] - 2.0) <= 0.3)


def test_transport_smooth_random(tmp_path):
    assert run(tmp_path, "transport", "grid.points=4", "evolution.steps=20",
               "evolution.t_end=0.2", "bundle.frame=smooth_random", "bundle.samples=3") == EXIT_OK


def test_verify_exit_codes(tmp_path):
    assert run(tmp_path, "verify", "verify.select=unitarity") == EXIT_OK
    data = json.loads((tmp_path / "run_verify.json").read_text())
    assert data["checks"] and all(c["seconds"] == 0.0 for c in data["checks"])
    assert run(tmp_path, "verify", "verify.select=unitarity", "verify.tolerance_scale=0") == EXIT_FAIL


def test_oracle_csv(tmp_path):
    assert run(tmp_path, "oracle", "grid.points=8") == EXIT_OK
    header, data = io.read_csv(tmp_path / "run_spectra.csv")
    assert len(data) == 8 * 4
    assert np.max(np.abs(data[:, header.index("re")] - data[:, header.index("closed_form")])) <= 1e-12


def test_convergence_command(tmp_path):
    assert run(tmp_path, "convergence") == EXIT_OK
    _, data = io.read_csv(tmp_path / "run_convergence.csv")
    assert data.shape == (4, 3)
    assert run(tmp_path, "convergence", "convergence.dt=0.1,0.05") == EXIT_USAGE
