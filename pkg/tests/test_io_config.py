import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bundlerqm import io
from bundlerqm.config import (ConfigError, build_equation, coefficient_operator, load_config,
                              parse_config)
from bundlerqm.lattice import laplacian_op, make_grid
from bundlerqm.reduction import companion_system

finite = st.floats(allow_nan=False, allow_infinity=False)


@given(finite)
def test_fmt_round_trip(x):
    assert float(io.fmt(x)) == x


def test_csv_round_trip(tmp_path):
    rows = [(0.1, 1 / 3, 7), (math.pi, -2e-300, 8)]
    io.write_csv(tmp_path / "a.csv", ["x", "y", "n"], rows)
    header, data = io.read_csv(tmp_path / "a.csv")
    assert header == ["x", "y", "n"]
    assert np.array_equal(data, np.array(rows, dtype=float))


def test_atomic_writer_leaves_target_on_failure(tmp_path):
    target = tmp_path / "keep.txt"
    target.write_text("old")
    with pytest.raises(RuntimeError):
        with io.atomic_writer(target) as fh:
            fh.write("partial")
            raise RuntimeError
    assert target.read_text() == "old"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["keep.txt"]


@pytest.mark.parametrize("dim,fibre", [(1, 4), (3, 6)])
def test_snapshot_bitwise(tmp_path, dim, fibre):
    grid = make_grid(dim, 4, 2.5)
    rng = np.random.default_rng(dim)
    psi = rng.standard_normal(fibre * grid.n_sites) + 1j * rng.standard_normal(fibre * grid.n_sites)
    io.write_snapshot(tmp_path / "s.snap", psi, 0.125, grid, fibre)
    out, t, g, f = io.read_snapshot(tmp_path / "s.snap")
    assert out.tobytes() == psi.tobytes()
    assert (t, g, f) == (0.125, grid, fibre)


def test_snapshot_grid_free_and_errors(tmp_path):
    io.write_snapshot(tmp_path / "s.snap", np.array([1j, 2.0]), 1.0, None, 2)
    out, _, g, _ = io.read_snapshot(tmp_path / "s.snap")
    assert g is None and np.array_equal(out, [1j, 2.0])
    with pytest.raises(ValueError):
        io.write_snapshot(tmp_path / "bad.snap", np.ones(3), 0.0, make_grid(1, 4, 1.0), 1)
    (tmp_path / "junk.snap").write_bytes(b"nonsense")
    with pytest.raises(ValueError):
        io.read_snapshot(tmp_path / "junk.snap")
    data = (tmp_path / "s.snap").read_bytes()
    (tmp_path / "cut.snap").write_bytes(data[:-4])
    with pytest.raises(ValueError):
        io.read_snapshot(tmp_path / "cut.snap")


def test_trajectory_rows():
    header, rows = io.trajectory_rows([0.0, 1.0], np.array([[1, 1j], [0, 1]]), {"norm": [1, 1]})
    assert header == ["t", "norm", "re0", "im0", "re1", "im1"]
    assert rows[0] == [0.0, 1.0, 1.0, 0.0, 0.0, 1.0]


def test_defaults():
    cfg = load_config()
    assert cfg.model.name == "dirac" and cfg.evolution.steps == 1000


def test_file_and_override(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[model]\nname = maxwell  ; comment\nmass = 0\n[grid]\ndim = 3\npoints = 4\n")
    cfg = load_config(p, ["grid.points=6", "evolution.momentum=0.5, 1"])
    assert cfg.model.name == "maxwell" and cfg.model.mass == 0.0
    assert cfg.grid.points == 6
    assert cfg.evolution.momentum == (0.5, 1.0)


@pytest.mark.parametrize("text,fragment", [
    ("[model]\nname = dirac\nmas = 1\n", ":3: unknown key 'mas'"),
    ("[model]\n\n[oops]\nx = 1\n", ":3: unknown section [oops]"),
    ("[grid]\npoints = many\n", ":2: bad value for 'points'"),
    ("[evolution]\nmethod = euler\n", "[evolution] method"),
    ("[bundle]\neps = 1e-12\n", "[bundle] eps"),
])
def test_config_errors_name_location(text, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, source="x.ini")
    assert fragment in str(exc.value)


def test_bad_override():
    with pytest.raises(ConfigError):
        parse_config("", ["nodot=1"])
    with pytest.raises(ConfigError):
        parse_config("", ["nosection.key=1"])


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/x.ini")


def test_coefficient_expressions():
    grid = make_grid(1, 8, 2 * math.pi)
    op = coefficient_operator("lapw - 2*id", grid)
    ref = laplacian_op(grid, "wide").dense() - 2 * np.eye(8)
    assert np.allclose(op.dense(), ref)
    sq = coefficient_operator("d0*d0", grid)
    assert np.allclose(sq.dense(), laplacian_op(grid, "wide").dense())
    timed = coefficient_operator("-cos(t)*id", grid)
    assert callable(timed) and np.allclose(timed(math.pi).dense(), np.eye(8))
    with pytest.raises(ValueError):
        coefficient_operator("__import__('os')", grid)
    with pytest.raises(ValueError):
        coefficient_operator("sin(lap)", grid)
    with pytest.raises(ValueError):
        coefficient_operator("undefined_name", grid)


def test_build_equation_companion():
    cfg = parse_config("[grid]\npoints = 8\n[equation]\norder = 2\nf0 = lapw - id\n"
                       "[model]\nname = equation\n")
    H = companion_system(build_equation(cfg))
    assert H.dim == 16
    with pytest.raises(ConfigError):
        parse_config("[equation]\norder = 1\nf3 = id\n")
