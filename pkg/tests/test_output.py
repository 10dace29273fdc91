import json

import numpy as np
import pytest

from turfsim.diagnostics import diagonal_snapshot
from turfsim.mesh import Rectangle, build_mesh
from turfsim.model import InitialCondition, StateFields
from turfsim.output import (
    ensure_dir,
    read_vtk_points,
    sanitize,
    time_tag,
    write_diagonal_csv,
    write_fields_vtk,
    write_summary,
)


def state_on(mesh, rng=None):
    n = mesh.n_nodes
    if rng is None:
        return StateFields(u=np.zeros(n), v=np.zeros(n), w=np.zeros(n), z=np.zeros(n))
    return StateFields(
        u=rng.uniform(0.0, 1.0, n),
        v=rng.uniform(0.0, 1.0, n),
        w=rng.uniform(0.0, 1.0, n),
        z=rng.uniform(0.0, 1.0, n),
        t=3.5,
    )


def test_vtk_layout_on_single_cell(tmp_path, unit_mesh_l0):
    path = tmp_path / "fields.vtk"
    write_fields_vtk(path, unit_mesh_l0, state_on(unit_mesh_l0))
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 2.0"
    assert lines[1] == "turfsim fields at t=0"
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    assert lines[4] == "POINTS 4 double"
    # 4 coordinate rows with a zero third column
    coords = [line.split() for line in lines[5:9]]
    assert all(len(row) == 3 and row[2] == "0" for row in coords)
    assert lines[9] == "CELLS 1 5"
    assert lines[10].startswith("4 ")
    assert sorted(int(i) for i in lines[10].split()[1:]) == [0, 1, 2, 3]
    assert lines[11] == "CELL_TYPES 1"
    assert lines[12] == "9"
    assert lines[13] == "POINT_DATA 4"
    assert "SCALARS u double 1" in lines
    assert "SCALARS gang_class int 1" in lines
    assert lines.count("LOOKUP_TABLE default") == 6
    assert read_vtk_points(path) == 4


def test_vtk_point_count_matches_mesh(tmp_path):
    mesh = build_mesh(Rectangle(), 5)
    path = tmp_path / "l5.vtk"
    write_fields_vtk(path, mesh, state_on(mesh))
    assert read_vtk_points(path) == 1089


def test_vtk_rewrites_are_byte_identical(tmp_path, mesh_l2, rng):
    state = state_on(mesh_l2, rng)
    p1, p2 = tmp_path / "a.vtk", tmp_path / "b.vtk"
    write_fields_vtk(p1, mesh_l2, state)
    write_fields_vtk(p2, mesh_l2, state)
    assert p1.read_bytes() == p2.read_bytes()


def test_vtk_class_codes_are_written(tmp_path, mesh_l2):
    state = state_on(mesh_l2)
    state.u[0] = 1.0  # u-held at node 0
    path = tmp_path / "cls.vtk"
    write_fields_vtk(path, mesh_l2, state)
    lines = path.read_text().splitlines()
    start = lines.index("SCALARS gang_class int 1") + 2
    codes = lines[start : start + mesh_l2.n_nodes]
    assert codes[0] == "1"
    assert set(codes[1:]) == {"0"}


def test_read_vtk_points_rejects_other_files(tmp_path):
    path = tmp_path / "not.vtk"
    path.write_text("just text\n")
    with pytest.raises(ValueError, match="POINTS"):
        read_vtk_points(path)


def test_diagonal_csv_roundtrip(tmp_path):
    mesh = build_mesh(Rectangle(), 5)
    state = InitialCondition.offset_gaussians().sample(mesh)
    snap = diagonal_snapshot(state, mesh)
    path = tmp_path / "diag.csv"
    write_diagonal_csv(path, snap)
    lines = path.read_text().splitlines()
    assert lines[0] == "s,u,v,w,z"
    assert len(lines) == 1 + 33
    data = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    np.testing.assert_array_equal(data[:, 0], snap.s)  # 17 digits round-trip
    np.testing.assert_array_equal(data[:, 1], snap.u)
    assert data[0, 0] == 0.0
    assert data[-1, 0] == pytest.approx(12.0 * np.sqrt(2.0))
    assert np.all(np.diff(data[:, 0]) > 0.0)


def test_diagonal_csv_constant_single_cell(tmp_path, unit_mesh_l0):
    state = state_on(unit_mesh_l0)
    state.u[:] = 0.25
    path = tmp_path / "diag.csv"
    write_diagonal_csv(path, diagonal_snapshot(state, unit_mesh_l0))
    lines = path.read_text().splitlines()
    assert len(lines) == 3  # header and both diagonal corners
    assert [float(line.split(",")[1]) for line in lines[1:]] == [0.25, 0.25]


def test_summary_json_is_deterministic_and_sorted(tmp_path):
    summary = {"b": 2, "a": {"nested": [1.5, 2.5]}}
    p1, p2 = tmp_path / "s1.json", tmp_path / "s2.json"
    write_summary(p1, summary)
    write_summary(p2, dict(reversed(summary.items())))
    assert p1.read_bytes() == p2.read_bytes()
    text = p1.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == summary


@pytest.mark.parametrize(
    "t, tag",
    [(0.0, "0"), (5.0, "5"), (0.5, "0p5"), (-2.5, "m2p5"), (1000.0, "1000"), (0.03125, "0p03125")],
)
def test_time_tag(t, tag):
    assert time_tag(t) == tag


def test_sanitize_handles_numpy_and_non_finite():
    raw = {
        "count": np.int64(3),
        "flag": np.bool_(True),
        "value": np.float64(0.5),
        "bad": float("nan"),
        "worse": np.float64(np.inf),
        "arr": np.array([1.0, 2.0]),
        "seq": (np.float64(1.0), None),
        "name": "x",
    }
    clean = sanitize(raw)
    assert clean == {
        "count": 3,
        "flag": True,
        "value": 0.5,
        "bad": None,
        "worse": None,
        "arr": [1.0, 2.0],
        "seq": [1.0, None],
        "name": "x",
    }
    json.dumps(clean)  # fully serializable
    assert isinstance(clean["count"], int) and isinstance(clean["flag"], bool)


def test_ensure_dir_creates_and_is_idempotent(tmp_path):
    target = tmp_path / "deep" / "nest"
    assert ensure_dir(target) == target
    assert target.is_dir()
    ensure_dir(target)
