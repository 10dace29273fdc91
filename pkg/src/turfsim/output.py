"""File emission: legacy ASCII VTK fields, diagonal CSV profiles, JSON
summaries.  Every writer is deterministic so reruns produce identical bytes.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .diagnostics import ClassificationGrid, DiagonalSnapshot, classify
from .mesh import StructuredQuadMesh
from .model import StateFields


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_fields_vtk(
    path,
    mesh: StructuredQuadMesh,
    state: StateFields,
    classification: ClassificationGrid | None = None,
) -> None:
    """Unstructured-grid snapshot with the four fields plus class maps.

    Legacy ASCII VTK: points with zero third coordinate, 4-node quad cells,
    POINT_DATA arrays u, v, w, z (doubles) and gang_class / graffiti_class
    (ints).
    """
    if classification is None:
        classification = classify(state)
    n, c = mesh.n_nodes, mesh.n_cells
    lines = [
        "# vtk DataFile Version 2.0",
        f"turfsim fields at t={state.t:g}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    for x, y in mesh.nodes:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0")
    lines.append(f"CELLS {c} {5 * c}")
    for quad in mesh.cells:
        lines.append("4 " + " ".join(str(int(i)) for i in quad))
    lines.append(f"CELL_TYPES {c}")
    lines.extend(["9"] * c)
    lines.append(f"POINT_DATA {n}")
    for name, vec in state.as_dict().items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(val) for val in vec)
    for name, codes in (
        ("gang_class", classification.gang_class),
        ("graffiti_class", classification.graffiti_class),
    ):
        lines.append(f"SCALARS {name} int 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(str(int(code)) for code in codes)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_points(path) -> int:
    """Point count declared by a VTK file written here (round-trip check)."""
    with open(path) as fh:
        for line in fh:
            if line.startswith("POINTS"):
                return int(line.split()[1])
    raise ValueError("no POINTS record found")


def write_diagonal_csv(path, snapshot: DiagonalSnapshot) -> None:
    """Profile along the main diagonal; s is arc length from the corner."""
    with open(path, "w") as fh:
        fh.write("s,u,v,w,z\n")
        for k in range(snapshot.s.size):
            row = (snapshot.s[k], snapshot.u[k], snapshot.v[k], snapshot.w[k], snapshot.z[k])
            fh.write(",".join(_fmt(val) for val in row) + "\n")


def write_summary(path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def time_tag(t: float) -> str:
    return f"{t:g}".replace(".", "p").replace("-", "m")


def sanitize(summary):
    """Make numpy scalars and arrays JSON-friendly, NaN/inf become null."""
    if isinstance(summary, dict):
        return {k: sanitize(v) for k, v in summary.items()}
    if isinstance(summary, (list, tuple)):
        return [sanitize(v) for v in summary]
    if isinstance(summary, np.ndarray):
        return [sanitize(v) for v in summary.tolist()]
    if isinstance(summary, (np.floating, float)):
        x = float(summary)
        return x if np.isfinite(x) else None
    if isinstance(summary, (np.integer,)):
        return int(summary)
    if isinstance(summary, (np.bool_,)):
        return bool(summary)
    return summary
