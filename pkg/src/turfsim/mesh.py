"""Structured bilinear quadrilateral meshes on rectangles with square cells."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_REFINEMENT = 12


@dataclass(frozen=True)
class Rectangle:
    x_min: float = -6.0
    x_max: float = 6.0
    y_min: float = -6.0
    y_max: float = 6.0

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("degenerate rectangle")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def is_square(self) -> bool:
        return self.x_min == self.y_min and self.x_max == self.y_max


class StructuredQuadMesh:
    """Uniform square-cell grid from bisection refinement of a rectangle.

    Level L splits each side into 2**L cells, giving n_per_side = 2**L + 1
    nodes per direction.  Nodes are numbered lexicographically with x running
    fastest; cells list their corner nodes counterclockwise starting at the
    lower-left corner.
    """

    def __init__(self, domain: Rectangle, refinement_level: int):
        if not 0 <= refinement_level <= MAX_REFINEMENT:
            raise ValueError(f"refinement level must lie in [0, {MAX_REFINEMENT}]")
        if abs(domain.width - domain.height) > 1e-12 * max(domain.width, domain.height):
            raise ValueError("cells must be square: rectangle width and height differ")
        self.domain = domain
        self.refinement_level = refinement_level
        ncell = 2**refinement_level
        self.n_per_side = ncell + 1
        self.h = domain.width / ncell

        n = self.n_per_side
        xs = np.linspace(domain.x_min, domain.x_max, n)
        ys = np.linspace(domain.y_min, domain.y_max, n)
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        self.nodes = np.column_stack([X.ravel(), Y.ravel()])

        ix = np.tile(np.arange(ncell), ncell)
        iy = np.repeat(np.arange(ncell), ncell)
        ll = iy * n + ix
        self.cells = np.column_stack([ll, ll + 1, ll + 1 + n, ll + n])

    @property
    def n_nodes(self) -> int:
        return self.n_per_side**2

    @property
    def n_cells(self) -> int:
        return (self.n_per_side - 1) ** 2

    def node_index(self, ix: int, iy: int) -> int:
        return iy * self.n_per_side + ix

    def __repr__(self):
        return (
            f"StructuredQuadMesh(level={self.refinement_level}, "
            f"nodes={self.n_nodes}, h={self.h:g})"
        )


def build_mesh(domain: Rectangle, refinement_level: int) -> StructuredQuadMesh:
    return StructuredQuadMesh(domain, refinement_level)


def node_neighbors(mesh: StructuredQuadMesh, i: int) -> set[int]:
    """Indices of nodes sharing a cell with node i (excluding i itself)."""
    n = mesh.n_per_side
    if not 0 <= i < mesh.n_nodes:
        raise IndexError(f"node index {i} out of range")
    ix, iy = i % n, i // n
    out = set()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            jx, jy = ix + dx, iy + dy
            if 0 <= jx < n and 0 <= jy < n and (dx, dy) != (0, 0):
                out.add(jy * n + jx)
    return out


def diagonal_nodes(mesh: StructuredQuadMesh) -> np.ndarray:
    """Node indices along the main diagonal y = x, corner to corner.

    Defined only on square domains, where the diagonal passes through grid
    nodes with equal x and y index.
    """
    if not mesh.domain.is_square():
        raise ValueError("diagonal nodes are defined only on square domains")
    n = mesh.n_per_side
    return np.arange(n) * (n + 1)
