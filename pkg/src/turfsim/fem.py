"""Bilinear (Q1) finite elements on structured square-cell meshes.

All assembly runs over the full nodal space with natural no-flux boundary
conditions; nothing is pinned.  A 2x2 tensor Gauss rule integrates every
matrix term exactly (the integrands are at most biquadratic per cell); the
nonlinear graffiti-production loads use the same rule as a controlled
quadrature approximation.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from .mesh import StructuredQuadMesh
from .sparse import SparseMatrix, SparsityPattern

_GAUSS = 1.0 / np.sqrt(3.0)

# Reference square [-1,1]^2 with counterclockwise corner order.
_CORNERS = np.array([(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)])


@dataclass(frozen=True)
class QuadratureRule:
    """Points (xi, eta) on the reference square and weights summing to 4."""

    points: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.points) != len(self.weights):
            raise ValueError("points and weights must pair up")
        if abs(sum(self.weights) - 4.0) > 1e-12:
            raise ValueError("weights must sum to the reference cell measure 4")

    @classmethod
    def gauss_2x2(cls) -> "QuadratureRule":
        pts = tuple((sx * _GAUSS, sy * _GAUSS) for sy in (-1.0, 1.0) for sx in (-1.0, 1.0))
        return cls(points=pts, weights=(1.0, 1.0, 1.0, 1.0))


def shape_values(xi: float, eta: float) -> np.ndarray:
    """The four bilinear basis functions at a reference point."""
    return 0.25 * (1.0 + _CORNERS[:, 0] * xi) * (1.0 + _CORNERS[:, 1] * eta)


def shape_gradients(xi: float, eta: float) -> np.ndarray:
    """Reference gradients, shape (4, 2)."""
    gx = 0.25 * _CORNERS[:, 0] * (1.0 + _CORNERS[:, 1] * eta)
    gy = 0.25 * _CORNERS[:, 1] * (1.0 + _CORNERS[:, 0] * xi)
    return np.column_stack([gx, gy])


@dataclass
class FeFunction:
    """Nodal coefficient vector interpreted as a bilinear field on a mesh."""

    mesh: StructuredQuadMesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_nodes,):
            raise ValueError("coefficient length does not match mesh")


class _Kernels:
    """Per-mesh precomputations shared by every assembly call."""

    def __init__(self, mesh: StructuredQuadMesh, rule: QuadratureRule):
        self.mesh = mesh
        self.rule = rule
        self.pattern = build_pattern(mesh)
        self.cells = mesh.cells
        h = mesh.h
        self.det_j = (h / 2.0) ** 2

        pts = np.asarray(rule.points)
        self.wq = np.asarray(rule.weights)
        self.psi = np.stack([shape_values(x, e) for x, e in pts])          # (Q, 4)
        grad_ref = np.stack([shape_gradients(x, e) for x, e in pts])       # (Q, 4, 2)
        self.grad_phys = grad_ref * (2.0 / h)

        # Flat entry index for every (cell, test, trial) triple.  Global CSR
        # entries sorted by (row, col) let one searchsorted resolve them all.
        rows = self.cells[:, :, None].repeat(4, axis=2)
        cols = self.cells[:, None, :].repeat(4, axis=1)
        keys = self.pattern.entry_row * mesh.n_nodes + self.pattern.entry_col
        self.entry_pos = np.searchsorted(keys, rows.astype(np.int64) * mesh.n_nodes + cols)

        # Element matrices that never change on a uniform mesh.
        mass_loc = self.det_j * np.einsum("q,qa,qb->ab", self.wq, self.psi, self.psi)
        stiff_loc = self.det_j * np.einsum("q,qad,qbd->ab", self.wq, self.grad_phys, self.grad_phys)
        self.mass_values = self._scatter_constant(mass_loc)
        self.stiffness_values = self._scatter_constant(stiff_loc)
        self.lumped = np.add.reduceat(self.mass_values, self.pattern.indptr[:-1])

        # The convection entries are linear in the four nodal drift values, so
        # the quadrature sums fold into one fixed (4, 16) matrix and assembly
        # reduces to a matmul per cell block.
        conv = self.det_j * np.einsum(
            "q,qb,qad,qed->abe", self.wq, self.psi, self.grad_phys, self.grad_phys
        )
        self.conv_kernel = np.ascontiguousarray(conv.transpose(2, 0, 1).reshape(4, 16))
        self.load_weights = self.det_j * (self.wq[:, None] * self.psi)     # (Q, 4)

    def _scatter_constant(self, local: np.ndarray) -> np.ndarray:
        weights = np.broadcast_to(local.ravel(), (self.cells.shape[0], 16)).ravel()
        return np.bincount(self.entry_pos.ravel(), weights=weights, minlength=self.pattern.nnz)

    def scatter(self, local: np.ndarray) -> np.ndarray:
        return np.bincount(self.entry_pos.ravel(), weights=local.ravel(), minlength=self.pattern.nnz)


_kernel_cache: "weakref.WeakKeyDictionary[StructuredQuadMesh, _Kernels]" = weakref.WeakKeyDictionary()


def kernels_for(mesh: StructuredQuadMesh, rule: QuadratureRule | None = None) -> _Kernels:
    if rule is not None:
        return _Kernels(mesh, rule)
    got = _kernel_cache.get(mesh)
    if got is None:
        got = _Kernels(mesh, QuadratureRule.gauss_2x2())
        _kernel_cache[mesh] = got
    return got


def build_pattern(mesh: StructuredQuadMesh) -> SparsityPattern:
    """Nine-point coupling pattern of Q1 elements on a structured grid."""
    n = mesh.n_per_side
    ix = np.arange(mesh.n_nodes) % n
    iy = np.arange(mesh.n_nodes) // n
    offsets = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]
    cand = np.empty((mesh.n_nodes, 9), dtype=np.int64)
    valid = np.empty((mesh.n_nodes, 9), dtype=bool)
    for k, (dy, dx) in enumerate(offsets):
        jx, jy = ix + dx, iy + dy
        valid[:, k] = (jx >= 0) & (jx < n) & (jy >= 0) & (jy < n)
        cand[:, k] = jy * n + jx
    indices = cand[valid]
    indptr = np.zeros(mesh.n_nodes + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(valid.sum(axis=1))
    return SparsityPattern(indptr, indices, mesh.n_nodes)


def assemble_mass(mesh: StructuredQuadMesh, rule: QuadratureRule | None = None) -> SparseMatrix:
    """Consistent mass matrix; symmetric, positive entries, sums to the area."""
    k = kernels_for(mesh, rule)
    return SparseMatrix(k.pattern, k.mass_values.copy())


def lump_mass(mass: SparseMatrix) -> np.ndarray:
    """Row-sum lumping; strictly positive on any valid mass matrix."""
    lumped = mass.row_sums()
    if np.any(lumped <= 0.0):
        raise ValueError("lumped mass must be strictly positive")
    return lumped


def assemble_stiffness(mesh: StructuredQuadMesh) -> SparseMatrix:
    """Unit-diffusion stiffness matrix (gradient-gradient form)."""
    k = kernels_for(mesh)
    return SparseMatrix(k.pattern, k.stiffness_values.copy())


def _coefficients(field) -> np.ndarray:
    if isinstance(field, FeFunction):
        return field.values
    return np.asarray(field, dtype=float)


def assemble_transport(
    mesh: StructuredQuadMesh,
    diffusivity: float,
    avoidance: float,
    grad_source,
) -> SparseMatrix:
    """Transport operator d * stiffness + chi * graffiti-drift convection.

    Entry (i, j) is d * int(grad phi_j . grad phi_i)
    + chi * int(phi_j grad s_h . grad phi_i), where s_h is the bilinear
    graffiti field driving the drift.  Column sums vanish (no-flux mass
    conservation); the convection block is assembled cell by cell from the
    gradient of s_h at the quadrature points.
    """
    k = kernels_for(mesh)
    vals = diffusivity * k.stiffness_values
    if avoidance != 0.0:
        s = _coefficients(grad_source)
        if s.shape != (mesh.n_nodes,):
            raise ValueError("gradient-source coefficients do not match mesh")
        conv_loc = s[k.cells] @ k.conv_kernel                          # (C, 16)
        vals = vals + avoidance * k.scatter(conv_loc)
    return SparseMatrix(k.pattern, vals)


def assemble_rate_load(mesh: StructuredQuadMesh, rate, field) -> np.ndarray:
    """Load vector G_i = int r(s_h) phi_i for a nodal field s_h."""
    k = kernels_for(mesh)
    s = _coefficients(field)
    if s.shape != (mesh.n_nodes,):
        raise ValueError("field coefficients do not match mesh")
    sq = s[k.cells] @ k.psi.T                                          # (C, Q)
    rq = rate.evaluate_array(sq)
    load_loc = rq @ k.load_weights                                     # (C, 4)
    return np.bincount(k.cells.ravel(), weights=load_loc.ravel(), minlength=mesh.n_nodes)


def evaluate_gradient_at_quad(mesh: StructuredQuadMesh, f, cell: int, point) -> np.ndarray:
    """Physical gradient of a bilinear field at a reference point of a cell."""
    coeffs = _coefficients(f)
    if not 0 <= cell < mesh.n_cells:
        raise IndexError(f"cell {cell} out of range")
    xi, eta = point
    if not (-1.0 <= xi <= 1.0 and -1.0 <= eta <= 1.0):
        raise ValueError("reference coordinates must lie in [-1, 1]^2")
    local = coeffs[mesh.cells[cell]]
    return (2.0 / mesh.h) * (shape_gradients(xi, eta).T @ local)


def evaluate_at_quad(mesh: StructuredQuadMesh, f, cell: int, point) -> float:
    """Value of a bilinear field at a reference point of a cell."""
    coeffs = _coefficients(f)
    xi, eta = point
    return float(shape_values(xi, eta) @ coeffs[mesh.cells[cell]])
