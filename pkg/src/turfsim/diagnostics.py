"""Run analysis: territory classification, masses, diagonal profiles,
energy-style decay functional, steady-state detection, overlap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import assemble_mass, assemble_stiffness, lump_mass
from .mesh import StructuredQuadMesh, diagonal_nodes
from .model import Equilibrium, ModelParams, StateFields
from .sparse import SparseMatrix

CLASS_CUTOFF = 1e-6

# Class codes shared by gang and graffiti maps: 0 = contested tie,
# 1 = gang u side (its graffiti is z), 2 = gang v side (graffiti w).
TIE = 0
U_SIDE = 1
V_SIDE = 2


@dataclass
class ClassificationGrid:
    """Nodal territory maps at one cutoff."""

    gang_class: np.ndarray
    graffiti_class: np.ndarray
    cutoff: float

    def share(self, code: int) -> float:
        """Fraction of nodes carrying a gang-class code."""
        return float(np.count_nonzero(self.gang_class == code)) / self.gang_class.size


def classify(state: StateFields, cutoff: float = CLASS_CUTOFF) -> ClassificationGrid:
    """Dominance maps: who holds each node, by density and by graffiti.

    A node is u-held when u - v >= cutoff, v-held when v - u >= cutoff and a
    tie in between; the graffiti map compares z (sprayed by u) against w.
    """
    if cutoff <= 0.0:
        raise ValueError("cutoff must be positive")
    gang = _three_way(state.u - state.v, cutoff)
    graffiti = _three_way(state.z - state.w, cutoff)
    return ClassificationGrid(gang_class=gang, graffiti_class=graffiti, cutoff=cutoff)


def _three_way(diff: np.ndarray, cutoff: float) -> np.ndarray:
    out = np.full(diff.shape, TIE, dtype=np.int64)
    out[diff >= cutoff] = U_SIDE
    out[diff <= -cutoff] = V_SIDE
    return out


def total_mass(state: StateFields, weights) -> tuple[float, float]:
    """Discrete masses of both gangs: 1^T M u and 1^T M v.

    weights may be the consistent mass matrix or its lumped vector; the two
    give identical totals because lumping preserves row sums.
    """
    m = lump_mass(weights) if isinstance(weights, SparseMatrix) else np.asarray(weights)
    return float(m @ state.u), float(m @ state.v)


def overlap_measure(state: StateFields, weights) -> float:
    """Lumped-mass integral of min(u, v); zero iff supports are disjoint."""
    m = lump_mass(weights) if isinstance(weights, SparseMatrix) else np.asarray(weights)
    return float(m @ np.minimum(state.u, state.v))


@dataclass
class DiagonalSnapshot:
    """Field values along the main diagonal, parametrized by arc length."""

    s: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    z: np.ndarray
    node_indices: np.ndarray


def diagonal_snapshot(state: StateFields, mesh: StructuredQuadMesh) -> DiagonalSnapshot:
    idx = diagonal_nodes(mesh)
    xy = mesh.nodes[idx]
    s = np.sqrt(2.0) * (xy[:, 0] - mesh.domain.x_min)
    return DiagonalSnapshot(
        s=s,
        u=state.u[idx],
        v=state.v[idx],
        w=state.w[idx],
        z=state.z[idx],
        node_indices=idx,
    )


@dataclass
class LyapunovSample:
    """Value and constituents of the decay functional at one time."""

    t: float
    y: float
    components: tuple

    def recombine(self, c_mult: float) -> float:
        cu, cv, cw, cz, gw, gz = self.components
        return 0.5 * (c_mult * cu + c_mult * cv + cw + cz + gw + gz)


def lyapunov(
    state: StateFields,
    mesh: StructuredQuadMesh,
    params: ModelParams,
    equilibrium: Equilibrium,
    c_mult: float = 1.0,
) -> LyapunovSample:
    """Quadratic distance from the homogeneous steady state.

    y = 1/2 (c int (u - u_bar)^2 + c int (v - v_bar)^2 + int (w - w*)^2
    + int (z - z*)^2 + int |grad w|^2 + int |grad z|^2), evaluated with the
    mass and unit-stiffness quadratic forms.  components holds the six raw
    integrals in that order, without the multiplier.
    """
    m = assemble_mass(mesh)
    s = assemble_stiffness(mesh)

    def msq(vec, ref):
        d = vec - ref
        return float(d @ m.matvec(d))

    comps = (
        msq(state.u, equilibrium.u_bar),
        msq(state.v, equilibrium.v_bar),
        msq(state.w, equilibrium.w_star),
        msq(state.z, equilibrium.z_star),
        float(state.w @ s.matvec(state.w)),
        float(state.z @ s.matvec(state.z)),
    )
    y = 0.5 * (c_mult * comps[0] + c_mult * comps[1] + comps[2] + comps[3] + comps[4] + comps[5])
    return LyapunovSample(t=state.t, y=y, components=comps)


@dataclass
class SteadyStateReport:
    converged: bool
    t_detect: float | None
    limit_values: tuple
    max_deviation: float
    threshold: float
    window: float


def detect_steady_state(
    history,
    equilibrium: Equilibrium,
    threshold: float = 1e-6,
    window: float = 100.0,
) -> SteadyStateReport:
    """Decide whether a sampled run settled at the homogeneous state.

    history is a sequence of (t, StateFields) in time order.  The run counts
    as settled at the first sample whose node-wise change against every
    sample in the trailing window is at most threshold; it converged to the
    homogeneous equilibrium if the deviation from it is also within
    10 * threshold there.  A settled run far from homogeneity (a frozen
    segregation pattern) reports converged = False with the nodal means of
    the final state as the limit candidate.
    """
    if threshold <= 0.0 or window <= 0.0:
        raise ValueError("threshold and window must be positive")
    items = [(float(t), s) for t, s in history]
    if not items:
        raise ValueError("empty history")
    t0 = items[0][0]

    def change(a: StateFields, b: StateFields) -> float:
        return max(
            float(np.max(np.abs(a.u - b.u))),
            float(np.max(np.abs(a.v - b.v))),
            float(np.max(np.abs(a.w - b.w))),
            float(np.max(np.abs(a.z - b.z))),
        )

    def eq_deviation(s: StateFields) -> float:
        return max(
            float(np.max(np.abs(s.u - equilibrium.u_bar))),
            float(np.max(np.abs(s.v - equilibrium.v_bar))),
            float(np.max(np.abs(s.w - equilibrium.w_star))),
            float(np.max(np.abs(s.z - equilibrium.z_star))),
        )

    t_settle = None
    settle_state = None
    for i, (t, s) in enumerate(items):
        if t - t0 < window - 1e-9:
            continue
        in_window = [sj for tj, sj in items[:i] if tj >= t - window - 1e-9]
        if not in_window:
            continue
        if max(change(s, sj) for sj in in_window) <= threshold:
            t_settle = t
            settle_state = s
            break

    final = items[-1][1]
    deviation = eq_deviation(final)
    if t_settle is not None and eq_deviation(settle_state) <= 10.0 * threshold:
        return SteadyStateReport(
            converged=True,
            t_detect=t_settle,
            limit_values=tuple(equilibrium),
            max_deviation=deviation,
            threshold=threshold,
            window=window,
        )
    candidate = (
        float(np.mean(final.u)),
        float(np.mean(final.v)),
        float(np.mean(final.w)),
        float(np.mean(final.z)),
    )
    return SteadyStateReport(
        converged=False,
        t_detect=t_settle,
        limit_values=candidate,
        max_deviation=deviation,
        threshold=threshold,
        window=window,
    )
