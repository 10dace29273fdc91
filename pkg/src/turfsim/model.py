"""Model data: parameters, graffiti production rates, initial conditions.

Two gangs with densities u and v avoid each other's tags: u drifts up the
gradient of the rival graffiti field w (sprayed by gang v) and v drifts up
the gradient of z (sprayed by gang u).  Graffiti relaxes at unit rate and is
produced at a density-dependent rate r(s).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, NamedTuple

import numpy as np

# Nodal round-off slightly below zero is tolerated and clamped; anything more
# negative is outside the admissible set of the model.
NEGATIVE_TOLERANCE = 1e-12


class RateKind(Enum):
    SATURATING = "saturating"
    IDENTITY = "identity"


@dataclass(frozen=True)
class RateFunction:
    """Graffiti production rate r(s) for gang density s >= 0.

    SATURATING is s / (1 + s): linear in the dilute limit, bounded by one.
    IDENTITY is the unbounded linear rate r(s) = s.
    """

    kind: RateKind = RateKind.SATURATING

    def evaluate(self, s: float) -> float:
        """Rate at a single density value.

        Raises ValueError for s below -1e-12; values in [-1e-12, 0) are
        treated as round-off and clamped to zero.
        """
        if s < -NEGATIVE_TOLERANCE:
            raise ValueError(f"density {s!r} outside the admissible range of the rate function")
        s = max(s, 0.0)
        if self.kind is RateKind.IDENTITY:
            return s
        return s / (1.0 + s)

    def derivative(self, s: float) -> float:
        """dr/ds, with the same domain handling as evaluate."""
        if s < -NEGATIVE_TOLERANCE:
            raise ValueError(f"density {s!r} outside the admissible range of the rate function")
        s = max(s, 0.0)
        if self.kind is RateKind.IDENTITY:
            return 1.0
        return 1.0 / (1.0 + s) ** 2

    def evaluate_array(self, values: np.ndarray) -> np.ndarray:
        """Vectorized rate used by the assembly kernels.

        Round-off negatives above -1e-12 are clamped to zero.  More negative
        inputs are pushed through the formula unchanged: an unstabilized
        scheme that produces negative densities must be allowed to feed them
        back into graffiti production and fail in its own natural way instead
        of aborting on the first bad quadrature value.
        """
        values = np.where((values < 0.0) & (values >= -NEGATIVE_TOLERANCE), 0.0, values)
        if self.kind is RateKind.IDENTITY:
            return values
        with np.errstate(divide="ignore", invalid="ignore"):
            return values / (1.0 + values)


SATURATING = RateFunction(RateKind.SATURATING)
IDENTITY = RateFunction(RateKind.IDENTITY)


@dataclass(frozen=True)
class ModelParams:
    """Diffusivities, graffiti-avoidance strengths and production rates.

    d_u, d_v are gang diffusivities (positive); chi_u, chi_v are the
    avoidance (cross-diffusion) coefficients (nonnegative).
    """

    d_u: float = 0.25
    d_v: float = 0.25
    chi_u: float = 0.25
    chi_v: float = 0.25
    rate_f: RateFunction = SATURATING
    rate_g: RateFunction = SATURATING

    def __post_init__(self):
        if not (self.d_u > 0.0 and self.d_v > 0.0):
            raise ValueError("diffusivities d_u, d_v must be positive")
        if self.chi_u < 0.0 or self.chi_v < 0.0:
            raise ValueError("avoidance strengths chi_u, chi_v must be nonnegative")


@dataclass
class StateFields:
    """Nodal coefficient vectors of the four fields at one time level."""

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    z: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        n = self.u.shape[0]
        if not (self.v.shape == self.w.shape == self.z.shape == (n,)):
            raise ValueError("all four fields must share one nodal vector length")

    def copy(self) -> "StateFields":
        return StateFields(self.u.copy(), self.v.copy(), self.w.copy(), self.z.copy(), self.t)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"u": self.u, "v": self.v, "w": self.w, "z": self.z}


Field2D = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _zero(x, y):
    return np.zeros_like(x)


@dataclass(frozen=True)
class InitialCondition:
    """Initial data as four scalar fields of (x, y).

    kind is one of "offset_gaussians", "pure_gaussians", "constant", "custom".
    Graffiti starts blank (w = z = 0) for all built-in kinds.
    """

    kind: str
    u0: Field2D
    v0: Field2D
    w0: Field2D = _zero
    z0: Field2D = _zero
    const_u: float = 0.0
    const_v: float = 0.0

    @classmethod
    def offset_gaussians(cls, amplitude: float = 1.0) -> "InitialCondition":
        """Background 0.1 plus opposing Gaussian bumps at (2, 2) and (-2, -2)."""

        def u0(x, y):
            return 0.1 + amplitude * np.exp(-((x - 2.0) ** 2) - (y - 2.0) ** 2)

        def v0(x, y):
            return 0.1 + amplitude * np.exp(-((x + 2.0) ** 2) - (y + 2.0) ** 2)

        kind = "offset_gaussians" if amplitude == 1.0 else "custom"
        return cls(kind=kind, u0=u0, v0=v0)

    @classmethod
    def pure_gaussians(cls) -> "InitialCondition":
        """Gaussian bumps at (3, 3) and (-3, -3) with no background."""

        def u0(x, y):
            return np.exp(-((x - 3.0) ** 2) - (y - 3.0) ** 2)

        def v0(x, y):
            return np.exp(-((x + 3.0) ** 2) - (y + 3.0) ** 2)

        return cls(kind="pure_gaussians", u0=u0, v0=v0)

    @classmethod
    def constant(cls, c_u: float, c_v: float) -> "InitialCondition":
        if c_u < 0.0 or c_v < 0.0:
            raise ValueError("constant initial densities must be nonnegative")

        def u0(x, y):
            return np.full_like(x, float(c_u))

        def v0(x, y):
            return np.full_like(x, float(c_v))

        return cls(kind="constant", u0=u0, v0=v0, const_u=float(c_u), const_v=float(c_v))

    @classmethod
    def custom(cls, u0: Field2D, v0: Field2D, w0: Field2D = _zero, z0: Field2D = _zero) -> "InitialCondition":
        return cls(kind="custom", u0=u0, v0=v0, w0=w0, z0=z0)

    def sample(self, mesh) -> StateFields:
        """Nodal interpolant of the four fields on a mesh."""
        x = mesh.nodes[:, 0]
        y = mesh.nodes[:, 1]
        fields = []
        for name, fn in (("u", self.u0), ("v", self.v0), ("w", self.w0), ("z", self.z0)):
            vals = np.asarray(fn(x, y), dtype=float)
            if vals.shape != x.shape:
                raise ValueError(f"initial field {name} must evaluate elementwise on node coordinates")
            if np.min(vals) < -NEGATIVE_TOLERANCE:
                raise ValueError(f"initial field {name} is negative at a mesh node")
            fields.append(np.maximum(vals, 0.0))
        return StateFields(*fields, t=0.0)


class Equilibrium(NamedTuple):
    """Spatially homogeneous steady state implied by the initial averages."""

    u_bar: float
    v_bar: float
    w_star: float
    z_star: float


def _panel_gauss_average(fn: Field2D, domain) -> float:
    """Mean of fn over the domain by composite 2x2 Gauss quadrature.

    A fixed 512x512 panel grid (independent of any simulation mesh) with
    tensor 2-point Gauss per panel; plenty below 1e-8 relative error for
    smooth data.
    """
    panels = 512
    offset = 1.0 / (2.0 * np.sqrt(3.0))

    def axis_points(lo, hi):
        h = (hi - lo) / panels
        centers = lo + h * (np.arange(panels) + 0.5)
        pts = np.concatenate([centers - h * offset, centers + h * offset])
        pts.sort()
        return pts, np.full(2 * panels, h / 2.0)

    xs, wx = axis_points(domain.x_min, domain.x_max)
    ys, wy = axis_points(domain.y_min, domain.y_max)
    vals = fn(xs[:, None], ys[None, :])
    integral = wx @ vals @ wy
    return float(integral / domain.area)


def homogeneous_equilibrium(params: ModelParams, ic: InitialCondition, domain) -> Equilibrium:
    """Constant state (u_bar, v_bar, f(v_bar), g(u_bar)) from the initial means.

    Mass of each gang is conserved, so the only homogeneous steady state has
    the gangs at their initial spatial averages and the graffiti fields at
    the corresponding production levels.
    """
    if ic.kind == "constant":
        u_bar, v_bar = ic.const_u, ic.const_v
    else:
        u_bar = _panel_gauss_average(ic.u0, domain)
        v_bar = _panel_gauss_average(ic.v0, domain)
    return Equilibrium(u_bar, v_bar, params.rate_f.evaluate(v_bar), params.rate_g.evaluate(u_bar))


def apply_scaling(state: StateFields, params: ModelParams, scale_u: float, scale_v: float):
    """Exact symmetry of the identity-rate model.

    Scaling gang u (and its graffiti z) by scale_u and gang v (with w) by
    scale_v yields another solution once the avoidance strengths are divided
    by the rival's factor.  Only the identity rate commutes with scaling, so
    saturating rates are rejected.

    Returns the scaled (state, params) pair; inputs are left untouched.
    """
    if params.rate_f.kind is not RateKind.IDENTITY or params.rate_g.kind is not RateKind.IDENTITY:
        raise ValueError("scaling symmetry holds only for identity production rates")
    if not (scale_u > 0.0 and scale_v > 0.0):
        raise ValueError("scaling factors must be positive")
    scaled_state = StateFields(
        u=scale_u * state.u,
        v=scale_v * state.v,
        w=scale_v * state.w,
        z=scale_u * state.z,
        t=state.t,
    )
    scaled_params = replace(params, chi_u=params.chi_u / scale_v, chi_v=params.chi_v / scale_u)
    return scaled_state, scaled_params
