"""Theta-scheme time stepping with a fixed-point pass over the nonlinear
coupling, in three flavors: consistent-mass Galerkin, the order-preserving
low-order scheme, and flux-corrected transport.

One step solves, per fixed-point iteration k and in this order: gang u,
gang v (each by the selected scheme against the rival graffiti gradient at
iterate k-1), then graffiti w and z by a relaxation update fed by the
just-computed densities.  The graffiti load projection follows the scheme:
consistent mass for plain Galerkin, lumped mass for the stabilized schemes.
Iterates start at the previous time level and stop on a relative sup-norm
increment test.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import afc
from .fem import assemble_mass, assemble_rate_load, assemble_transport, kernels_for, lump_mass
from .mesh import StructuredQuadMesh
from .model import InitialCondition, ModelParams, StateFields
from .sparse import (
    DIRECT_SIZE_LIMIT,
    DirectFactor,
    SingularMatrixError,
    SolveFailure,
    SparseMatrix,
    solve,
)

# Sup norm beyond which a run counts as blown up even while still finite.
BLOWUP_LIMIT = 1e12


class Scheme(Enum):
    GALERKIN = "galerkin"
    LOW_ORDER = "low_order"
    FCT = "fct"


@dataclass
class TimeConfig:
    t_end: float = 1000.0
    dt: float = 1.0
    theta: float = 0.5
    scheme: Scheme = Scheme.GALERKIN
    fp_tolerance: float = 1e-8
    fp_max_iter: int = 50
    prelimiting: bool = True

    def __post_init__(self):
        if self.dt <= 0.0 or self.t_end < 0.0:
            raise ValueError("need dt > 0 and t_end >= 0")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.fp_tolerance <= 0.0 or self.fp_max_iter < 1:
            raise ValueError("fixed-point controls out of range")


@dataclass
class StepReport:
    t: float
    fp_iterations: int
    fp_residual: float
    fp_converged: bool
    timestep_condition_ok: bool
    min_u: float
    min_v: float
    min_w: float
    min_z: float


class DivergenceError(RuntimeError):
    """Raised when a state leaves the finite range the model allows."""

    def __init__(self, t: float, reason: str):
        super().__init__(f"solution diverged at t = {t:g}: {reason}")
        self.t = t
        self.reason = reason


def check_timestep_condition(
    lumped: np.ndarray,
    a_new: SparseMatrix,
    a_tilde_old: SparseMatrix,
    theta: float,
    dt: float,
):
    """Per-node order-preservation conditions of the low-order step.

    Requires m_i - (1-theta) dt atilde_ii >= 0 (explicit part keeps
    nonnegative coefficients) and m_i + theta dt row_sum(a_new) > 0
    (implicit part stays an M-matrix after adding the lumped mass).
    Returns (per-node flags, aggregate flag).
    """
    cond = (lumped - (1.0 - theta) * dt * a_tilde_old.diagonal() >= 0.0) & (
        lumped + theta * dt * a_new.row_sums() > 0.0
    )
    return cond, bool(np.all(cond))


def _sup(x: np.ndarray) -> float:
    return float(np.max(np.abs(x))) if x.size else 0.0


class _RecycledDirect:
    """Direct solves that reuse the previous factorization when they can.

    Successive fixed-point systems differ by a small drift-operator update,
    so the stale LU usually closes the gap in one or two defect-correction
    sweeps.  Every returned solution meets the same residual bound a fresh
    factorization would; a stall triggers refactorization.
    """

    def __init__(self, tol: float = 1e-12, max_sweeps: int = 4):
        self.tol = tol
        self.max_sweeps = max_sweeps
        self._factor: DirectFactor | None = None

    def solve(self, a: SparseMatrix, b: np.ndarray) -> np.ndarray:
        target = self.tol * max(float(np.linalg.norm(b)), 1e-300)
        if self._factor is not None:
            x = self._factor.solve(b)
            for _ in range(self.max_sweeps):
                r = b - a.matvec(x)
                if np.linalg.norm(r) <= target:
                    return x
                x = x + self._factor.solve(r)
            if np.linalg.norm(b - a.matvec(x)) <= target:
                return x
        self._factor = DirectFactor(a)
        x = self._factor.solve(b)
        if not np.linalg.norm(b - a.matvec(x)) <= target:
            return solve(a, b)
        return x


class Simulator:
    """Holds the per-mesh operators one run keeps reusing."""

    def __init__(self, mesh: StructuredQuadMesh, params: ModelParams, config: TimeConfig):
        self.mesh = mesh
        self.params = params
        self.config = config
        self.kernels = kernels_for(mesh)
        self.mass = assemble_mass(mesh)
        self.lumped = lump_mass(self.mass)
        self._diag = self.mass.pattern.diagonal_entries
        self._warned_condition = False
        if mesh.n_nodes <= DIRECT_SIZE_LIMIT:
            self._solver_u = _RecycledDirect()
            self._solver_v = _RecycledDirect()
        else:
            self._solver_u = self._solver_v = None
        if config.scheme is Scheme.GALERKIN and mesh.n_nodes <= DIRECT_SIZE_LIMIT:
            self._mass_factor = DirectFactor(self.mass)
        else:
            self._mass_factor = None

    def _project_load(self, combined: np.ndarray) -> np.ndarray:
        if self._mass_factor is not None:
            return self._mass_factor.solve(combined)
        return solve(self.mass, combined)

    def _scheme_solve(self, recycled, a: SparseMatrix, b: np.ndarray) -> np.ndarray:
        try:
            if recycled is None:
                return solve(a, b)
            return recycled.solve(a, b)
        except SolveFailure:
            # Marginal conditioning on the way into a blow-up: accept a
            # looser residual so the run reaches the actual divergence
            # instead of aborting while the state is still finite.
            return solve(a, b, tol=1e-9)

    def _system(self, a_values: np.ndarray, lumped_mass: bool) -> SparseMatrix:
        """Implicit operator mass + theta dt A, with the requested mass."""
        coeff = self.config.theta * self.config.dt
        vals = coeff * a_values
        if lumped_mass:
            vals[self._diag] += self.lumped
        else:
            vals = vals + self.mass.values
        return SparseMatrix(self.mass.pattern, vals)

    def _require_finite_operator(self, a: SparseMatrix, t: float):
        if not np.all(np.isfinite(a.values)):
            raise DivergenceError(t, "transport operator has non-finite entries")

    def advance(self, state: StateFields):
        """One theta step; returns (new state, report) or raises DivergenceError."""
        p, cfg, mesh = self.params, self.config, self.mesh
        dt, th = cfg.dt, cfg.theta
        t_new = state.t + dt
        fct = cfg.scheme is Scheme.FCT
        galerkin = cfg.scheme is Scheme.GALERKIN

        u_old, v_old, w_old, z_old = state.u, state.v, state.w, state.z

        a_old_u = assemble_transport(mesh, p.d_u, p.chi_u, w_old)
        a_old_v = assemble_transport(mesh, p.d_v, p.chi_v, z_old)
        self._require_finite_operator(a_old_u, t_new)
        self._require_finite_operator(a_old_v, t_new)

        d_old_u = afc.build_artificial_diffusion(a_old_u)
        d_old_v = afc.build_artificial_diffusion(a_old_v)
        at_old_u = afc.low_order_operator(a_old_u, d_old_u)
        at_old_v = afc.low_order_operator(a_old_v, d_old_v)

        if galerkin:
            rhs_u = self.mass.matvec(u_old) - (1.0 - th) * dt * a_old_u.matvec(u_old)
            rhs_v = self.mass.matvec(v_old) - (1.0 - th) * dt * a_old_v.matvec(v_old)
        else:
            rhs_u = self.lumped * u_old - (1.0 - th) * dt * at_old_u.matvec(u_old)
            rhs_v = self.lumped * v_old - (1.0 - th) * dt * at_old_v.matvec(v_old)
        # Explicit low-order predictor whose local bounds the limiter protects.
        u_bar = rhs_u / self.lumped if fct else None
        v_bar = rhs_v / self.lumped if fct else None

        load_w_old = assemble_rate_load(mesh, p.rate_f, v_old)
        load_z_old = assemble_rate_load(mesh, p.rate_g, u_old)
        relax = 1.0 + th * dt
        keep = 1.0 - (1.0 - th) * dt

        u_k, v_k, w_k, z_k = u_old, v_old, w_old, z_old
        a_new_u, a_new_v = a_old_u, a_old_v
        iterations = 0
        residual = np.inf
        converged = False

        for k in range(1, cfg.fp_max_iter + 1):
            iterations = k
            if k > 1:
                # Iterates moved, so the drift operators follow them.
                a_new_u = assemble_transport(mesh, p.d_u, p.chi_u, w_k)
                a_new_v = assemble_transport(mesh, p.d_v, p.chi_v, z_k)
                self._require_finite_operator(a_new_u, t_new)
                self._require_finite_operator(a_new_v, t_new)

            if galerkin:
                u_next = self._scheme_solve(self._solver_u, self._system(a_new_u.values, lumped_mass=False), rhs_u)
                v_next = self._scheme_solve(self._solver_v, self._system(a_new_v.values, lumped_mass=False), rhs_v)
            else:
                d_new_u = d_old_u if k == 1 else afc.build_artificial_diffusion(a_new_u)
                d_new_v = d_old_v if k == 1 else afc.build_artificial_diffusion(a_new_v)
                at_new_u = afc.low_order_operator(a_new_u, d_new_u)
                at_new_v = afc.low_order_operator(a_new_v, d_new_v)
                if fct:
                    sys_rhs_u = self.lumped * u_bar + self._limited_increment(
                        d_new_u, d_old_u, u_k, u_old, u_bar
                    )
                    sys_rhs_v = self.lumped * v_bar + self._limited_increment(
                        d_new_v, d_old_v, v_k, v_old, v_bar
                    )
                else:
                    sys_rhs_u, sys_rhs_v = rhs_u, rhs_v
                u_next = self._scheme_solve(self._solver_u, self._system(at_new_u.values, lumped_mass=True), sys_rhs_u)
                v_next = self._scheme_solve(self._solver_v, self._system(at_new_v.values, lumped_mass=True), sys_rhs_v)

            load_w_new = assemble_rate_load(mesh, p.rate_f, v_next)
            load_z_new = assemble_rate_load(mesh, p.rate_g, u_next)
            if galerkin:
                w_next = (keep * w_old + dt * self._project_load(th * load_w_new + (1.0 - th) * load_w_old)) / relax
                z_next = (keep * z_old + dt * self._project_load(th * load_z_new + (1.0 - th) * load_z_old)) / relax
            else:
                # The stabilized schemes lump the graffiti mass as well: the
                # averaged load has nonnegative weights, so w and z cannot
                # undershoot zero the way the consistent projection does at
                # sharp fronts.
                w_next = (keep * w_old + dt * (th * load_w_new + (1.0 - th) * load_w_old) / self.lumped) / relax
                z_next = (keep * z_old + dt * (th * load_z_new + (1.0 - th) * load_z_old) / self.lumped) / relax

            residual = max(
                _sup(u_next - u_k) / max(1.0, _sup(u_next)),
                _sup(v_next - v_k) / max(1.0, _sup(v_next)),
                _sup(w_next - w_k) / max(1.0, _sup(w_next)),
                _sup(z_next - z_k) / max(1.0, _sup(z_next)),
            )
            u_k, v_k, w_k, z_k = u_next, v_next, w_next, z_next
            if not np.isfinite(residual):
                break
            if residual <= cfg.fp_tolerance:
                converged = True
                break

        _, condition_ok = check_timestep_condition(self.lumped, a_new_u, at_old_u, th, dt)
        if condition_ok:
            _, condition_ok = check_timestep_condition(self.lumped, a_new_v, at_old_v, th, dt)
        if not condition_ok and not self._warned_condition and cfg.scheme is not Scheme.GALERKIN:
            warnings.warn(
                f"time-step condition violated at t = {t_new:g}; "
                "order preservation of the low-order step is not guaranteed",
                stacklevel=2,
            )
            self._warned_condition = True

        new_state = StateFields(u_k, v_k, w_k, z_k, t=t_new)
        report = StepReport(
            t=t_new,
            fp_iterations=iterations,
            fp_residual=float(residual),
            fp_converged=converged,
            timestep_condition_ok=condition_ok,
            min_u=float(np.min(u_k)),
            min_v=float(np.min(v_k)),
            min_w=float(np.min(w_k)),
            min_z=float(np.min(z_k)),
        )
        self._raise_if_diverged(new_state)
        return new_state, report

    def _limited_increment(self, d_new, d_old, u_iter, u_old, u_bar):
        ws = afc.assemble_fluxes(
            self.mass, self.lumped, d_new, d_old, u_iter, u_old, self.config.theta, self.config.dt
        )
        if self.config.prelimiting:
            afc.prelimit(ws, u_bar)
        afc.zalesak_limit(ws, u_bar, self.lumped)
        return afc.corrected_rhs_increment(ws)

    def _raise_if_diverged(self, state: StateFields):
        for name, vec in state.as_dict().items():
            if not np.all(np.isfinite(vec)):
                raise DivergenceError(state.t, f"field {name} has non-finite values")
            if _sup(vec) > BLOWUP_LIMIT:
                raise DivergenceError(state.t, f"field {name} exceeded {BLOWUP_LIMIT:g}")


def advance(state: StateFields, params: ModelParams, mesh: StructuredQuadMesh, config: TimeConfig):
    """Single-step convenience wrapper around a throwaway Simulator."""
    return Simulator(mesh, params, config).advance(state)


@dataclass
class RunResult:
    final_state: StateFields
    status: str  # "completed" or "diverged"
    diverged_at: float | None
    divergence_reason: str | None
    reports: list[StepReport]
    samples: list[tuple[float, StateFields]]
    observations: dict[str, list]
    initial_state: StateFields = None  # type: ignore[assignment]

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.reports])

    def min_over_run(self, name: str) -> float:
        """Smallest nodal value of one field over every completed step."""
        vals = [getattr(r, f"min_{name}") for r in self.reports]
        vals.append(float(np.min(getattr(self.initial_state, name))))
        finite = [x for x in vals if np.isfinite(x)]
        return min(finite) if finite else np.nan


def run(
    ic,
    params: ModelParams,
    mesh: StructuredQuadMesh,
    config: TimeConfig,
    sample_times=None,
    observers: dict | None = None,
) -> RunResult:
    """March from t = 0 to t_end, sampling states and observer values.

    ic may be an InitialCondition or a ready StateFields.  sample_times
    default to {0, t_end}; each requested time is matched to the first step
    time reaching it.  Observers map a name to a callable of the state; they
    fire at every captured sample.  On divergence the partial history is
    returned with status "diverged" rather than raising.
    """
    if isinstance(ic, InitialCondition):
        state = ic.sample(mesh)
    else:
        state = ic.copy()
        state.t = 0.0
    n_steps = round(config.t_end / config.dt)
    if abs(n_steps * config.dt - config.t_end) > 1e-9 * max(1.0, config.t_end):
        raise ValueError("t_end must be an integer multiple of dt")

    if sample_times is None:
        sample_times = [0.0, config.t_end]
    schedule = sorted(set(float(s) for s in sample_times))
    for s in schedule:
        if s < 0.0 or s > config.t_end + 1e-9:
            raise ValueError(f"sample time {s} outside the run interval")

    sim = Simulator(mesh, params, config)
    observers = observers or {}
    result = RunResult(
        final_state=state,
        status="completed",
        diverged_at=None,
        divergence_reason=None,
        reports=[],
        samples=[],
        observations={name: [] for name in observers},
        initial_state=state.copy(),
    )

    cursor = 0

    def capture(current: StateFields):
        nonlocal cursor
        taken = False
        while cursor < len(schedule) and schedule[cursor] <= current.t + 1e-9:
            if not taken:
                result.samples.append((current.t, current.copy()))
                for name, fn in observers.items():
                    result.observations[name].append((current.t, fn(current)))
                taken = True
            cursor += 1

    capture(state)
    for _ in range(n_steps):
        try:
            state, report = sim.advance(state)
        except DivergenceError as exc:
            result.status = "diverged"
            result.diverged_at = exc.t
            result.divergence_reason = exc.reason
            break
        except (SolveFailure, SingularMatrixError) as exc:
            # Near blow-up the linear systems go ill-conditioned before the
            # state itself turns non-finite; count that as divergence too.
            result.status = "diverged"
            result.diverged_at = state.t + config.dt
            result.divergence_reason = f"linear solver: {exc}"
            break
        result.reports.append(report)
        result.final_state = state
        capture(state)
    return result
