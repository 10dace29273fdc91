"""End-to-end reproduction gate.

One test per acceptance requirement, in order, each at its pinned
tolerance.  The expensive reference runs execute once per session and are
shared across tests; the full module takes on the order of 45 minutes,
dominated by the avoidance-10 run at its reduced step.
"""

from dataclasses import replace

import numpy as np
import pytest

from turfsim.afc import (
    LimiterWorkspace,
    assemble_fluxes,
    build_artificial_diffusion,
    corrected_rhs_increment,
    prelimit,
    zalesak_limit,
)
from turfsim.diagnostics import U_SIDE, V_SIDE, classify, lyapunov, overlap_measure, total_mass
from turfsim.fem import assemble_mass, assemble_transport, lump_mass
from turfsim.mesh import Rectangle, build_mesh
from turfsim.model import (
    IDENTITY,
    InitialCondition,
    ModelParams,
    apply_scaling,
    homogeneous_equilibrium,
)
from turfsim.presets import PRESETS, execute_config, run_preset, study_differences
from turfsim.stepper import Scheme, TimeConfig, run

U_CONST = 0.121817
W_CONST = 0.108588


@pytest.fixture(scope="session")
def baseline():
    return run_preset("fig1_baseline")


@pytest.fixture(scope="session")
def strong_diffusion():
    return run_preset("fig2_diffusion_dominated")


@pytest.fixture(scope="session")
def unstabilized():
    return run_preset("fig3_galerkin_blowup")


@pytest.fixture(scope="session")
def corrected():
    names = ("fig4_chi3", "fig5_chi10", "fig6_asymmetric", "fig7_complete_segregation")
    return {name: run_preset(name) for name in names}


@pytest.fixture(scope="session")
def study_variants():
    # Avoidance-3 corrected run to t = 500, repeated over mesh levels at
    # the nominal step and over halved steps on the reference mesh.
    base = PRESETS["mesh_study"].config
    variants = {}
    for level in (3, 4, 5):
        variants[f"level{level}"] = execute_config(replace(base, refinement=level))
    for dt in (0.5, 0.25):
        cfg = replace(base, time=replace(base.time, dt=dt))
        variants[f"dt{dt}"] = execute_config(cfg)
    return variants


def test_balanced_run_reaches_reference_constants(baseline):
    result = baseline.result
    assert result.status == "completed"
    final = result.final_state
    assert abs(final.t - 1000.0) <= 1e-9
    assert np.max(np.abs(final.u - U_CONST)) <= 1e-3
    assert np.max(np.abs(final.w - W_CONST)) <= 1e-3
    detect = baseline.summary["steady_state"]
    assert detect["t_detect"] is not None
    assert detect["t_detect"] <= 800.0


def test_strong_diffusion_reaches_constants_early(strong_diffusion):
    result = strong_diffusion.result
    assert result.status == "completed"
    state = next(s for t, s in result.samples if abs(t - 250.0) <= 1e-9)
    assert np.max(np.abs(state.u - U_CONST)) <= 1e-3
    assert np.max(np.abs(state.w - W_CONST)) <= 1e-3


def test_unstabilized_avoidance_goes_negative_then_blows_up(unstabilized):
    result = unstabilized.result
    negative_times = [r.t for r in result.reports if r.min_u < -1e-3]
    assert negative_times and min(negative_times) <= 35.0
    assert result.status == "diverged"
    assert result.diverged_at is not None and result.diverged_at <= 50.0
    assert "non-finite" in result.divergence_reason or "exceeded" in result.divergence_reason


def test_corrected_runs_never_undershoot_zero(corrected):
    for name, outcome in corrected.items():
        result = outcome.result
        assert result.status == "completed", name
        assert abs(result.final_state.t - 1000.0) <= 1e-9, name
        for field in ("u", "v", "w", "z"):
            assert result.min_over_run(field) >= -1e-10, (name, field)


def test_every_completed_run_conserves_both_gang_masses(
    baseline, strong_diffusion, corrected, study_variants
):
    runs = {
        "fig1_baseline": (baseline.result, baseline.mesh),
        "fig2_diffusion_dominated": (strong_diffusion.result, strong_diffusion.mesh),
    }
    runs.update({name: (o.result, o.mesh) for name, o in corrected.items()})
    runs.update({name: (r, m) for name, (r, m, _) in study_variants.items()})
    for name, (result, mesh) in runs.items():
        assert result.status == "completed", name
        weights = assemble_mass(mesh)
        mu0, mv0 = total_mass(result.initial_state, weights)
        mu1, mv1 = total_mass(result.final_state, weights)
        assert abs(mu1 - mu0) <= 1e-6 * mu0, name
        assert abs(mv1 - mv0) <= 1e-6 * mv0, name


def test_territories_split_partially_and_completely(corrected):
    # Interleaved territories with the minority still present everywhere.
    partial = corrected["fig4_chi3"].result.final_state
    grid = classify(partial)
    assert grid.share(U_SIDE) >= 0.20
    assert grid.share(V_SIDE) >= 0.20
    assert float(np.min(partial.v[grid.gang_class == U_SIDE])) > 0.0

    # Separated pure bumps never meet: overlap stays at round-off.
    outcome = corrected["fig7_complete_segregation"]
    disjoint = outcome.result.final_state
    weights = assemble_mass(outcome.mesh)
    masses = total_mass(disjoint, weights)
    assert overlap_measure(disjoint, weights) <= 1e-6 * min(masses)


def test_stronger_avoidance_concentrates_into_fewer_nodes(corrected):
    final = corrected["fig6_asymmetric"].result.final_state
    assert float(np.max(final.v)) >= 1.5 * float(np.max(final.u))
    grid = classify(final)
    held_u = int(np.count_nonzero(grid.gang_class == U_SIDE))
    held_v = int(np.count_nonzero(grid.gang_class == V_SIDE))
    assert held_v < held_u


def test_randomized_limiter_keeps_updates_in_local_bounds():
    rng = np.random.default_rng(20260821)
    setups = []
    for level in (1, 2, 3):
        mesh = build_mesh(Rectangle(), level)
        mass = assemble_mass(mesh)
        setups.append((mass.pattern, lump_mass(mass), mesh.n_nodes))
    for trial in range(200):
        pat, lumped, n = setups[trial % 3]
        u_low = rng.uniform(-1.0, 2.0, n)
        half = rng.standard_normal(pat.nnz)
        ws = LimiterWorkspace(pattern=pat, raw_flux=half - half[pat.transpose_entry])
        if trial % 2:
            prelimit(ws, u_low)
        zalesak_limit(ws, u_low, lumped)

        assert np.all(ws.alpha >= 0.0) and np.all(ws.alpha <= 1.0)
        increments = corrected_rhs_increment(ws)
        assert abs(float(np.sum(increments))) <= 1e-11
        update = u_low + increments / lumped
        high = np.maximum.reduceat(u_low[pat.entry_col], pat.indptr[:-1])
        low = np.minimum.reduceat(u_low[pat.entry_col], pat.indptr[:-1])
        assert np.all(update <= high + 1e-11)
        assert np.all(update >= low - 1e-11)


def test_flux_row_sums_reproduce_dense_defect():
    rng = np.random.default_rng(7)
    pairs = [(0.5, 1.0), (0.35, 0.7), (1.0, 0.25)]
    for level in (1, 2):
        mesh = build_mesh(Rectangle(), level)
        mass = assemble_mass(mesh)
        lumped = lump_mass(mass)
        for theta, dt in pairs:
            w_new = rng.uniform(0.0, 1.0, mesh.n_nodes)
            w_old = rng.uniform(0.0, 1.0, mesh.n_nodes)
            d_new = build_artificial_diffusion(assemble_transport(mesh, 0.25, 3.0, w_new))
            d_old = build_artificial_diffusion(assemble_transport(mesh, 0.25, 3.0, w_old))
            u_iter = rng.uniform(0.0, 1.0, mesh.n_nodes)
            u_old = rng.uniform(0.0, 1.0, mesh.n_nodes)

            ws = assemble_fluxes(mass, lumped, d_new, d_old, u_iter, u_old, theta, dt)
            row_sums = np.add.reduceat(ws.raw_flux, mass.pattern.indptr[:-1])
            defect = (
                (np.diag(lumped) - mass.to_dense()) @ (u_iter - u_old)
                + theta * dt * d_new.to_dense() @ u_iter
                + (1.0 - theta) * dt * d_old.to_dense() @ u_old
            )
            np.testing.assert_allclose(row_sums, defect, atol=1e-12)


def test_identity_rate_scaled_twin_tracks_base_run():
    mesh = build_mesh(Rectangle(), 5)
    params = ModelParams(rate_f=IDENTITY, rate_g=IDENTITY)
    config = TimeConfig(
        t_end=10.0, dt=0.1, scheme=Scheme.FCT, fp_tolerance=1e-12, fp_max_iter=80
    )
    start = InitialCondition.offset_gaussians().sample(mesh)
    scaled_start, scaled_params = apply_scaling(start, params, 2.0, 0.5)

    base = run(start, params, mesh, config)
    twin = run(scaled_start, scaled_params, mesh, config)
    assert base.status == "completed" and twin.status == "completed"

    mapped, _ = apply_scaling(base.final_state, params, 2.0, 0.5)
    for field in ("u", "v", "w", "z"):
        gap = np.max(np.abs(getattr(twin.final_state, field) - getattr(mapped, field)))
        assert gap <= 1e-8, field


def test_refining_mesh_and_step_shrinks_diagonal_differences(study_variants):
    mesh_runs = [study_variants[f"level{level}"][:2] for level in (3, 4, 5)]
    mesh_diffs = study_differences(mesh_runs, 500.0)
    assert mesh_diffs[1] < mesh_diffs[0]

    step_runs = [study_variants[key][:2] for key in ("level5", "dt0.5", "dt0.25")]
    step_diffs = study_differences(step_runs, 500.0)
    assert step_diffs[1] < step_diffs[0]


def test_small_perturbation_energy_decays_monotonically():
    mesh = build_mesh(Rectangle(), 5)
    params = ModelParams()
    ic = InitialCondition.offset_gaussians(amplitude=1e-3)
    config = TimeConfig(t_end=500.0, dt=1.0, scheme=Scheme.FCT)
    samples = [float(t) for t in range(0, 501, 50)]

    result = run(ic, params, mesh, config, sample_times=samples)
    assert result.status == "completed"
    equilibrium = homogeneous_equilibrium(params, ic, Rectangle())
    ys = [lyapunov(s, mesh, params, equilibrium).y for _, s in result.samples]
    assert len(ys) == len(samples)
    for earlier, later in zip(ys, ys[1:]):
        assert later <= earlier
    assert ys[-1] <= 0.01 * ys[0]
