"""Named experiments reproducing the reference territory-formation runs,
plus the mesh- and step-refinement studies.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from . import diagnostics, output
from .config import RunConfig, apply_override, render_config
from .fem import assemble_mass, lump_mass
from .mesh import Rectangle, StructuredQuadMesh, build_mesh, diagonal_nodes
from .model import ModelParams, homogeneous_equilibrium
from .stepper import RunResult, Scheme, TimeConfig, run

MASS_DRIFT_LIMIT = 1e-6


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    description: str
    config: RunConfig
    expect_blowup_by: float | None = None
    study_levels: tuple = ()
    study_dts: tuple = ()

    @property
    def is_study(self) -> bool:
        return bool(self.study_levels or self.study_dts)


def _cfg(
    d: float = 0.25,
    chi_u: float = 0.25,
    chi_v: float | None = None,
    scheme: Scheme = Scheme.FCT,
    t_end: float = 1000.0,
    dt: float = 1.0,
    samples: tuple = (),
    initial: str = "offset_gaussians",
    refinement: int = 5,
) -> RunConfig:
    return RunConfig(
        domain=Rectangle(),
        refinement=refinement,
        params=ModelParams(d_u=d, d_v=d, chi_u=chi_u, chi_v=chi_v if chi_v is not None else chi_u),
        time=TimeConfig(t_end=t_end, dt=dt, scheme=scheme),
        initial=initial,
        sample_times=samples,
    )


_STUDY_BASE = _cfg(chi_u=3.0, t_end=500.0, samples=(0.0, 1.0, 50.0, 100.0, 500.0))

PRESETS: dict[str, ExperimentPreset] = {
    p.name: p
    for p in (
        ExperimentPreset(
            "fig1_baseline",
            "Balanced diffusion and avoidance (0.25 each), Galerkin; decays to the homogeneous state.",
            _cfg(scheme=Scheme.GALERKIN, samples=(0.0, 400.0, 500.0, 600.0, 700.0, 1000.0)),
        ),
        ExperimentPreset(
            "fig2_diffusion_dominated",
            "Strong diffusion (3.0) against weak avoidance; rapid spread to the homogeneous state.",
            _cfg(d=3.0, scheme=Scheme.GALERKIN, samples=(0.0, 50.0, 75.0, 100.0, 200.0, 1000.0)),
        ),
        ExperimentPreset(
            "fig3_galerkin_blowup",
            "Avoidance 3.0 without stabilization; the plain Galerkin scheme goes negative and blows up.",
            _cfg(chi_u=3.0, scheme=Scheme.GALERKIN, samples=(0.0, 5.0, 35.0)),
            expect_blowup_by=50.0,
        ),
        ExperimentPreset(
            "fig4_chi3",
            "Avoidance 3.0 with flux correction; gangs segregate into interleaved territories.",
            _cfg(chi_u=3.0, samples=(0.0, 5.0, 50.0, 100.0, 500.0, 1000.0)),
        ),
        ExperimentPreset(
            "fig5_chi10",
            "Avoidance 10.0 with flux correction; tighter clusters and sharper "
            "interfaces.  Runs at dt = 1/32: at this avoidance strength the "
            "order-preservation bound on the step is about 0.057, so the "
            "nominal dt = 1 would break the positivity guarantee.",
            _cfg(chi_u=10.0, dt=1.0 / 32.0, samples=(0.0, 5.0, 50.0, 100.0, 500.0, 1000.0)),
        ),
        ExperimentPreset(
            "fig6_asymmetric",
            "Asymmetric avoidance (2.0 vs 4.0); the more avoidant gang ends up concentrated.",
            _cfg(chi_u=2.0, chi_v=4.0, samples=(0.0, 50.0, 100.0, 200.0, 400.0, 1000.0)),
        ),
        ExperimentPreset(
            "fig7_complete_segregation",
            "Separated pure Gaussians, weak diffusion 0.01, avoidance 3.0; totally disjoint territories.",
            _cfg(
                d=0.01,
                chi_u=3.0,
                initial="pure_gaussians",
                samples=(0.0, 50.0, 75.0, 200.0, 500.0, 1000.0),
            ),
        ),
        ExperimentPreset(
            "mesh_study",
            "Avoidance 3.0 run repeated over refinement levels 3..7 to t = 500.",
            _STUDY_BASE,
            study_levels=(3, 4, 5, 6, 7),
        ),
        ExperimentPreset(
            "dt_study",
            "Avoidance 3.0 run repeated over halved time steps 1.0 .. 0.0625 to t = 500.",
            _STUDY_BASE,
            study_dts=(1.0, 0.5, 0.25, 0.125, 0.0625),
        ),
    )
}


def list_presets() -> list[tuple[str, str]]:
    return [(p.name, p.description) for p in PRESETS.values()]


@dataclass
class PresetOutcome:
    name: str
    exit_code: int
    summary: dict
    result: RunResult | None
    mesh: StructuredQuadMesh | None
    sub_outcomes: list = None  # type: ignore[assignment]


def execute_config(cfg: RunConfig) -> tuple[RunResult, StructuredQuadMesh, dict]:
    """Run one config and build its machine-readable summary."""
    mesh = build_mesh(cfg.domain, cfg.refinement)
    ic = cfg.initial_condition()
    equilibrium = homogeneous_equilibrium(cfg.params, ic, cfg.domain)

    wanted = set(cfg.sample_times) if cfg.sample_times else {0.0, cfg.time.t_end}
    detect_grid = np.arange(0.0, cfg.time.t_end + 0.5 * cfg.detect_interval, cfg.detect_interval)
    schedule = sorted(wanted | set(float(t) for t in detect_grid))

    result = run(ic, cfg.params, mesh, cfg.time, sample_times=schedule)

    lumped = lump_mass(assemble_mass(mesh))
    mu0, mv0 = diagnostics.total_mass(result.initial_state, lumped)
    summary: dict = {
        "status": result.status,
        "final_time": result.final_state.t,
        "scheme": cfg.time.scheme.value,
        "refinement": cfg.refinement,
        "dt": cfg.time.dt,
        "mass": {"u_initial": mu0, "v_initial": mv0},
        "fp_iterations": [r.fp_iterations for r in result.reports],
        "fp_all_converged": all(r.fp_converged for r in result.reports),
        "timestep_condition_all_ok": all(r.timestep_condition_ok for r in result.reports)
        if result.reports
        else True,
        "min_over_run": {name: result.min_over_run(name) for name in ("u", "v", "w", "z")},
        "sample_times": [t for t, _ in result.samples],
    }
    masses = summary["mass"]

    if result.status == "diverged":
        summary["diverged_at"] = result.diverged_at
        summary["divergence_reason"] = result.divergence_reason
        summary["mass_conservation_ok"] = None
    else:
        mu1, mv1 = diagnostics.total_mass(result.final_state, lumped)
        masses.update(
            {
                "u_final": mu1,
                "v_final": mv1,
                "u_rel_drift": abs(mu1 - mu0) / abs(mu0) if mu0 else 0.0,
                "v_rel_drift": abs(mv1 - mv0) / abs(mv0) if mv0 else 0.0,
            }
        )
        summary["mass_conservation_ok"] = bool(
            masses["u_rel_drift"] <= MASS_DRIFT_LIMIT and masses["v_rel_drift"] <= MASS_DRIFT_LIMIT
        )
        summary["overlap_final"] = diagnostics.overlap_measure(result.final_state, lumped)
        grid = diagnostics.classify(result.final_state)
        summary["class_shares_final"] = {
            "u_held": grid.share(diagnostics.U_SIDE),
            "v_held": grid.share(diagnostics.V_SIDE),
            "tie": grid.share(diagnostics.TIE),
        }
        steady = diagnostics.detect_steady_state(result.samples, equilibrium)
        summary["steady_state"] = {
            "converged": steady.converged,
            "t_detect": steady.t_detect,
            "limit_values": list(steady.limit_values),
            "max_deviation": steady.max_deviation,
        }
        if cfg.outputs.lyapunov:
            rows = []
            for t, s in result.samples:
                sample = diagnostics.lyapunov(s, mesh, cfg.params, equilibrium)
                rows.append({"t": t, "y": sample.y})
            summary["lyapunov"] = rows
    summary["equilibrium"] = list(equilibrium)
    return result, mesh, summary


def _emit_run_files(cfg: RunConfig, result: RunResult, mesh: StructuredQuadMesh, outdir: str) -> None:
    output.ensure_dir(outdir)
    with open(os.path.join(outdir, "run.cfg"), "w") as fh:
        fh.write(render_config(cfg))
    wanted = set(cfg.sample_times) if cfg.sample_times else {0.0, cfg.time.t_end}
    for t, state in result.samples:
        if not any(abs(t - want) <= 1e-9 for want in wanted):
            continue
        tag = output.time_tag(t)
        if cfg.outputs.fields:
            output.write_fields_vtk(os.path.join(outdir, f"fields_t{tag}.vtk"), mesh, state)
        if cfg.outputs.diagonal:
            snap = diagnostics.diagonal_snapshot(state, mesh)
            output.write_diagonal_csv(os.path.join(outdir, f"diagonal_t{tag}.csv"), snap)


def _single_exit_code(preset: ExperimentPreset | None, summary: dict) -> int:
    if summary["status"] == "diverged":
        if preset is not None and preset.expect_blowup_by is not None:
            ok = summary["diverged_at"] is not None and summary["diverged_at"] <= preset.expect_blowup_by
            return 0 if ok else 1
        return 1
    if preset is not None and preset.expect_blowup_by is not None:
        return 1  # expected divergence never happened
    if summary.get("mass_conservation_ok") is False:
        return 1
    return 0


def diagonal_state_vector(result: RunResult, mesh: StructuredQuadMesh, t: float, stride: int = 1) -> np.ndarray:
    """Concatenated (u, v, w, z) samples on every stride-th diagonal node."""
    for ts, state in result.samples:
        if abs(ts - t) <= 1e-9:
            idx = diagonal_nodes(mesh)[::stride]
            return np.concatenate([state.u[idx], state.v[idx], state.w[idx], state.z[idx]])
    raise KeyError(f"no sample at t = {t}")


def study_differences(outcomes: list[tuple[RunResult, StructuredQuadMesh]], t: float) -> list[float]:
    """l2 differences between consecutive study runs on shared diagonal nodes.

    All runs are restricted to the diagonal nodes of the coarsest mesh in
    the study so every pairwise difference uses one common node set.
    """
    coarsest = min(m.n_per_side for _, m in outcomes)
    vecs = []
    for result, mesh in outcomes:
        stride = (mesh.n_per_side - 1) // (coarsest - 1)
        vecs.append(diagonal_state_vector(result, mesh, t, stride=stride))
    return [float(np.linalg.norm(b - a)) for a, b in zip(vecs, vecs[1:])]


def _run_study(preset: ExperimentPreset, outdir: str | None, quiet: bool) -> PresetOutcome:
    sub_outcomes = []
    pairs = []
    exit_code = 0
    variants: list[tuple[str, RunConfig]] = []
    for level in preset.study_levels:
        variants.append((f"level{level}", replace(preset.config, refinement=level)))
    for dt in preset.study_dts:
        variants.append(
            (f"dt{output.time_tag(dt)}", replace(preset.config, time=replace(preset.config.time, dt=dt)))
        )
    for tag, cfg in variants:
        result, mesh, summary = execute_config(cfg)
        summary["variant"] = tag
        code = _single_exit_code(None, summary)
        exit_code = max(exit_code, code)
        if outdir is not None:
            sub = os.path.join(outdir, tag)
            _emit_run_files(cfg, result, mesh, sub)
            if cfg.outputs.summary:
                output.write_summary(os.path.join(sub, "summary.json"), output.sanitize(summary))
        sub_outcomes.append(PresetOutcome(tag, code, summary, result, mesh))
        pairs.append((result, mesh))
        if not quiet:
            print(f"  {preset.name}/{tag}: status={summary['status']}")
    t_end = preset.config.time.t_end
    diffs = study_differences(pairs, t_end) if all(p[0].status == "completed" for p in pairs) else []
    top = {
        "study": preset.name,
        "variants": [s.summary["variant"] for s in sub_outcomes],
        "diagonal_l2_differences_at_t_end": diffs,
        "differences_shrink": bool(all(b < a for a, b in zip(diffs, diffs[1:]))) if diffs else None,
    }
    if outdir is not None:
        output.ensure_dir(outdir)
        output.write_summary(os.path.join(outdir, "study.json"), output.sanitize(top))
    return PresetOutcome(preset.name, exit_code, top, None, None, sub_outcomes)


def run_preset(
    name: str,
    overrides: tuple = (),
    output_dir: str | None = None,
    quiet: bool = True,
) -> PresetOutcome:
    """Execute a named preset, optionally writing its artifact directory.

    Returns a PresetOutcome whose exit_code follows the CLI contract: zero
    for a clean run (including the expected early blow-up of the
    unstabilized avoidance-3 run), nonzero for unexpected divergence or a
    failed mass self-check.
    """
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; see list_presets()")
    preset = PRESETS[name]
    cfg = preset.config
    for spec in overrides:
        cfg = apply_override(cfg, spec)

    if preset.is_study:
        return _run_study(replace(preset, config=cfg), output_dir, quiet)

    result, mesh, summary = execute_config(cfg)
    summary["preset"] = name
    if preset.expect_blowup_by is not None and result.status == "diverged":
        summary["blowup_detected_at"] = result.diverged_at
    exit_code = _single_exit_code(preset, summary)
    if output_dir is not None:
        _emit_run_files(cfg, result, mesh, output_dir)
        if cfg.outputs.summary:
            output.write_summary(os.path.join(output_dir, "summary.json"), output.sanitize(summary))
    if not quiet:
        print(f"{name}: status={summary['status']} exit={exit_code}")
    return PresetOutcome(name, exit_code, summary, result, mesh)
