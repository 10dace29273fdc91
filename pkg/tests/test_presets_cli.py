import json
import os

import numpy as np
import pytest

from turfsim.cli import main
from turfsim.config import parse_config
from turfsim.mesh import diagonal_nodes
from turfsim.presets import (
    PRESETS,
    _single_exit_code,
    diagonal_state_vector,
    execute_config,
    list_presets,
    run_preset,
    study_differences,
)
from turfsim.stepper import Scheme

EXPECTED_NAMES = [
    "fig1_baseline",
    "fig2_diffusion_dominated",
    "fig3_galerkin_blowup",
    "fig4_chi3",
    "fig5_chi10",
    "fig6_asymmetric",
    "fig7_complete_segregation",
    "mesh_study",
    "dt_study",
]


def micro_config(text=""):
    base = (
        "[mesh]\nrefinement = 2\n"
        "[time]\nt_end = 2\ndt = 1\n"
        "[output]\nsample_times = 0 1 2\n"
    )
    return parse_config(base + text)


def test_preset_catalogue_names():
    assert list(PRESETS) == EXPECTED_NAMES
    assert [name for name, _ in list_presets()] == EXPECTED_NAMES
    assert all(desc for _, desc in list_presets())


def test_preset_parameters_match_reference_table():
    p = PRESETS
    for name in ("fig1_baseline", "fig2_diffusion_dominated", "fig3_galerkin_blowup"):
        assert p[name].config.time.scheme is Scheme.GALERKIN
    for name in ("fig4_chi3", "fig5_chi10", "fig6_asymmetric", "fig7_complete_segregation"):
        assert p[name].config.time.scheme is Scheme.FCT

    base = p["fig1_baseline"].config
    assert base.params.d_u == base.params.d_v == 0.25
    assert base.params.chi_u == base.params.chi_v == 0.25
    assert base.time.t_end == 1000.0 and base.time.dt == 1.0 and base.time.theta == 0.5
    assert base.refinement == 5
    assert base.sample_times == (0.0, 400.0, 500.0, 600.0, 700.0, 1000.0)

    assert p["fig2_diffusion_dominated"].config.params.d_u == 3.0
    assert p["fig3_galerkin_blowup"].config.params.chi_u == 3.0
    assert p["fig3_galerkin_blowup"].expect_blowup_by == 50.0
    assert p["fig4_chi3"].config.params.chi_u == 3.0
    assert p["fig5_chi10"].config.params.chi_u == 10.0
    assert p["fig5_chi10"].config.time.dt == 1.0 / 32.0
    assert p["fig6_asymmetric"].config.params.chi_u == 2.0
    assert p["fig6_asymmetric"].config.params.chi_v == 4.0
    assert p["fig7_complete_segregation"].config.params.d_u == 0.01
    assert p["fig7_complete_segregation"].config.initial == "pure_gaussians"

    assert p["mesh_study"].study_levels == (3, 4, 5, 6, 7)
    assert p["dt_study"].study_dts == (1.0, 0.5, 0.25, 0.125, 0.0625)
    assert p["mesh_study"].is_study and p["dt_study"].is_study
    assert not p["fig4_chi3"].is_study


def test_execute_config_summary_contents():
    result, mesh, summary = execute_config(micro_config())
    assert summary["status"] == "completed"
    assert summary["final_time"] == 2.0
    assert summary["scheme"] == "galerkin"
    assert summary["refinement"] == 2 and summary["dt"] == 1.0
    assert summary["mass_conservation_ok"] is True
    assert summary["mass"]["u_rel_drift"] <= 1e-10
    assert summary["mass"]["u_final"] == pytest.approx(summary["mass"]["u_initial"], rel=1e-10)
    shares = summary["class_shares_final"]
    assert shares["u_held"] + shares["v_held"] + shares["tie"] == pytest.approx(1.0)
    assert summary["sample_times"] == [0.0, 1.0, 2.0]
    assert len(summary["fp_iterations"]) == 2
    assert summary["fp_all_converged"] is True
    assert len(summary["equilibrium"]) == 4
    assert set(summary["steady_state"]) == {"converged", "t_detect", "limit_values", "max_deviation"}
    assert summary["steady_state"]["converged"] is False  # nothing settles in two steps
    assert len(result.samples) == 3 and mesh.n_nodes == 25


def test_execute_config_optional_lyapunov_rows():
    cfg = micro_config("lyapunov = on\n")
    _, _, summary = execute_config(cfg)
    rows = summary["lyapunov"]
    assert [r["t"] for r in rows] == [0.0, 1.0, 2.0]
    assert all(r["y"] >= 0.0 for r in rows)


def test_single_exit_code_contract():
    fig3 = PRESETS["fig3_galerkin_blowup"]
    plain = PRESETS["fig1_baseline"]
    assert _single_exit_code(None, {"status": "completed", "mass_conservation_ok": True}) == 0
    assert _single_exit_code(None, {"status": "completed", "mass_conservation_ok": False}) == 1
    assert _single_exit_code(None, {"status": "diverged", "diverged_at": 35.0}) == 1
    assert _single_exit_code(fig3, {"status": "diverged", "diverged_at": 35.0}) == 0
    assert _single_exit_code(fig3, {"status": "diverged", "diverged_at": 60.0}) == 1
    assert _single_exit_code(fig3, {"status": "completed", "mass_conservation_ok": True}) == 1
    assert _single_exit_code(plain, {"status": "diverged", "diverged_at": 35.0}) == 1


def test_diagonal_state_vector_strides():
    result, mesh, _ = execute_config(micro_config())
    full = diagonal_state_vector(result, mesh, 0.0)
    assert full.shape == (4 * 5,)
    strided = diagonal_state_vector(result, mesh, 2.0, stride=2)
    assert strided.shape == (4 * 3,)
    idx = diagonal_nodes(mesh)
    np.testing.assert_array_equal(full[:5], result.initial_state.u[idx])
    with pytest.raises(KeyError, match="no sample"):
        diagonal_state_vector(result, mesh, 1.5)


def test_study_differences_align_meshes():
    fine_cfg = parse_config(
        "[mesh]\nrefinement = 3\n[time]\nt_end = 2\ndt = 1\n[output]\nsample_times = 0 2\n"
    )
    coarse = execute_config(micro_config())
    fine = execute_config(fine_cfg)
    diffs = study_differences([(coarse[0], coarse[1]), (fine[0], fine[1])], 2.0)
    assert len(diffs) == 1
    assert diffs[0] >= 0.0 and np.isfinite(diffs[0])


def test_run_preset_unknown_name():
    with pytest.raises(KeyError, match="unknown preset"):
        run_preset("fig9_wormholes")


def test_run_preset_micro_with_overrides(tmp_path):
    outdir = tmp_path / "artifacts"
    outcome = run_preset(
        "fig1_baseline",
        overrides=("time.t_end=2", "mesh.refinement=2", "output.sample_times=0 1 2"),
        output_dir=str(outdir),
    )
    assert outcome.exit_code == 0
    assert outcome.summary["preset"] == "fig1_baseline"
    assert outcome.summary["status"] == "completed"

    files = sorted(os.listdir(outdir))
    assert "run.cfg" in files and "summary.json" in files
    for tag in ("t0", "t1", "t2"):
        assert f"fields_{tag}.vtk" in files
        assert f"diagonal_{tag}.csv" in files

    cfg = parse_config((outdir / "run.cfg").read_text())
    assert cfg.refinement == 2 and cfg.time.t_end == 2.0

    with open(outdir / "summary.json") as fh:
        on_disk = json.load(fh)
    assert on_disk["status"] == "completed"
    assert on_disk["preset"] == "fig1_baseline"


def test_cli_list_presets(capsys):
    assert main(["list-presets"]) == 0
    out = capsys.readouterr().out
    for name in EXPECTED_NAMES:
        assert name in out


def test_cli_unknown_preset(capsys):
    assert main(["preset", "fig9_wormholes"]) == 2
    err = capsys.readouterr().err
    assert "unknown preset" in err and "fig1_baseline" in err


def test_cli_preset_with_flag_overrides(tmp_path, capsys):
    outdir = tmp_path / "out"
    code = main(
        [
            "preset",
            "fig1_baseline",
            "--override", "time.t_end=2",
            "--override", "output.sample_times=0 2",
            "--refinement", "2",
            "--dt", "0.5",
            "--scheme", "fct",
            "--output-dir", str(outdir),
            "--quiet",
        ]
    )
    assert code == 0
    assert capsys.readouterr().out == ""
    cfg = parse_config((outdir / "run.cfg").read_text())
    assert cfg.time.dt == 0.5 and cfg.time.scheme is Scheme.FCT and cfg.refinement == 2


def test_cli_run_config_file(tmp_path, capsys):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text("[mesh]\nrefinement = 2\n[time]\nt_end = 2\ndt = 1\n")
    outdir = tmp_path / "out"
    code = main(["run", str(cfg_path), "--output-dir", str(outdir)])
    assert code == 0
    out = capsys.readouterr().out
    assert "status=completed" in out
    assert (outdir / "summary.json").exists()
    assert (outdir / "run.cfg").exists()


def test_cli_run_rejects_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[time]\ntheta = 7\n")
    assert main(["run", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_run_missing_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "absent.cfg")]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_requires_a_command():
    with pytest.raises(SystemExit):
        main([])
