import json
import subprocess
import sys
from pathlib import Path

import pytest

from lbelab.cli import main
from lbelab.config import ConfigError, parse_config

PHYSICS = {"test_mass": 1.0, "gas_mass": 0.1, "beta": 1.0, "density": 1.0, "hbar": 1.0}
CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return path


def _run(tmp_path, cfg, *extra, name="cfg.json"):
    cfg = {"output_dir": str(tmp_path / "out"), **cfg}
    return main(["run", str(_write(tmp_path, name, cfg)), *extra])


def _summary(tmp_path, sub="out"):
    return json.loads((tmp_path / sub / "summary.json").read_text())


def test_coefficients_summary(tmp_path):
    assert _run(tmp_path, {"experiment": "coefficients", "physics": PHYSICS}) == 0
    s = _summary(tmp_path)
    assert s["eta"] == pytest.approx(5.872e-2, rel=1e-3)
    assert s["d_xx"] == pytest.approx(3.670e-3, rel=1e-3)
    assert s["passed"] is True
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["config"]["physics"] == PHYSICS
    assert "version" in manifest and manifest["seed"] == 0
    assert (tmp_path / "out" / "results.csv").read_text().startswith("quantity,value")


def test_missing_beta_names_field(tmp_path, capsys):
    physics = {k: v for k, v in PHYSICS.items() if k != "beta"}
    assert _run(tmp_path, {"experiment": "coefficients", "physics": physics}) == 2
    err = capsys.readouterr().err
    assert "physics.beta" in err


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = {"experiment": "coefficients", "physics": {**PHYSICS, "temperature": 1.0}}
    assert _run(tmp_path, cfg) == 2
    assert "temperature" in capsys.readouterr().err


def test_unknown_experiment_rejected(tmp_path, capsys):
    assert _run(tmp_path, {"experiment": "lattice-qcd", "physics": PHYSICS}) == 2
    assert "unknown tag" in capsys.readouterr().err


def test_json_syntax_error_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "experiment": "coefficients",\n  "physics": {,}\n}\n')
    assert main(["run", str(path)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_block_error_names_nested_field():
    with pytest.raises(ConfigError, match=r"numerics\.grid\.n_x"):
        parse_config(json.dumps({"experiment": "kramers", "physics": PHYSICS, "numerics": {"grid": {"n_x": 2}}}))


def test_mc_relax_bitwise_reproducible(tmp_path):
    cfg = {"experiment": "mc-relax", "physics": PHYSICS, "seed": 3,
           "numerics": {"n_traj": 300, "t_end": 20.0, "dt_record": 1.0, "rate_rtol": 1.0, "block_size": 64}}
    _run(tmp_path, cfg)
    first = (tmp_path / "out" / "results.csv").read_bytes()
    _run(tmp_path, cfg)
    assert (tmp_path / "out" / "results.csv").read_bytes() == first
    _run(tmp_path, cfg, "--threads", "3")
    assert (tmp_path / "out" / "results.csv").read_bytes() == first
    _run(tmp_path, cfg, "--seed", "4")
    assert (tmp_path / "out" / "results.csv").read_bytes() != first
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["seed"] == 4


def test_out_flag_overrides_directory(tmp_path):
    main(["run", str(_write(tmp_path, "c.json", {"experiment": "coefficients", "physics": PHYSICS})),
          "--out", str(tmp_path / "elsewhere")])
    assert (tmp_path / "elsewhere" / "summary.json").is_file()


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = {"experiment": "kramers", "physics": PHYSICS,
           "numerics": {"dt": 10.0, "grid": {"n_x": 8, "n_p": 16}}}
    assert _run(tmp_path, cfg) == 3
    assert "StabilityError" in capsys.readouterr().err


def test_nalbe_requires_quantum(tmp_path):
    cfg = {"experiment": "nalbe-grid", "physics": {**PHYSICS, "hbar": 0.0}, "numerics": {"n_p": 8}}
    assert _run(tmp_path, cfg) == 3


def test_failed_check_exit_code(tmp_path):
    cfg = {"experiment": "gaussian-lindblad", "physics": PHYSICS,
           "numerics": {"initial": {"spp": 4.0}, "position_diffusion": False, "t_end": 10.0}}
    assert _run(tmp_path, cfg) == 1
    s = _summary(tmp_path)
    assert s["checks"]["uncertainty_certificate"]["passed"] is False
    assert s["first_violation_t"] < 1.0 / s["eta"]


SMALL_RUNS = {
    "kramers": {"numerics": {"grid": {"x_min": -5, "x_max": 5, "n_x": 16, "n_p": 32}, "t_end": 2.0,
                             "maxwell_initial": True}},
    "quantum-kramers": {"numerics": {"grid": {"x_min": -30, "x_max": 30, "n_x": 64, "n_p": 32}, "t_end": 2.0}},
    "smoluchowski": {"numerics": {"eta": 2.0, "t_end": 2.0, "grid": {"x_min": -15, "x_max": 15, "n_x": 128}}},
    "high-friction-sweep": {"numerics": {"etas": [1.0, 2.0, 4.0], "t_end": 2.0,
                                         "grid": {"x_min": -10, "x_max": 10, "n_x": 64, "n_p": 32}}},
    "gaussian-lindblad": {"numerics": {"eta": 2.0, "t_end": 20.0}},
    "nalbe-grid": {"numerics": {"n_p": 8, "p_max": 3.0, "initial": "superposition", "pair": [3, 4],
                                "t_end": 10.0, "record_every": 1}},
    "wigner-spectral": {"numerics": {"n_x": 8, "n_p": 12, "t_end": 2.0}},
}


@pytest.mark.parametrize("experiment", sorted(SMALL_RUNS))
def test_every_experiment_runs(tmp_path, experiment):
    cfg = {"experiment": experiment, "physics": PHYSICS, **SMALL_RUNS[experiment]}
    assert _run(tmp_path, cfg) == 0
    s = _summary(tmp_path)
    assert s["experiment"] == experiment and s["passed"] is True
    header = (tmp_path / "out" / "results.csv").read_text().splitlines()[0]
    assert header


def _three_runs(tmp_path, hbar):
    physics = {**PHYSICS, "hbar": hbar}
    runs = {
        "quantum_kramers": {"experiment": "quantum-kramers", "numerics": {
            "eta": 2.0, "t_end": 5.0, "record_every": 10,
            "grid": {"x_min": -20, "x_max": 20, "n_x": 128, "n_p": 64}}},
        "smoluchowski": {"experiment": "smoluchowski", "numerics": {"eta": 2.0, "t_end": 5.0}},
        "gaussian_lindblad": {"experiment": "gaussian-lindblad", "numerics": {"eta": 2.0, "t_end": 20.0,
                                                                              "initial": {"sxx": 1.0}}},
    }
    for name, cfg in runs.items():
        assert _run(tmp_path, {**cfg, "physics": physics, "output_dir": str(tmp_path / name)},
                    name=f"{name}.json") == 0
    spec = {"runs": {k: k for k in runs}, "output_dir": str(tmp_path / "report")}
    return main(["compare", str(_write(tmp_path, "report.json", spec))])


def test_compare_three_way_slope(tmp_path):
    assert _three_runs(tmp_path, 1.0) == 0
    md = (tmp_path / "report" / "report.md").read_text()
    assert "three independent routes" in md
    rows = (tmp_path / "report" / "report.csv").read_text().splitlines()
    assert rows[0] == "section,quantity,value,reference,rel_error,passed"
    assert all(r.endswith("True") for r in rows[1:])


def test_compare_classical_ratio_is_one(tmp_path):
    assert _three_runs(tmp_path, 0.0) == 0
    rows = [r.split(",") for r in (tmp_path / "report" / "report.csv").read_text().splitlines()[1:]]
    ratio = [r for r in rows if r[1] == "coefficient ratio"][0]
    assert float(ratio[2]) == 1.0


def test_compare_missing_artifacts(tmp_path, capsys):
    spec = _write(tmp_path, "report.json", {"runs": {"mc_relax": "nowhere"}})
    assert main(["compare", str(spec)]) == 2
    assert "missing artifact" in capsys.readouterr().err


def test_compare_bad_spec(tmp_path):
    assert main(["compare", str(_write(tmp_path, "r.json", {"runs": {"weather": "x"}}))]) == 2
    assert main(["compare", str(_write(tmp_path, "r2.json", {"runz": {}}))]) == 2


def test_shipped_configs_parse():
    for path in CONFIGS.glob("*.json"):
        if path.name == "report.json":
            continue
        cfg = parse_config(path.read_text())
        assert cfg.experiment


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, "c.json", {"experiment": "coefficients", "physics": PHYSICS,
                                       "output_dir": str(tmp_path / "o")})
    proc = subprocess.run([sys.executable, "-m", "lbelab", "run", str(cfg)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "[PASS] coefficients: eta_closed_form" in proc.stdout


def test_relative_paths_resolve_against_config_dir(tmp_path, monkeypatch):
    (tmp_path / "cfgs").mkdir()
    cfg = _write(tmp_path / "cfgs", "c.json", {"experiment": "coefficients", "physics": PHYSICS, "output_dir": "o"})
    monkeypatch.chdir(tmp_path)
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "cfgs" / "o" / "summary.json").is_file()
