"""Command-line front end.

    lbelab run <config.json> [--threads N] [--seed S] [--out DIR]
    lbelab compare <report.json> [--out DIR]

``run`` writes results.csv, summary.json and manifest.json into the output
directory.  Relative output and run paths resolve against the directory of
the config or report file.  Exit status: 0 when every built-in check passes, 1 when a check
fails, 2 for configuration errors and 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, load_config
from .fokker_planck import (PhaseSpaceField, PhaseSpaceGrid, gaussian_field, gaussian_position_field,
                            high_friction_compare, kramers_solve, maxwell_profile, quantum_kramers_solve,
                            smoluchowski_solve, smoluchowski_stable_dt, stable_dt)
from .montecarlo import InitialCondition, evolve_ensemble, fit_relaxation_rate
from .physics import (PhysicalParams, correction_factor, einstein_coefficient, friction_coefficient,
                      friction_coefficient_closed_form, position_diffusion_coefficient,
                      smoluchowski_coefficient)
from .quantum import (GaussianState, MomentumGridDensityMatrix, MomentumLattice, WignerSpectralField,
                      gaussian_propagate, lattice_rates, nonabelian_grid_evolve, wigner_evolve)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


@dataclass
class Outcome:
    header: list
    rows: list
    summary: dict
    checks: dict = field(default_factory=dict)  # name -> {"passed": bool, ...}

    def check(self, name: str, passed: bool, **details) -> None:
        self.checks[name] = {"passed": bool(passed), **details}


def _friction(cfg, override=None) -> float:
    if override is not None:
        return float(override)
    return friction_coefficient(cfg.params, cfg.xs)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b) if b != 0 else (0.0 if a == 0 else math.inf)


def _late_slope(t, y, fraction: float) -> float:
    t = np.asarray(t)
    y = np.asarray(y)
    keep = t >= t[-1] - fraction * (t[-1] - t[0])
    if keep.sum() < 2:
        keep[-2:] = True
    return float(np.polyfit(t[keep], y[keep], 1)[0])


# ---------------------------------------------------------------------------
# experiments


def run_coefficients(cfg, threads: int) -> Outcome:
    params, xs = cfg.params, cfg.xs
    eta = friction_coefficient(params, xs, rtol=cfg.numerics.rtol)
    d_xx = position_diffusion_coefficient(eta, params)
    d_cl = einstein_coefficient(eta, params) if eta > 0 else math.inf
    d_q = smoluchowski_coefficient(eta, params) if eta > 0 else math.inf
    summary = {"eta": eta, "d_xx": d_xx, "einstein_coefficient": d_cl, "smoluchowski_coefficient": d_q,
               "coefficient_ratio": d_q / d_cl if eta > 0 else 1.0,
               "correction_factor": correction_factor(eta, params)}
    out = Outcome(["quantity", "value"], [[k, v] for k, v in summary.items()], summary)
    if xs.kind == "constant":
        closed = friction_coefficient_closed_form(params, xs.sigma0)
        summary["eta_closed_form"] = closed
        out.rows.append(["eta_closed_form", closed])
        out.check("eta_closed_form", _rel(eta, closed) < 1e-8 if closed else eta == 0, rel_error=_rel(eta, closed))
    out.check("ratio_formula", abs(summary["coefficient_ratio"] - summary["correction_factor"]) <= 1e-12,
              difference=abs(summary["coefficient_ratio"] - summary["correction_factor"]))
    return out


def run_mc_relax(cfg, threads: int) -> Outcome:
    params, xs, num = cfg.params, cfg.xs, cfg.numerics
    eta = friction_coefficient(params, xs)
    t_end = num.t_end if num.t_end is not None else 2.5 / eta
    dt_record = num.dt_record if num.dt_record is not None else t_end / 50.0
    init = InitialCondition(num.initial.kind, tuple(num.initial.p0), tuple(num.initial.x0))
    stats = evolve_ensemble(num.n_traj, t_end, dt_record, init, params, xs, seed=cfg.seed, form=num.form,
                            block_size=num.block_size, threads=threads)
    header = ["t", "mean_px", "mean_py", "mean_pz", "mean_p2", "mean_x2", "se_p2", "n_samples"]
    rows = [[stats.t[k], *stats.mean_p[k], stats.mean_p2[k], stats.mean_x2[k], stats.se_p2[k], stats.n_samples]
            for k in range(len(stats.t))]
    target = 3.0 * params.thermal_momentum_sq
    summary = {"eta": eta, "t_end": t_end, "dt_record": dt_record, "n_traj": num.n_traj,
               "collisions": stats.collisions, "acceptance": stats.acceptance,
               "final_mean_p2": float(stats.mean_p2[-1]), "final_se_p2": float(stats.se_p2[-1]),
               "equipartition_target": target}
    out = Outcome(header, rows, summary)
    if num.initial.p0[2] != 0 and num.initial.kind != "maxwell":
        rate, err, amp = fit_relaxation_rate(stats, 2, num.fit_t_max)
        summary.update(fitted_rate=rate, fitted_rate_stderr=err, fitted_amplitude=amp,
                       rate_rel_error=_rel(rate, eta))
        out.check("rate_vs_eta", _rel(rate, eta) < num.rate_rtol, rel_error=_rel(rate, eta), rtol=num.rate_rtol)
    dev = abs(stats.mean_p2[-1] - target)
    out.check("equipartition", dev <= num.equipartition_se * stats.se_p2[-1],
              deviation=float(dev), se=float(stats.se_p2[-1]))
    return out


def _phase_grid(block) -> PhaseSpaceGrid:
    return PhaseSpaceGrid(block.x_min, block.x_max, block.n_x, block.p_max, block.n_p)


def _kramers_initial(num, grid, params) -> PhaseSpaceField:
    if num.maxwell_initial:
        f = np.outer(np.ones(grid.n_x), maxwell_profile(grid, params)) / (grid.x_max - grid.x_min)
        return PhaseSpaceField(grid, f)
    ini = num.initial
    return gaussian_field(grid, params, ini.x0, ini.var_x, ini.p0, ini.var_p)


def _moment_rows(series):
    cols = series.COLUMNS
    return list(cols), [list(r) for r in zip(*(getattr(series, k) for k in cols))]


def run_kramers(cfg, threads: int) -> Outcome:
    params, num = cfg.params, cfg.numerics
    eta = _friction(cfg, num.eta)
    grid = _phase_grid(num.grid)
    f0 = _kramers_initial(num, grid, params)
    dt = num.dt if num.dt is not None else stable_dt(grid, eta, params)
    res = kramers_solve(f0, eta, num.t_end, dt, params, num.transport, num.record_every)
    header, rows = _moment_rows(res.moments)
    summary = {"eta": eta, "dt": res.dt, "steps": res.steps, "transport": num.transport,
               "final": {k: float(getattr(res.moments, k)[-1]) for k in res.moments.COLUMNS}}
    out = Outcome(header, rows, summary)
    norm_drift = float(np.abs(res.moments.array("norm") - res.moments.norm[0]).max())
    out.check("norm_conserved", norm_drift < 1e-10, drift=norm_drift)
    if num.maxwell_initial:
        err = float(np.abs(res.field.values - f0.values).max())
        summary["stationarity_max_error"] = err
        out.check("maxwell_stationary", err < num.stationarity_tol, max_error=err)
    return out


def run_quantum_kramers(cfg, threads: int) -> Outcome:
    params, num = cfg.params, cfg.numerics
    eta = _friction(cfg, num.eta)
    grid = _phase_grid(num.grid)
    f0 = _kramers_initial(num, grid, params)
    d_xx = position_diffusion_coefficient(eta, params)
    dt = num.dt if num.dt is not None else stable_dt(grid, eta, params, d_xx)
    res = quantum_kramers_solve(f0, eta, num.t_end, dt, params, num.transport, num.record_every)
    header, rows = _moment_rows(res.moments)
    t = res.moments.array("t")
    var_q = res.moments.array("var_x")
    expected = 2.0 * (einstein_coefficient(eta, params) + d_xx)
    late = _late_slope(t, var_q, num.late_fraction)
    summary = {"eta": eta, "d_xx": d_xx, "dt": res.dt, "steps": res.steps, "transport": num.transport,
               "late_msd_slope": late, "expected_msd_slope": expected, "late_slope_rel_error": _rel(late, expected)}
    out = Outcome(header, rows, summary)
    norm_drift = float(np.abs(res.moments.array("norm") - res.moments.norm[0]).max())
    out.check("norm_conserved", norm_drift < 1e-10, drift=norm_drift)
    if num.compare_classical:
        cl = kramers_solve(f0, eta, num.t_end, res.dt, params.replace(hbar=0.0), num.transport, num.record_every)
        var_c = cl.moments.array("var_x")
        header.append("var_x_classical")
        for row, v in zip(rows, var_c):
            row.append(v)
        excess = float(np.polyfit(t, var_q - var_c, 1)[0])
        summary.update(excess_msd_slope=excess, expected_excess=2.0 * d_xx)
        if d_xx > 0:
            out.check("excess_slope", _rel(excess, 2.0 * d_xx) < num.excess_rtol,
                      rel_error=_rel(excess, 2.0 * d_xx))
        else:
            out.check("classical_limit_identical", bool(np.array_equal(var_q, var_c)))
    if eta * num.t_end >= 10.0:
        out.check("late_msd_slope", _rel(late, expected) < num.late_slope_rtol, rel_error=_rel(late, expected))
    return out


def run_smoluchowski(cfg, threads: int) -> Outcome:
    params, num = cfg.params, cfg.numerics
    eta = _friction(cfg, num.eta)
    g = num.grid
    sigma0 = gaussian_position_field(g.x_min, g.x_max, g.n_x, num.x0, num.var_x)
    coef_q = smoluchowski_coefficient(eta, params)
    coef_c = einstein_coefficient(eta, params)
    dt = num.dt if num.dt is not None else smoluchowski_stable_dt(sigma0.dx, coef_q)
    t_end = num.t_end
    if t_end is None:
        # stop when the standard deviation reaches a tenth of the period, before wrap-around matters
        t_end = max(((g.x_max - g.x_min) / 10.0) ** 2 - num.var_x, num.var_x) / (2.0 * coef_q)
    quantum = smoluchowski_solve(sigma0, eta, t_end, dt, params)
    classical = smoluchowski_solve(sigma0, eta, t_end, quantum.dt, params.replace(hbar=0.0))
    growth_q = float(np.polyfit(quantum.t, quantum.variance, 1)[0])
    growth_c = float(np.polyfit(classical.t, classical.variance, 1)[0])
    ratio = coef_q / coef_c
    factor = correction_factor(eta, params)
    summary = {"eta": eta, "coefficient": coef_q, "classical_coefficient": coef_c,
               "measured_growth": growth_q, "expected_growth": 2.0 * coef_q,
               "measured_growth_classical": growth_c, "coefficient_ratio": ratio, "correction_factor": factor,
               "measured_growth_ratio": growth_q / growth_c, "dt": quantum.dt, "steps": quantum.steps,
               "t_end": t_end, "final_variance": float(quantum.variance[-1]), "domain_length": g.x_max - g.x_min}
    header = ["t", "variance", "variance_classical", "norm"]
    rows = [list(r) for r in zip(quantum.t, quantum.variance, classical.variance, quantum.norm)]
    out = Outcome(header, rows, summary)
    out.check("variance_growth", _rel(growth_q, 2.0 * coef_q) < num.growth_rtol, rel_error=_rel(growth_q, 2.0 * coef_q))
    out.check("ratio_formula", abs(ratio - factor) <= 1e-12, difference=abs(ratio - factor))
    out.check("measured_ratio", _rel(growth_q / growth_c, factor) < num.ratio_rtol,
              rel_error=_rel(growth_q / growth_c, factor))
    return out


def run_high_friction(cfg, threads: int) -> Outcome:
    params, num = cfg.params, cfg.numerics
    grid = _phase_grid(num.grid)
    f0 = gaussian_field(grid, params, 0.0, num.var_x)
    rep = high_friction_compare(f0, num.etas, num.t_end, params, num.transport, num.dt_fraction)
    rows = [[e, 1.0 / e, d] for e, d in zip(rep.etas, rep.deviations)]
    summary = {"etas": rep.etas.tolist(), "deviations": rep.deviations.tolist(), "loglog_slope": rep.slope,
               "monotone": rep.monotone, "t_end": rep.t_end}
    out = Outcome(["eta", "inv_eta", "l1_deviation"], rows, summary)
    out.check("monotone_decrease", rep.monotone)
    return out


def run_gaussian_lindblad(cfg, threads: int) -> Outcome:
    params, num = cfg.params, cfg.numerics
    eta = _friction(cfg, num.eta)
    ini = num.initial
    sxx = ini.sxx
    if sxx is None:
        sxx = params.hbar**2 / (4.0 * ini.spp) if params.hbar > 0 else 1.0
    s0 = GaussianState(ini.mean_x, ini.mean_p, sxx, ini.sxp, ini.spp)
    traj = gaussian_propagate(s0, eta, num.t_end, params, num.n_record, num.position_diffusion, check=False)
    d_xx = traj.d_xx
    expected = 2.0 * (einstein_coefficient(eta, params) + position_diffusion_coefficient(eta, params))
    slope = float(traj.msd_slope(params)[-1])
    violation = traj.first_violation()
    header = ["t", "mean_x", "mean_p", "sxx", "sxp", "spp", "uncertainty_det"]
    rows = [[t, *s, d] for t, s, d in zip(traj.t, traj.states, traj.uncertainty_det)]
    summary = {"eta": eta, "d_xx": d_xx, "position_diffusion": num.position_diffusion,
               "late_msd_slope": slope, "expected_msd_slope": expected,
               "min_uncertainty_margin": float((traj.uncertainty_det - params.hbar**2 / 4).min()),
               "first_violation_t": violation, "final_spp": float(traj.states[-1, 4])}
    out = Outcome(header, rows, summary)
    out.check("uncertainty_certificate", violation is None, first_violation_t=violation)
    if eta * num.t_end >= 20.0 and num.position_diffusion:
        out.check("late_msd_slope", _rel(slope, expected) < num.slope_rtol, rel_error=_rel(slope, expected))
    return out


def run_nalbe(cfg, threads: int) -> Outcome:
    params, xs, num = cfg.params, cfg.xs, cfg.numerics
    params.require_quantum("nalbe-grid")
    eta = friction_coefficient(params, xs)
    lat = MomentumLattice.spanning(num.n_p, num.p_max)
    a, b = num.pair
    if num.initial == "thermal":
        rho0 = MomentumGridDensityMatrix.thermal(lat, params)
    elif num.initial == "wavepacket":
        rho0 = MomentumGridDensityMatrix.wavepacket(lat, num.p0, num.width, hbar=params.hbar)
    else:
        if not (0 <= a < lat.n and 0 <= b < lat.n and a != b):
            raise ConfigError(f"numerics.pair: indices must be distinct and inside 0..{lat.n - 1}")
        psi = np.zeros(lat.n, dtype=complex)
        psi[[a, b]] = 1.0
        rho0 = MomentumGridDensityMatrix.pure(lat, psi)
    rho0.check()
    _, rates = lattice_rates(lat, params, xs, num.form, num.boundary)
    r_max = float(rates.sum(axis=0).max())
    t_end = num.t_end if num.t_end is not None else 20.0 / eta
    dt = num.dt if num.dt is not None else 0.5 / r_max
    track = [(a, b)] if num.initial == "superposition" else []
    ev = nonabelian_grid_evolve(rho0, t_end, dt, params, xs, num.form, num.boundary, num.record_every, track)
    d = ev.diagnostics
    header = list(d.COLUMNS)
    rows = [list(r) for r in zip(*(getattr(d, k) for k in d.COLUMNS))]
    trace_drift = float(np.abs(np.asarray(d.trace) - d.trace[0]).max())
    summary = {"eta": eta, "t_end": t_end, "dt": ev.dt, "steps": ev.steps, "boundary": num.boundary,
               "max_jump_rate": r_max, "trace_drift": trace_drift, "leaked": ev.leaked,
               "min_eig": float(min(d.min_eig)), "max_hermiticity_error": float(max(d.hermiticity)),
               "final_l1_to_maxwell": float(d.diag_l1_dist_to_maxwell[-1])}
    out = Outcome(header, rows, summary)
    if num.boundary == "conserving":
        out.check("trace", trace_drift <= 1e-8 * max(1.0, t_end), drift=trace_drift)
    else:
        out.check("leakage", ev.leaked < 1e-6, leaked=ev.leaked)
    out.check("hermiticity", summary["max_hermiticity_error"] <= 1e-12)
    out.check("positivity", summary["min_eig"] >= -1e-6)
    if eta * t_end >= 20.0 - 1e-9:
        out.check("maxwell_relaxation", summary["final_l1_to_maxwell"] < num.maxwell_l1_tol,
                  l1=summary["final_l1_to_maxwell"])
    if track:
        loss = rates.sum(axis=0)
        estimate = 0.5 * (loss[a] + loss[b])
        series = np.abs(ev.tracked[(a, b)])
        times = np.asarray(d.t)
        window = times <= min(times[-1], 1.0 / estimate)
        measured = float(-np.polyfit(times[window], np.log(series[window]), 1)[0])
        summary.update(coherence_rate=measured, coherence_rate_estimate=estimate,
                       coherence_monotone=bool(np.all(np.diff(series) <= 1e-15)))
        out.check("coherence_rate", _rel(measured, estimate) < 0.2, rel_error=_rel(measured, estimate))
    return out


def _wigner_initial(num, params, lat) -> WignerSpectralField:
    x = np.arange(num.n_x) * num.length / num.n_x
    gp = np.exp(-params.beta * (lat.p - num.p0) ** 2 / (2.0 * params.test_mass))
    f = (1.0 + num.modulation * np.cos(2.0 * np.pi * x / num.length))[:, None] * gp[None, :]
    f /= f.sum() * (num.length / num.n_x) * lat.dp
    return WignerSpectralField.from_real(num.length, lat, f)


def run_wigner(cfg, threads: int) -> Outcome:
    params, xs, num = cfg.params, cfg.xs, cfg.numerics
    lat = MomentumLattice.spanning(num.n_p, num.p_max)
    f0 = _wigner_initial(num, params, lat)
    res = wigner_evolve(f0, num.t_end, num.dt, params, xs, num.mode, num.boundary)
    ref = wigner_evolve(f0, num.t_end, num.dt, params.replace(hbar=0.0), xs, "classical", num.boundary)
    f = res.to_real()
    rows = [[x, p, f[i, j]] for i, x in enumerate(res.x) for j, p in enumerate(lat.p)]
    scale = float(np.abs(res.values).max())
    norm0 = float(f0.values[0].real.sum())
    norm1 = float(res.values[0].real.sum())
    summary = {"mode": num.mode, "t_end": res.t, "reality_error": res.reality_error(),
               "norm_drift": abs(norm1 - norm0) / abs(norm0),
               "max_diff_to_classical": float(np.abs(f - ref.to_real()).max()),
               "k0_diff_to_classical": float(np.abs(res.values[0] - ref.values[0]).max())}
    out = Outcome(["x", "p", "f"], rows, summary)
    out.check("reality", summary["reality_error"] <= 1e-12 * max(scale, 1.0))
    if num.boundary == "conserving":
        out.check("norm", summary["norm_drift"] < 1e-10, drift=summary["norm_drift"])
    out.check("k0_matches_classical", summary["k0_diff_to_classical"] <= 1e-12 * max(scale, 1.0))
    if num.mode == "quantum" and len(num.hbar_sweep) >= 2:
        diffs = []
        for h in num.hbar_sweep:
            q = wigner_evolve(f0, num.t_end, num.dt, params.replace(hbar=h), xs, "quantum", num.boundary)
            diffs.append(float(np.abs(q.to_real() - ref.to_real()).max()))
        order = float(np.polyfit(np.log(num.hbar_sweep), np.log(diffs), 1)[0])
        summary.update(hbar_sweep=list(num.hbar_sweep), sweep_max_diff=diffs, hbar_order=order)
        out.check("hbar_order", order >= num.min_order, order=order)
    return out


RUNNERS = {
    "coefficients": run_coefficients,
    "mc-relax": run_mc_relax,
    "kramers": run_kramers,
    "quantum-kramers": run_quantum_kramers,
    "smoluchowski": run_smoluchowski,
    "high-friction-sweep": run_high_friction,
    "gaussian-lindblad": run_gaussian_lindblad,
    "nalbe-grid": run_nalbe,
    "wigner-spectral": run_wigner,
}


# ---------------------------------------------------------------------------
# artifacts


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_artifacts(out_dir: Path, cfg, outcome: Outcome, threads: int, argv) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(outcome.header)
        for row in outcome.rows:
            writer.writerow([_cell(v) for v in row])
    summary = {"experiment": cfg.experiment, **outcome.summary, "checks": outcome.checks,
               "passed": all(c["passed"] for c in outcome.checks.values())}
    (out_dir / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    manifest = {"config": cfg.model_dump(mode="json"), "version": __version__, "seed": cfg.seed,
                "threads": threads, "argv": list(argv), "python": platform.python_version(),
                "numpy": np.__version__, "scipy": scipy.__version__}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        if args.out is not None:
            cfg = cfg.model_copy(update={"output_dir": args.out})
    except ConfigError as exc:
        print(f"config error in {args.config}:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        outcome = RUNNERS[cfg.experiment](cfg, args.threads)
    except ConfigError as exc:
        print(f"config error in {args.config}:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure in {cfg.experiment} ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out_dir = Path(args.out) if args.out is not None else Path(args.config).parent / cfg.output_dir
    write_artifacts(out_dir, cfg, outcome, args.threads, sys.argv)
    failed = [name for name, c in outcome.checks.items() if not c["passed"]]
    for name, c in outcome.checks.items():
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {cfg.experiment}: {name}")
    print(f"artifacts written to {out_dir}")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


# ---------------------------------------------------------------------------
# comparison report


def _load_summary(directory) -> dict:
    path = Path(directory) / "summary.json"
    if not path.is_file():
        raise FileNotFoundError(str(path))
    return json.loads(path.read_text())


def build_report(spec: dict, base: Path) -> tuple[list, list]:
    """Rows (section, quantity, value, reference, rel_error, passed) and markdown lines."""
    runs = spec.get("runs", {})
    if not isinstance(runs, dict) or not runs:
        raise ConfigError("runs: expected a non-empty mapping of run name to directory")
    unknown = set(runs) - {"coefficients", "mc_relax", "quantum_kramers", "smoluchowski", "gaussian_lindblad",
                           "high_friction_sweep"}
    if unknown:
        raise ConfigError(f"runs: unknown entries {sorted(unknown)}")
    slope_rtol = float(spec.get("slope_rtol", 0.02))
    summaries = {name: _load_summary(base / d) for name, d in runs.items()}
    rows, md = [], ["# Limit-chain comparison", ""]

    def add(section, quantity, value, reference, tol):
        rel = _rel(value, reference)
        ok = rel <= tol
        rows.append([section, quantity, value, reference, rel, ok])
        md.append(f"| {quantity} | {value:.8g} | {reference:.8g} | {rel:.3e} | {'pass' if ok else 'FAIL'} |")

    table = ["| quantity | value | reference | rel. error | status |", "|---|---|---|---|---|"]
    if "mc_relax" in summaries:
        s = summaries["mc_relax"]
        md += ["## Monte Carlo relaxation rate vs friction coefficient", "", *table]
        add("mc", "fitted <p_z> decay rate", s["fitted_rate"], s["eta"], s["checks"]["rate_vs_eta"]["rtol"])
        md.append("")
    three = [k for k in ("quantum_kramers", "smoluchowski", "gaussian_lindblad") if k in summaries]
    if len(three) == 3:
        qk, sm, gl = (summaries[k] for k in three)
        slopes = {"quantum Kramers late MSD slope": qk["late_msd_slope"],
                  "Smoluchowski variance growth": sm["measured_growth"],
                  "Gaussian propagator MSD slope": gl["late_msd_slope"]}
        etas = {qk["eta"], sm["eta"], gl["eta"]}
        if max(etas) - min(etas) > 1e-12 * max(etas):
            raise ConfigError("runs: the three slope runs use different friction coefficients")
        reference = gl["expected_msd_slope"]
        md += ["## Mean-square-displacement slope, three independent routes", "",
               f"Reference 2(1/(eta M beta) + D_xx) = {reference:.8g} at eta = {gl['eta']:.6g}.", "", *table]
        for name, v in slopes.items():
            add("slope", name, v, reference, slope_rtol)
        vals = list(slopes.values())
        spread = (max(vals) - min(vals)) / abs(np.mean(vals))
        rows.append(["slope", "max pairwise spread", spread, 0.0, spread, spread <= slope_rtol])
        md += ["", f"Largest pairwise spread: {spread:.3e} (tolerance {slope_rtol}).", ""]
    elif three:
        md += [f"Three-way slope comparison skipped: only {', '.join(three)} provided.", ""]
    ratio_src = summaries.get("smoluchowski") or summaries.get("coefficients")
    if ratio_src is not None:
        md += ["## Quantum to classical Smoluchowski coefficient", "", *table]
        add("ratio", "coefficient ratio", ratio_src["coefficient_ratio"], ratio_src["correction_factor"], 1e-12)
        if "measured_growth_ratio" in ratio_src:
            add("ratio", "measured variance-growth ratio", ratio_src["measured_growth_ratio"],
                ratio_src["correction_factor"], 0.01)
        md.append("")
    if "high_friction_sweep" in summaries:
        s = summaries["high_friction_sweep"]
        md += ["## High-friction sweep", "", "| eta | L1 deviation |", "|---|---|"]
        md += [f"| {e:.6g} | {d:.6e} |" for e, d in zip(s["etas"], s["deviations"])]
        md += ["", f"Monotone decrease: {s['monotone']}; log-log slope {s['loglog_slope']:.3f}.", ""]
        rows.append(["sweep", "monotone decrease", float(s["monotone"]), 1.0, 0.0 if s["monotone"] else 1.0,
                     bool(s["monotone"])])
    return rows, md


def cmd_compare(args) -> int:
    spec_path = Path(args.spec)
    try:
        try:
            spec = json.loads(spec_path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {spec_path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        if not isinstance(spec, dict):
            raise ConfigError("report spec must be a JSON object")
        extra = set(spec) - {"runs", "slope_rtol", "output_dir"}
        if extra:
            raise ConfigError(f"unknown keys {sorted(extra)}")
        rows, md = build_report(spec, spec_path.parent)
    except FileNotFoundError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, KeyError) as exc:
        print(f"report spec error in {spec_path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out) if args.out else spec_path.parent / spec.get("output_dir", "report")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.md").write_text("\n".join(md) + "\n")
    with open(out_dir / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["section", "quantity", "value", "reference", "rel_error", "passed"])
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    print("\n".join(md))
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lbelab", description="Linear Boltzmann test-particle experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario config")
    run.add_argument("config")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    run.add_argument("--out", default=None, help="overrides the config output directory")
    run.set_defaults(func=cmd_run)
    cmp_ = sub.add_parser("compare", help="build a comparison report from earlier runs")
    cmp_.add_argument("spec")
    cmp_.add_argument("--out", default=None)
    cmp_.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
