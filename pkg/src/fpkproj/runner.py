"""Scenario execution and deterministic result files.

Every float is written with 17 significant digits so repeated runs of the
same scenario are byte-identical; optional columns are left empty rather
than filled with sentinels.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InadmissibleRecovery, ValidationError
from .expfamily import ExpFamily
from .mixture import MixtureFamily
from .projection import ProjectedOde, integrate_ode
from .reference import (
    DecayReport,
    GridDensity,
    decay_experiment,
    divergence_hellinger,
    divergence_kl,
    divergence_l2,
    grid_density,
    metric_project_ef,
    metric_project_mix,
    solve_fpk,
)
from .scenario import (
    Scenario,
    build_family,
    build_initial_density,
    build_model,
    scenario_domain,
)

TRAJECTORY_BASE_COLUMNS = ("t", "residual", "kl", "hellinger", "l2", "clamped")


@dataclass
class ResultTable:
    """Column-ordered rows ready for CSV serialization."""

    header: tuple
    rows: list


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def trajectory_header(n: int) -> tuple:
    return (("t",)
            + tuple(f"theta_{i}" for i in range(1, n + 1))
            + tuple(f"eta_or_m_{i}" for i in range(1, n + 1))
            + ("residual", "kl", "hellinger", "l2", "clamped"))


def write_csv(path, table: ResultTable):
    lines = [",".join(table.header)]
    for row in table.rows:
        lines.append(",".join(format_value(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def write_decay_json(path, report: DecayReport):
    Path(path).write_text(
        json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n", newline="\n")


def write_density_csv(path, snap: GridDensity):
    lines = ["x,p"]
    for x, p in zip(snap.x, snap.values):
        lines.append(f"{format_value(x)},{format_value(p)}")
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def _density_snapshot_map(snapshots, wanted_times):
    out = {}
    if not wanted_times:
        return out
    times = np.array([s.time for s in snapshots])
    for t in wanted_times:
        idx = int(np.argmin(np.abs(times - t)))
        out[float(t)] = snapshots[idx]
    return out


def _density_file_name(t: float) -> str:
    return f"density_t{format(float(t), 'g')}.csv"


def _initial_state(scenario: Scenario, family, method: str) -> np.ndarray:
    init = scenario.initial
    if method == "tangent-ef":
        return np.asarray(init["theta"], dtype=float)
    if method == "ada-ef":
        if "eta" in init:
            return np.asarray(init["eta"], dtype=float)
        return family.expectation_params(np.asarray(init["theta"], dtype=float))
    if method in ("tangent-mix", "galerkin"):
        return np.asarray(init["theta"], dtype=float)
    if "m" in init:
        return np.asarray(init["m"], dtype=float)
    return family.weights_to_expectations(np.asarray(init["theta"], dtype=float))


def _state_coordinates(ode: ProjectedOde, state, guess=None):
    """(theta, eta_or_m) pair for a trajectory state."""
    family = ode.family
    if isinstance(family, ExpFamily):
        if ode.coordinates == "expectation":
            theta = family.expectation_to_canonical(state, initial=guess)
            return theta, np.asarray(state, dtype=float)
        return np.asarray(state, dtype=float), family.expectation_params(state)
    if ode.coordinates == "expectation":
        theta = family.expectations_to_weights(state)
        return theta, np.asarray(state, dtype=float)
    theta = np.asarray(state, dtype=float)
    return theta, family.gamma @ theta + family.beta


def _reference_lookup(model, scenario: Scenario, domain):
    """Solve the grid reference for scenarios that want divergence columns."""
    density_fn = build_initial_density(scenario.initial["density"])
    p0 = grid_density(domain, scenario.numerics.pde_nx, density_fn)
    return solve_fpk(model, p0, scenario.numerics.t_end, scenario.numerics.pde_dt,
                     sample_stride=scenario.numerics.sample_stride)


def _run_trajectory_method(scenario: Scenario, model, family, output_dir: Path,
                           quiet: bool) -> ResultTable:
    num = scenario.numerics
    ode = ProjectedOde(family, model, scenario.method)
    y0 = _initial_state(scenario, family, scenario.method)
    traj = integrate_ode(ode, y0, num.t_end, num.ode_dt,
                         record_residual=num.record_residual)
    nsteps = traj.times.size - 1
    sample_idx = list(range(0, nsteps + 1, num.sample_stride))
    if sample_idx[-1] != nsteps:
        sample_idx.append(nsteps)

    snapshots = None
    if num.attach_reference:
        snapshots = _reference_lookup(model, scenario, model.domain)
        snap_times = np.array([s.time for s in snapshots])

    rows = []
    guess = None
    for idx in sample_idx:
        state = traj.states[idx]
        theta, coords = _state_coordinates(ode, state, guess)
        guess = theta
        kl = hell = l2 = None
        if snapshots is not None:
            snap = snapshots[int(np.argmin(np.abs(snap_times - traj.times[idx])))]
            fam_density = family.density(theta)
            kl = divergence_kl(snap, fam_density)
            hell = divergence_hellinger(snap, fam_density)
            l2 = divergence_l2(snap, fam_density)
        res = None if traj.residuals is None else float(traj.residuals[idx])
        rows.append((float(traj.times[idx]), *map(float, theta), *map(float, coords),
                     res, kl, hell, l2, bool(traj.clamped[idx])))
    table = ResultTable(header=trajectory_header(family.n), rows=rows)
    write_csv(output_dir / scenario.outputs["trajectory"], table)
    if snapshots is not None:
        for t, snap in _density_snapshot_map(snapshots, scenario.outputs["density_times"]).items():
            write_density_csv(output_dir / _density_file_name(t), snap)
    if not quiet:
        final = ", ".join(format(v, ".6g") for v in traj.states[-1])
        print(f"{scenario.name}: {scenario.method} reached t={num.t_end:g}, "
              f"final state [{final}]" + (f", {len(traj.clamp_events)} clamps"
                                          if traj.clamp_events else ""))
    return table


def _run_metric_projection(scenario: Scenario, model, family, output_dir: Path,
                           quiet: bool) -> ResultTable:
    snapshots = _reference_lookup(model, scenario, model.domain)
    rows = []
    clamp_count = 0
    for snap in snapshots:
        clamped_flag = False
        if isinstance(family, ExpFamily):
            theta = metric_project_ef(snap, family)
            coords = family.expectation_params(theta)
        else:
            try:
                theta = metric_project_mix(snap, family)
            except InadmissibleRecovery as err:
                theta, _ = family.clamp_weights(np.asarray(err.value, dtype=float))
                clamped_flag = True
                clamp_count += 1
            coords = family.gamma @ theta + family.beta
        fam_density = family.density(theta)
        rows.append((float(snap.time), *map(float, theta), *map(float, coords),
                     None,
                     divergence_kl(snap, fam_density),
                     divergence_hellinger(snap, fam_density),
                     divergence_l2(snap, fam_density),
                     clamped_flag))
    table = ResultTable(header=trajectory_header(family.n), rows=rows)
    write_csv(output_dir / scenario.outputs["trajectory"], table)
    for t, snap in _density_snapshot_map(snapshots, scenario.outputs["density_times"]).items():
        write_density_csv(output_dir / _density_file_name(t), snap)
    if not quiet:
        print(f"{scenario.name}: projected {len(rows)} snapshots"
              + (f", {clamp_count} clamped" if clamp_count else ""))
    return table


def _run_decay(scenario: Scenario, model, family, output_dir: Path,
               quiet: bool) -> ResultTable:
    num = scenario.numerics
    density_fn = build_initial_density(scenario.initial["density"])
    p0 = grid_density(model.domain, num.pde_nx, density_fn)
    start = None
    init = scenario.initial
    if isinstance(family, ExpFamily):
        if "eta" in init:
            start = np.asarray(init["eta"], dtype=float)
        elif "theta" in init:
            start = family.expectation_params(np.asarray(init["theta"], dtype=float))
    else:
        if "m" in init:
            start = np.asarray(init["m"], dtype=float)
        elif "theta" in init:
            start = family.weights_to_expectations(np.asarray(init["theta"], dtype=float))
    report = decay_experiment(
        model, family, p0, num.t_end, pde_dt=num.pde_dt, ode_dt=num.ode_dt,
        sample_stride=num.sample_stride, start=start, fit_window=num.fit_window)
    write_decay_json(output_dir / scenario.outputs["decay"], report)
    rows = [
        (float(t), *[None] * family.n, *map(float, report.ode_moments[i]),
         None, None, None, None, False)
        for i, t in enumerate(report.times)
    ]
    table = ResultTable(header=trajectory_header(family.n), rows=rows)
    write_csv(output_dir / scenario.outputs["trajectory"], table)
    if not quiet:
        fitted = ", ".join("none" if r is None else format(r, ".6g")
                           for r in report.fitted_rates)
        print(f"{scenario.name}: eigenvalues "
              + ", ".join(format(v, ".6g") for v in report.eigenvalues)
              + f"; fitted rates [{fitted}]")
    return table


def run_scenario(scenario: Scenario, output_dir, quiet: bool = False) -> ResultTable:
    """Execute a validated scenario and write its output files."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    domain = scenario_domain(scenario)
    model = build_model(scenario, domain)
    family = build_family(scenario, domain)
    if scenario.method == "metric-projection":
        return _run_metric_projection(scenario, model, family, output_dir, quiet)
    if scenario.method == "decay-experiment":
        return _run_decay(scenario, model, family, output_dir, quiet)
    return _run_trajectory_method(scenario, model, family, output_dir, quiet)
