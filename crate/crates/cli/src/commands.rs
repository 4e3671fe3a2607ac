//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use lagflow::dynamics::{energy, run_simulation_with, velocities};
use lagflow::ot::moreau_yosida;
use lagflow::potentials::Potential;
use lagflow::snapshot::{CellRecord, Snapshot};
use lagflow::validation::{self, ArrivalTracker, Bounds1DReport};
use lagflow::TransportMode;
use serde::Serialize;

use crate::config::{Prepared, RunConfig};
use crate::error::CliError;
use crate::output;

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub n: usize,
    pub steps: usize,
    pub tau: f64,
    pub eps: f64,
    pub completed: bool,
    pub failure: Option<String>,
    pub final_t: f64,
    pub recorded_frames: usize,
    pub newton_iterations: usize,
    pub projections: usize,
    pub min_distance: f64,
    pub initial_energy: Option<f64>,
    pub final_energy: Option<f64>,
    /// Largest per-step energy increase beyond the discretization slack.
    pub max_energy_excess: Option<f64>,
    /// `(1/ε) Σ_k τ W₂²(σ_N, Σδ_β/N)`.
    pub hypothesis_integral: f64,
    pub escaped: Option<usize>,
    pub door_correlation: Option<f64>,
    pub runtime_s: f64,
}

fn out_dir(cfg: &RunConfig, overridden: Option<&Path>) -> PathBuf {
    overridden
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Runs the flow and writes snapshots, `trajectories.csv`, `energy.csv`,
/// `summary.json` and, with an exit region, `timeout.csv`. A numerical
/// failure still writes everything recorded up to that point.
pub fn simulate(cfg: &RunConfig, output_dir: Option<&Path>) -> Result<SimulateSummary, CliError> {
    let start = Instant::now();
    let Prepared { domain, particles, flow, exit_region, door } = cfg.prepare()?;
    let dir = out_dir(cfg, output_dir);
    output::ensure_dir(&dir)?;
    log::info!("simulating N = {} for {} steps", particles.len(), flow.steps());
    let mut arrivals = exit_region.clone().map(|r| ArrivalTracker::new(r, particles.len()));
    let traj = run_simulation_with(&particles, &domain, &flow, |k, out| {
        if let Some(a) = arrivals.as_mut() {
            a.observe(k as f64 * flow.tau, &out.transport.dual.positions);
        }
    })?;

    output::write_snapshots(&dir, &traj)?;
    output::write_trajectories_csv(&dir.join("trajectories.csv"), &traj)?;
    output::write_energy_csv(&dir.join("energy.csv"), &traj, flow.tau)?;

    let (mut escaped, mut door_correlation) = (None, None);
    if let Some(a) = &arrivals {
        let timeouts = a.times();
        output::write_timeout_csv(&dir.join("timeout.csv"), &particles.positions, timeouts)?;
        escaped = Some(timeouts.iter().flatten().count());
        door_correlation = door.and_then(|d| validation::door_adjacency(&traj, timeouts, &d));
    }

    let potential = Potential::new(flow.potential.clone(), &domain)?;
    let lipschitz = potential.grad_lipschitz() + flow.kernel.map_or(0.0, |k| k.grad_lipschitz());
    let excess = traj.energy_excess(flow.tau, flow.eps, lipschitz);
    let summary = SimulateSummary {
        n: particles.len(),
        steps: flow.steps(),
        tau: flow.tau,
        eps: flow.eps,
        completed: traj.completed(),
        failure: traj.failure.as_ref().map(ToString::to_string),
        final_t: traj.last().map_or(0.0, |f| f.t),
        recorded_frames: traj.frames.len(),
        newton_iterations: traj.newton_iterations,
        projections: traj.projections,
        min_distance: traj.min_distance,
        initial_energy: traj.energies.first().copied(),
        final_energy: traj.energies.last().copied(),
        max_energy_excess: excess.iter().copied().reduce(f64::max),
        hypothesis_integral: traj.hypothesis_integral,
        escaped,
        door_correlation,
        runtime_s: start.elapsed().as_secs_f64(),
    };
    output::write_json(&dir.join("summary.json"), &summary)?;
    match traj.failure {
        Some(e) => Err(CliError::Numerical(e)),
        None => Ok(summary),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectSummary {
    pub n: usize,
    pub iterations: usize,
    pub residual: f64,
    pub value: f64,
    pub duality_gap: f64,
    pub energy: f64,
}

/// One transport solve at the initial positions: writes `snapshot.json`
/// (with cells) and `forces.csv` (barycenters, transport forces and total
/// velocities).
pub fn project(cfg: &RunConfig, output_dir: Option<&Path>) -> Result<ProjectSummary, CliError> {
    let Prepared { domain, particles, flow, .. } = cfg.prepare()?;
    let dir = out_dir(cfg, output_dir);
    output::ensure_dir(&dir)?;
    let potential = Potential::new(flow.potential.clone(), &domain)?;
    let my = moreau_yosida(&particles, &domain, flow.mode, &flow.newton, None)?;
    let e = energy(&particles.positions, &potential, flow.kernel.as_ref(), my.value)?;
    let v = velocities(&particles.positions, &potential, flow.kernel.as_ref(), &my)?;
    let dual = &my.dual;
    let snap = Snapshot {
        step: 0,
        t: 0.0,
        positions: dual.positions.iter().map(|p| [p.x, p.y]).collect(),
        psi: dual.psi.clone(),
        energy: e,
        speeds: Some(v.iter().map(|w| w.norm()).collect()),
        cells: Some(dual.cells.iter().map(CellRecord::from_region).collect()),
        weights: (flow.mode == TransportMode::Entropy).then(|| dual.density_weights()),
    };
    output::write_json(&dir.join("snapshot.json"), &snap)?;
    let rows = (0..dual.len()).map(|i| {
        let (x, b, f) = (dual.positions[i], dual.barycenters[i], my.force[i]);
        (i, x.x, x.y, dual.psi[i], dual.cell_masses[i], b.x, b.y, f.x, f.y, v[i].x, v[i].y)
    });
    output::write_rows(
        &dir.join("forces.csv"),
        &["particle", "x", "y", "psi", "mass", "beta_x", "beta_y", "force_x", "force_y", "vel_x", "vel_y"],
        rows,
    )?;
    let summary = ProjectSummary {
        n: dual.len(),
        iterations: dual.iterations,
        residual: dual.residual,
        value: my.value,
        duality_gap: my.duality_gap(),
        energy: e,
    };
    output::write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialRow {
    pub h: f64,
    pub n: usize,
    pub err_h: f64,
    pub runtime_s: f64,
    pub failure: Option<String>,
}

/// Radial benchmark for each `h`; writes `error_table.csv` and
/// `w2_series.csv`.
pub fn validate_radial(h_list: &[f64], t_final: f64, dir: &Path) -> Result<Vec<RadialRow>, CliError> {
    if h_list.is_empty() {
        return Err(CliError::Config("no grid spacing given".into()));
    }
    if let Some(h) = h_list.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(CliError::Config(format!("grid spacing must be positive, got {h}")));
    }
    output::ensure_dir(dir)?;
    let report = validation::error_table(h_list, t_final)?;
    output::write_rows(
        &dir.join("error_table.csv"),
        &["h", "err_h", "runtime_s"],
        report.rows.iter().map(|r| (r.h, r.err_h, r.runtime_s)),
    )?;
    output::write_rows(
        &dir.join("w2_series.csv"),
        &["h", "t", "w2"],
        report.rows.iter().flat_map(|r| r.w2_series.iter().map(move |(t, w)| (r.h, t, w))),
    )?;
    let rows: Vec<RadialRow> = report
        .rows
        .iter()
        .map(|r| RadialRow {
            h: r.h,
            n: r.n,
            err_h: r.err_h,
            runtime_s: r.runtime_s,
            failure: r.failure.as_ref().map(ToString::to_string),
        })
        .collect();
    if let Some(e) = report.rows.into_iter().find_map(|r| r.failure) {
        return Err(CliError::Numerical(e));
    }
    Ok(rows)
}

pub fn bounds_1d(seed: u64) -> Result<Bounds1DReport, CliError> {
    Ok(validation::bounds_1d_report(100, 100, 1000, seed)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatSummary {
    pub n: usize,
    pub early_slope: Option<f64>,
    pub late_slope: Option<f64>,
    pub completed: bool,
}

/// Entropy-mode flow of a lattice disk in a large box; writes `heat.csv`
/// with the cloud variance per step.
pub fn heat(h: f64, radius: f64, half_width: f64, t_final: f64, dir: &Path) -> Result<HeatSummary, CliError> {
    output::ensure_dir(dir)?;
    let (traj, rep) = validation::heat_benchmark(h, radius, half_width, t_final)?;
    output::write_rows(&dir.join("heat.csv"), &["t", "variance"], rep.variances.iter().copied())?;
    let summary = HeatSummary {
        n: traj.frames.first().map_or(0, |f| f.positions.len()),
        early_slope: rep.early_slope,
        late_slope: rep.late_slope,
        completed: traj.completed(),
    };
    output::write_json(&dir.join("summary.json"), &summary)?;
    match traj.failure {
        Some(e) => Err(CliError::Numerical(e)),
        None => Ok(summary),
    }
}
