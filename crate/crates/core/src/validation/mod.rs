//! Reference solutions and diagnostics for the benchmark problems.

mod bounds1d;
mod radial;

pub use bounds1d::{bounds_1d_report, Bounds1DReport, CrowdCase, DiffusionCase, CROWD_IDENTITY_TOL};

pub use radial::{
    distance_distribution_w2, error_table, initial_slope, radial_error, radial_initial_positions, w2_atomic_1d,
    DistanceDistribution, ErrorReport, ErrorRow, RadialSolution,
};

use crate::dynamics::{grid_points, run_simulation, FlowConfig, Trajectory};
use crate::error::Result;
use crate::geometry::{ConvexPolygon, ParticleSet, Vec2};
use crate::ot::TransportMode;
use crate::potentials::PotentialSpec;
use crate::presets;

/// Records the first time each particle is seen inside a region.
#[derive(Debug, Clone)]
pub struct ArrivalTracker {
    region: ConvexPolygon,
    tol: f64,
    times: Vec<Option<f64>>,
}

impl ArrivalTracker {
    pub fn new(region: ConvexPolygon, n: usize) -> Self {
        let tol = 1e-12 * region.diameter();
        Self { region, tol, times: vec![None; n] }
    }

    pub fn observe(&mut self, t: f64, positions: &[Vec2]) {
        for (o, p) in self.times.iter_mut().zip(positions) {
            if o.is_none() && self.region.contains(p, self.tol) {
                *o = Some(t);
            }
        }
    }

    /// Arrival time per particle; `None` if it never arrived.
    pub fn times(&self) -> &[Option<f64>] {
        &self.times
    }
}

/// First recorded time at which each particle lies in `region`; `None` if
/// it never does.
pub fn timeout_map(traj: &Trajectory, region: &ConvexPolygon) -> Vec<Option<f64>> {
    let n = traj.frames.first().map_or(0, |f| f.positions.len());
    let mut tracker = ArrivalTracker::new(region.clone(), n);
    for f in &traj.frames {
        tracker.observe(f.t, &f.positions);
    }
    tracker.times
}

/// Spearman rank correlation; `None` when fewer than two pairs.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 || a.len() != b.len() {
        return None;
    }
    let ranks = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut k = 0;
        while k < idx.len() {
            let mut m = k;
            while m + 1 < idx.len() && v[idx[m + 1]] == v[idx[k]] {
                m += 1;
            }
            let avg = 0.5 * (k + m) as f64;
            for &i in &idx[k..=m] {
                r[i] = avg;
            }
            k = m + 1;
        }
        r
    };
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// Correlation between each particle's initial distance to `door` and its
/// timeout, over particles that escaped. Positive values mean particles
/// starting closer to the door leave earlier.
pub fn door_adjacency(traj: &Trajectory, timeouts: &[Option<f64>], door: &Vec2) -> Option<f64> {
    let first = traj.frames.first()?;
    let (d, t): (Vec<f64>, Vec<f64>) = first
        .positions
        .iter()
        .zip(timeouts)
        .filter_map(|(p, t)| t.map(|t| ((p - door).norm(), t)))
        .unzip();
    rank_correlation(&d, &t)
}

/// Variance growth of a particle cloud.
#[derive(Debug, Clone, Default)]
pub struct HeatReport {
    /// `(t, (1/N) Σ |x_i - x̄|²)` per recorded frame.
    pub variances: Vec<(f64, f64)>,
    /// Least-squares slope over the first ten frames.
    pub early_slope: Option<f64>,
    /// Least-squares slope over the last ten frames.
    pub late_slope: Option<f64>,
}

pub fn cloud_variance(x: &[Vec2]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<Vec2>() / n;
    x.iter().map(|p| (p - mean).norm_squared()).sum::<f64>() / n
}

fn ls_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    (den > 0.0).then(|| num / den)
}

/// Variance slopes of a diffusion run; free-space heat flow in the plane
/// grows the variance at rate 4.
pub fn heat_moment_check(traj: &Trajectory) -> HeatReport {
    let variances: Vec<(f64, f64)> = traj.frames.iter().map(|f| (f.t, cloud_variance(&f.positions))).collect();
    let k = variances.len().min(10);
    HeatReport {
        early_slope: ls_slope(&variances[..k]),
        late_slope: ls_slope(&variances[variances.len() - k..]),
        variances,
    }
}

/// Entropy-mode flow with no potential from the lattice points of the disk
/// `|x| ≤ radius` inside the box `[-half_width, half_width]²`, with
/// `τ = h/2`, `ε = h` and every step recorded.
pub fn heat_benchmark(h: f64, radius: f64, half_width: f64, t_final: f64) -> Result<(Trajectory, HeatReport)> {
    let dom = presets::square(-half_width, -half_width, 2.0 * half_width)?;
    let x0 = grid_points(Vec2::new(-radius, -radius), Vec2::new(radius, radius), h, |p| p.norm() <= radius + 1e-12 * h);
    let cfg = FlowConfig::from_grid_spacing(h, TransportMode::Entropy, t_final, PotentialSpec::Zero);
    let traj = run_simulation(&ParticleSet::new(x0, h)?, &dom, &cfg)?;
    let rep = heat_moment_check(&traj);
    Ok((traj, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Frame;

    fn frame(t: f64, positions: Vec<Vec2>) -> Frame {
        let n = positions.len();
        Frame {
            step: 0,
            t,
            positions,
            psi: vec![0.0; n],
            barycenters: vec![Vec2::zeros(); n],
            energy: 0.0,
            speeds: vec![0.0; n],
            cells: None,
            weights: None,
        }
    }

    #[test]
    fn timeouts() {
        let room = ConvexPolygon::rectangle(1.0, 0.0, 2.0, 1.0).unwrap();
        let traj = Trajectory {
            frames: vec![
                frame(0.0, vec![Vec2::new(1.5, 0.5), Vec2::new(0.2, 0.5), Vec2::new(0.1, 0.1)]),
                frame(0.5, vec![Vec2::new(0.5, 0.5), Vec2::new(1.0, 0.5), Vec2::new(0.1, 0.2)]),
            ],
            ..Default::default()
        };
        let t = timeout_map(&traj, &room);
        assert_eq!(t, vec![Some(0.0), Some(0.5), None]);
    }

    #[test]
    fn heat_report_handles_single_frame() {
        let traj = Trajectory { frames: vec![frame(0.0, vec![Vec2::zeros(), Vec2::new(1.0, 0.0)])], ..Default::default() };
        let rep = heat_moment_check(&traj);
        assert!(rep.early_slope.is_none());
        assert!((rep.variances[0].1 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn spearman_extremes() {
        assert_eq!(rank_correlation(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(rank_correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
    }

    #[test]
    fn small_heat_run_spreads() {
        let (traj, rep) = heat_benchmark(0.25, 0.5, 3.0, 0.25).unwrap();
        assert!(traj.completed());
        assert!(rep.early_slope.unwrap() > 0.0);
    }
}
