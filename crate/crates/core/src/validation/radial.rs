use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use crate::dynamics::{run_simulation_with, FlowConfig};
use crate::error::{Error, Result};
use crate::geometry::{ParticleSet, Vec2};
use crate::ot::TransportMode;
use crate::potentials::PotentialSpec;
use crate::presets;

/// Exact crowd-motion solution on the quarter sector `x₂ ≥ |x₁|, |x| ≤ R`
/// with `V = |x|` and initial density `α`: saturated core `[0, b(t))`,
/// compressed profile `α (1 + t/r)` on `[b(t), R - t)`, empty beyond.
#[derive(Debug, Clone)]
pub struct RadialSolution {
    pub alpha: f64,
    pub r_max: f64,
    /// RK4 step of the tabulation.
    pub dt: f64,
    /// Tabulated `(t, b(t))`, increasing in `t`, starting at `(0, 0)`.
    pub table: Vec<(f64, f64)>,
    /// Time at which the core reaches the outer front; the solution is
    /// stationary afterwards.
    pub meeting_time: Option<f64>,
}

/// Angular measure of the sector.
const SECTOR_ANGLE: f64 = FRAC_PI_2;

/// Initial slope of `b`: positive root of `(1-α)c² - 2αc - α = 0`.
pub fn initial_slope(alpha: f64) -> f64 {
    (alpha.sqrt() + alpha) / (1.0 - alpha)
}

fn b_rhs(alpha: f64, t: f64, b: f64) -> Result<f64> {
    let den = b - alpha * (b + t);
    if !(den > 0.0) {
        return Err(Error::SingularDenominator { t, b });
    }
    Ok(alpha * (b + t) / den)
}

impl RadialSolution {
    /// Integrates `b' = α(b+t)/(b - α(b+t))` with RK4 (step `dt`) from
    /// `t₀ = 1e-6`, `b(t₀) = c t₀`, up to `t_final` or the meeting time.
    pub fn new(alpha: f64, r_max: f64, t_final: f64, dt: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let area = SECTOR_ANGLE * r_max * r_max / 2.0;
        if (alpha * area - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("alpha |Ω| = {} must equal 1", alpha * area)));
        }
        let t0 = 1e-6;
        let c = initial_slope(alpha);
        let mut table = vec![(0.0, 0.0), (t0, c * t0)];
        let (mut t, mut b) = (t0, c * t0);
        let mut meeting_time = None;
        while t < t_final {
            let h = dt.min(t_final - t);
            let k1 = b_rhs(alpha, t, b)?;
            let k2 = b_rhs(alpha, t + h / 2.0, b + h / 2.0 * k1)?;
            let k3 = b_rhs(alpha, t + h / 2.0, b + h / 2.0 * k2)?;
            let k4 = b_rhs(alpha, t + h, b + h * k3)?;
            let bn = b + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            let tn = t + h;
            if bn >= r_max - tn {
                // locate b(t) = R - t on the step by linear interpolation
                let g0 = r_max - t - b;
                let g1 = r_max - tn - bn;
                let s = g0 / (g0 - g1);
                let tm = t + s * h;
                meeting_time = Some(tm);
                table.push((tm, r_max - tm));
                break;
            }
            t = tn;
            b = bn;
            table.push((t, b));
        }
        Ok(Self { alpha, r_max, dt, table, meeting_time })
    }

    /// The benchmark instance `α = 1/π`, `R = 2`.
    pub fn benchmark(t_final: f64) -> Result<Self> {
        Self::new(1.0 / std::f64::consts::PI, 2.0, t_final, 1e-5)
    }

    /// Radius of the fully saturated stationary state.
    pub fn saturated_radius(&self) -> f64 {
        (2.0 / SECTOR_ANGLE).sqrt()
    }

    fn after_meeting(&self, t: f64) -> bool {
        self.meeting_time.is_some_and(|tm| t >= tm)
    }

    /// Free-boundary radius `b(t)` (linear interpolation of the table).
    pub fn b(&self, t: f64) -> f64 {
        if self.after_meeting(t) {
            return self.saturated_radius();
        }
        let k = self.table.partition_point(|&(s, _)| s <= t);
        if k == 0 {
            return 0.0;
        }
        if k >= self.table.len() {
            return self.table.last().unwrap().1;
        }
        let (t0, b0) = self.table[k - 1];
        let (t1, b1) = self.table[k];
        b0 + (b1 - b0) * (t - t0) / (t1 - t0)
    }

    /// `(b, outer radius)` of the support at time `t`.
    fn radii(&self, t: f64) -> (f64, f64) {
        if self.after_meeting(t) {
            let r = self.saturated_radius();
            (r, r)
        } else {
            (self.b(t), self.r_max - t)
        }
    }

    pub fn density(&self, r: f64, t: f64) -> f64 {
        let (b, outer) = self.radii(t);
        if r < b {
            1.0
        } else if r < outer {
            self.alpha * (1.0 + t / r)
        } else {
            0.0
        }
    }

    fn moments(&self, r: f64, t: f64) -> [f64; 3] {
        let (b, outer) = self.radii(t);
        profile_moments(self.alpha, b, outer, r, t)
    }

    /// Total mass at time `t` (one for an exact solution).
    pub fn mass(&self, t: f64) -> f64 {
        self.moments(self.r_max, t)[0]
    }

    /// Distribution of `|x|` under `ρ_t`, normalized to a probability.
    pub fn distance_distribution(&self, t: f64) -> DistanceDistribution {
        let (b, outer) = self.radii(t);
        let total = profile_moments(self.alpha, b, outer, outer, t);
        let mut dist = DistanceDistribution { alpha: self.alpha, t, b, outer, total, grid: Vec::new() };
        let n = 10_000;
        dist.grid = (0..=n)
            .map(|k| {
                let r = outer * k as f64 / n as f64;
                (r, dist.cdf(r))
            })
            .collect();
        dist
    }
}

/// `∫_0^r s^k ρ(s) θ s ds` for `k = 0, 1, 2` and the three-branch profile
/// with core radius `b` and outer radius `outer`; `θ` is the sector angle.
fn profile_moments(alpha: f64, b: f64, outer: f64, r: f64, t: f64) -> [f64; 3] {
    let th = SECTOR_ANGLE;
    let r1 = r.min(b).max(0.0);
    let mut m = [th * r1.powi(2) / 2.0, th * r1.powi(3) / 3.0, th * r1.powi(4) / 4.0];
    if r > b && outer > b {
        let r2 = r.min(outer);
        let prim = |s: f64| {
            [
                s * s / 2.0 + t * s,
                s.powi(3) / 3.0 + t * s * s / 2.0,
                s.powi(4) / 4.0 + t * s.powi(3) / 3.0,
            ]
        };
        let (p2, p1) = (prim(r2), prim(b));
        for k in 0..3 {
            m[k] += th * alpha * (p2[k] - p1[k]);
        }
    }
    m
}

/// Radial distribution `ρ̄_t` with its quantile function.
#[derive(Debug, Clone)]
pub struct DistanceDistribution {
    alpha: f64,
    t: f64,
    b: f64,
    outer: f64,
    total: [f64; 3],
    grid: Vec<(f64, f64)>,
}

impl DistanceDistribution {
    pub fn cdf(&self, r: f64) -> f64 {
        (profile_moments(self.alpha, self.b, self.outer, r, self.t)[0] / self.total[0]).clamp(0.0, 1.0)
    }

    /// Quantile: tabulated bracket refined by bisection.
    pub fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return self.outer;
        }
        let k = self.grid.partition_point(|&(_, c)| c < u);
        let (mut lo, mut hi) = (self.grid[k.saturating_sub(1)].0, self.grid[k.min(self.grid.len() - 1)].0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `(∫_0^Q(u) r dρ̄, ∫_0^Q(u) r² dρ̄)`.
    fn partial_moments(&self, u: f64) -> (f64, f64) {
        let m = profile_moments(self.alpha, self.b, self.outer, self.quantile(u), self.t);
        (m[1] / self.total[0], m[2] / self.total[0])
    }

    /// `W₂(ρ̄_t, (1/N) Σ δ_{r_k})`.
    pub fn w2_to_atoms(&self, radii: &[f64]) -> f64 {
        let mut r = radii.to_vec();
        r.sort_by(f64::total_cmp);
        let n = r.len() as f64;
        let mut prev = (0.0, 0.0);
        let mut w2 = 0.0;
        for (k, rk) in r.iter().enumerate() {
            let cur = if k + 1 == r.len() {
                (self.total[1] / self.total[0], self.total[2] / self.total[0])
            } else {
                self.partial_moments((k + 1) as f64 / n)
            };
            w2 += (cur.1 - prev.1) - 2.0 * rk * (cur.0 - prev.0) + rk * rk / n;
            prev = cur;
        }
        w2.max(0.0).sqrt()
    }
}

/// W₂ between two uniform atomic measures on the line with the same
/// number of atoms.
pub fn w2_atomic_1d(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "atomic measures must have equally many atoms");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    (a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / n).sqrt()
}

/// W₂ between the distance distribution of the particles and that of the
/// reference solution at time `t`.
pub fn distance_distribution_w2(positions: &[Vec2], reference: &RadialSolution, t: f64) -> f64 {
    let radii: Vec<f64> = positions.iter().map(|p| p.norm()).collect();
    reference.distance_distribution(t).w2_to_atoms(&radii)
}

/// `hℤ²` points of the curved sector, moved onto the polygonized domain
/// when they fall between an arc and its chord.
pub fn radial_initial_positions(r_max: f64, h: f64, segments: usize) -> Result<(crate::geometry::DomainGeometry, Vec<Vec2>)> {
    let dom = presets::radial_sector(r_max, segments)?;
    let (lo, hi) = (Vec2::new(-r_max, 0.0), Vec2::new(r_max, r_max));
    let mut pts = crate::dynamics::grid_points(lo, hi, h, |p| presets::in_radial_sector(p, r_max));
    if pts.is_empty() {
        return Err(Error::EmptyGrid);
    }
    for p in pts.iter_mut() {
        if !dom.contains(p) {
            *p = dom.closest_point(p);
        }
    }
    Ok((dom, pts))
}

#[derive(Debug, Clone)]
pub struct ErrorRow {
    pub h: f64,
    pub n: usize,
    pub err_h: f64,
    pub runtime_s: f64,
    /// `(t_k, W₂)` at every step.
    pub w2_series: Vec<(f64, f64)>,
    /// Largest per-step energy increase beyond the discretization slack
    /// (`∇V` of `|x|` is Lipschitz away from the origin with constant 0).
    pub max_energy_excess: f64,
    pub failure: Option<Error>,
}

#[derive(Debug, Clone, Default)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    /// `err_{h_{k+1}} / err_{h_k}` for consecutive rows.
    pub fn ratios(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[1].err_h / w[0].err_h).collect()
    }
}

/// Full radial benchmark for one `h`: `τ = h/2`, `ε = h`, `T = 1`.
pub fn radial_error(h: f64, t_final: f64, reference: &RadialSolution) -> Result<ErrorRow> {
    let start = Instant::now();
    let (dom, x0) = radial_initial_positions(reference.r_max, h, presets::DEFAULT_ARC_SEGMENTS)?;
    let n = x0.len();
    let cfg = FlowConfig {
        snapshot_stride: usize::MAX,
        ..FlowConfig::from_grid_spacing(h, TransportMode::Crowd, t_final, PotentialSpec::Norm { center: Vec2::zeros() })
    };
    let x = ParticleSet::new(x0, cfg.eps)?;
    let mut series = Vec::new();
    let traj = run_simulation_with(&x, &dom, &cfg, |k, out| {
        let t = k as f64 * cfg.tau;
        let w = distance_distribution_w2(&out.transport.dual.positions, reference, t);
        log::debug!("h = {h:.4}: step {k}, t = {t:.3}, W2 = {w:.3e}");
        series.push((t, w));
    })?;
    let err_h = series.iter().map(|s| s.1).fold(0.0, f64::max);
    Ok(ErrorRow {
        h,
        n,
        err_h,
        runtime_s: start.elapsed().as_secs_f64(),
        w2_series: series,
        max_energy_excess: traj.energy_excess(cfg.tau, cfg.eps, 0.0).into_iter().fold(f64::NEG_INFINITY, f64::max),
        failure: traj.failure,
    })
}

pub fn error_table(h_list: &[f64], t_final: f64) -> Result<ErrorReport> {
    let reference = RadialSolution::benchmark(t_final)?;
    let mut rep = ErrorReport::default();
    for &h in h_list {
        let row = radial_error(h, t_final, &reference)?;
        log::info!("h = {h:.5}: N = {}, err_h = {:.4e} ({:.1}s)", row.n, row.err_h, row.runtime_s);
        rep.rows.push(row);
    }
    Ok(rep)
}
