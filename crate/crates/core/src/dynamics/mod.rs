//! Explicit Euler time stepping of the particle system.

mod init;

pub use init::{grid_initialization, grid_points, halton_points, lloyd_quantization, LloydResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{min_pairwise_distance, CellRegion, DomainGeometry, ParticleSet, Vec2};
use crate::ot::{moreau_yosida, MoreauYosidaResult, NewtonOptions, TransportMode};
use crate::potentials::{KernelSpec, Potential, PotentialSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Move particles that left the domain to their closest point in it.
    #[default]
    ProjectBack,
    Error,
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub mode: TransportMode,
    pub tau: f64,
    pub eps: f64,
    pub t_final: f64,
    pub potential: PotentialSpec,
    pub kernel: Option<KernelSpec>,
    pub boundary_policy: BoundaryPolicy,
    /// Record every `snapshot_stride`-th step (the final step is always kept).
    pub snapshot_stride: usize,
    /// Keep cell geometry and density weights in the recorded frames.
    pub keep_cells: bool,
    pub newton: NewtonOptions,
}

impl FlowConfig {
    /// Defaults tied to a grid spacing: `τ = h/2`, `ε = h`.
    pub fn from_grid_spacing(h: f64, mode: TransportMode, t_final: f64, potential: PotentialSpec) -> Self {
        Self {
            mode,
            tau: 0.5 * h,
            eps: h,
            t_final,
            potential,
            kernel: None,
            boundary_policy: BoundaryPolicy::ProjectBack,
            snapshot_stride: 1,
            keep_cells: false,
            newton: NewtonOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidInput(format!("final time must be non-negative, got {}", self.t_final)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidInput("snapshot stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of Euler steps, `⌈T/τ⌉`.
    pub fn steps(&self) -> usize {
        let r = self.t_final / self.tau;
        let k = r.round();
        if (r - k).abs() <= 1e-9 * r.max(1.0) {
            k as usize
        } else {
            r.ceil() as usize
        }
    }
}

/// State of the system at one recorded step.
#[derive(Debug, Clone)]
pub struct Frame {
    pub step: usize,
    pub t: f64,
    pub positions: Vec<Vec2>,
    pub psi: Vec<f64>,
    pub barycenters: Vec<Vec2>,
    pub energy: f64,
    /// `|x_i^{k+1} - x_i^k| / τ`; zero on the final frame.
    pub speeds: Vec<f64>,
    pub cells: Option<Vec<CellRegion>>,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub frames: Vec<Frame>,
    /// `E^N(X^k)` for every completed step.
    pub energies: Vec<f64>,
    /// `(1/N) Σ_i |v_i^k|²` for every completed step.
    pub mean_sq_speed: Vec<f64>,
    /// Number of particles moved back into the domain.
    pub projections: usize,
    /// Smallest pairwise distance seen along the run.
    pub min_distance: f64,
    /// `∫ (1/ε) Σ_i ∫_{L_i} |y - β_i|² dσ dt`, the quantity whose smallness
    /// drives the convergence of the scheme.
    pub hypothesis_integral: f64,
    pub newton_iterations: usize,
    pub failure: Option<Error>,
}

impl Trajectory {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn last(&self) -> Option<&Frame> {
        self.frames.last()
    }

    /// Per-step energy increase beyond the allowance
    /// `10 τ² (1/ε + L_V + L_W) (1/N) Σ_i |v_i|²`, where `lipschitz` is
    /// `L_V + L_W`; non-positive entries mean the step is admissible.
    pub fn energy_excess(&self, tau: f64, eps: f64, lipschitz: f64) -> Vec<f64> {
        self.energies
            .windows(2)
            .zip(&self.mean_sq_speed)
            .map(|(e, v2)| e[1] - e[0] - 10.0 * tau * tau * (1.0 / eps + lipschitz) * v2)
            .collect()
    }
}

/// `E^N = (1/N) Σ V(x_i) + F_ε(X) + (1/2N²) Σ_{i≠j} W(x_i - x_j)`.
pub fn energy(x: &[Vec2], potential: &Potential, kernel: Option<&KernelSpec>, f_eps: f64) -> Result<f64> {
    let n = x.len() as f64;
    let mut v = 0.0;
    for p in x {
        v += potential.value(p)?;
    }
    Ok(v / n + f_eps + kernel.map_or(0.0, |k| k.energy(x)))
}

/// Velocity field `-∇V(x_i) - (1/N) Σ_j ∇W(x_i - x_j) + (β_i - x_i)/ε`.
pub fn velocities(
    x: &[Vec2],
    potential: &Potential,
    kernel: Option<&KernelSpec>,
    my: &MoreauYosidaResult,
) -> Result<Vec<Vec2>> {
    let mut v = my.force.clone();
    for (vi, xi) in v.iter_mut().zip(x) {
        *vi -= potential.gradient(xi)?;
    }
    if let Some(k) = kernel {
        for (vi, fi) in v.iter_mut().zip(k.forces(x)) {
            *vi += fi;
        }
    }
    Ok(v)
}

/// Output of one explicit Euler step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub transport: MoreauYosidaResult,
    /// Energy at the starting positions.
    pub energy: f64,
    pub projected: usize,
}

/// `x^{k+1} = x^k + τ v(x^k)` followed by the boundary policy.
pub fn euler_step(
    x: &ParticleSet,
    dom: &DomainGeometry,
    cfg: &FlowConfig,
    potential: &Potential,
    warm: Option<&[f64]>,
) -> Result<StepOutput> {
    let my = moreau_yosida(x, dom, cfg.mode, &cfg.newton, warm)?;
    let e = energy(&x.positions, potential, cfg.kernel.as_ref(), my.value)?;
    let v = velocities(&x.positions, potential, cfg.kernel.as_ref(), &my)?;
    let mut next: Vec<Vec2> = x.positions.iter().zip(&v).map(|(p, vi)| p + cfg.tau * vi).collect();
    let projected = apply_boundary(&x.positions, &mut next, dom, cfg.boundary_policy)?;
    Ok(StepOutput { positions: next, velocities: v, transport: my, energy: e, projected })
}

fn apply_boundary(prev: &[Vec2], next: &mut [Vec2], dom: &DomainGeometry, policy: BoundaryPolicy) -> Result<usize> {
    let mut moved = Vec::new();
    for (i, p) in next.iter_mut().enumerate() {
        if dom.contains(p) {
            continue;
        }
        match policy {
            BoundaryPolicy::Error => return Err(Error::LeftDomain(i)),
            BoundaryPolicy::ProjectBack => {
                moved.push((i, *p));
                *p = dom.closest_point(p);
            }
        }
    }
    // a projection onto a corner can land on (or next to) another particle:
    // fall back to the last in-domain point along the step, then shrink
    // towards the start until the particle keeps a fraction of its previous
    // spacing
    for &(i, target) in &moved {
        let spacing = prev
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| (q - prev[i]).norm())
            .fold(f64::INFINITY, f64::min);
        let sep = 1e-3 * spacing;
        let clashes = |q: &Vec2, next: &[Vec2]| next.iter().enumerate().any(|(j, r)| j != i && (r - q).norm() < sep);
        if !clashes(&next[i], next) {
            continue;
        }
        let a = prev[i];
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if dom.contains_tol(&(a + mid * (target - a)), 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut q = a + lo * (target - a);
        for _ in 0..60 {
            if !clashes(&q, next) {
                break;
            }
            lo *= 0.5;
            q = a + lo * (target - a);
        }
        next[i] = q;
        log::warn!("projection of particle {i} ran into another particle; step clipped to {lo:.3}");
    }
    if !moved.is_empty() {
        log::debug!("{} particles projected back into the domain", moved.len());
    }
    Ok(moved.len())
}

/// Runs `⌈T/τ⌉` Euler steps with warm-started transport solves. Numerical
/// failures stop the run and are stored in the returned trajectory.
pub fn run_simulation(x0: &ParticleSet, dom: &DomainGeometry, cfg: &FlowConfig) -> Result<Trajectory> {
    run_simulation_with(x0, dom, cfg, |_, _| {})
}

/// Like [`run_simulation`], calling `observer(step, output)` after every
/// transport solve.
pub fn run_simulation_with(
    x0: &ParticleSet,
    dom: &DomainGeometry,
    cfg: &FlowConfig,
    mut observer: impl FnMut(usize, &StepOutput),
) -> Result<Trajectory> {
    cfg.validate()?;
    let potential = Potential::new(cfg.potential.clone(), dom)?;
    let steps = cfg.steps();
    let mut traj = Trajectory { min_distance: f64::INFINITY, ..Default::default() };
    let mut x = ParticleSet::new(x0.positions.clone(), cfg.eps)?;
    let mut warm: Option<Vec<f64>> = None;
    for k in 0..=steps {
        if let Some((d, _, _)) = min_pairwise_distance(&x.positions) {
            traj.min_distance = traj.min_distance.min(d);
        }
        let out = match euler_step(&x, dom, cfg, &potential, warm.as_deref()) {
            Ok(o) => o,
            Err(e) => {
                log::error!("step {k} failed: {e}");
                traj.failure = Some(e);
                break;
            }
        };
        observer(k, &out);
        let n = x.len() as f64;
        traj.energies.push(out.energy);
        traj.mean_sq_speed.push(out.velocities.iter().map(|v| v.norm_squared()).sum::<f64>() / n);
        traj.newton_iterations += out.transport.dual.iterations;
        let last = k == steps;
        if k % cfg.snapshot_stride == 0 || last {
            let dual = &out.transport.dual;
            traj.frames.push(Frame {
                step: k,
                t: k as f64 * cfg.tau,
                positions: x.positions.clone(),
                psi: dual.psi.clone(),
                barycenters: dual.barycenters.clone(),
                energy: out.energy,
                speeds: if last { vec![0.0; x.len()] } else { out.velocities.iter().map(|v| v.norm()).collect() },
                cells: cfg.keep_cells.then(|| dual.cells.clone()),
                weights: (cfg.keep_cells && cfg.mode == TransportMode::Entropy).then(|| dual.density_weights()),
            });
        }
        if last {
            break;
        }
        traj.hypothesis_integral += cfg.tau * out.transport.dual.second_moments.iter().sum::<f64>() / cfg.eps;
        traj.projections += out.projected;
        warm = Some(out.transport.dual.psi);
        match ParticleSet::new(out.positions, cfg.eps) {
            Ok(p) => x = p,
            Err(e) => {
                log::error!("step {k} produced an invalid configuration: {e}");
                traj.failure = Some(e);
                break;
            }
        }
    }
    log::info!(
        "run finished: {} frames, {} newton iterations, hypothesis integral {:.3e}",
        traj.frames.len(),
        traj.newton_iterations,
        traj.hypothesis_integral
    );
    Ok(traj)
}
