//! Semi-discrete transport between the particles and a density on Ω.
//!
//! Three target problems share one damped Newton solver on the potentials
//! `ψ`, whose Laguerre cells `L_i(ψ)` carry the transported mass:
//!
//! * `Crowd`: projection onto densities bounded by one; the mass of cell `i`
//!   is `|L_i ∩ B(x_i, √ψ_i)|`.
//! * `Entropy`: minimizer of `∫σ log σ + W₂²/(2ε)`; the density on `L_i` is
//!   `exp((ψ_i - |y - x_i|²) / 2ε)`.
//! * `Uniform`: transport to the uniform probability on Ω (quantization).
//!
//! In every mode the dual objective is scaled so that its gradient is
//! `(1/N - m_i) / 2ε`.

mod linalg;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::quadrature::{gaussian_facet_integrals, quadrature_nodes};
use crate::geometry::{gaussian_cell_integrals, min_pairwise_distance, CellRegion, DomainGeometry, ParticleSet, Vec2};
use crate::geometry::power::power_cells;

pub use linalg::{pcg, CgResult, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    Crowd,
    Entropy,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOptions {
    /// Tolerance on `max_i |m_i - 1/N|`; defaults to `1e-9 / N`.
    pub tol: Option<f64>,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Use a dense finite-difference Jacobian instead of the analytic one.
    pub fd_hessian: bool,
    pub cg_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iterations: 100,
            max_halvings: 40,
            fd_hessian: false,
            cg_tol: 1e-10,
        }
    }
}

/// Per-cell quantities at given potentials; moments are with respect to the
/// transported measure σ restricted to the cell, in coordinates centered at
/// the site.
#[derive(Debug, Clone)]
struct CellEval {
    region: CellRegion,
    mass: f64,
    first: Vec2,
    transport: f64,
    /// `(j, c_ij)` with `-c_ij = ∂m_i/∂ψ_j`.
    couplings: Vec<(usize, f64)>,
    /// Diagonal contribution not balanced by couplings.
    extra_diag: f64,
    arc_length: f64,
}

fn evaluate(
    positions: &[Vec2],
    psi: &[f64],
    dom: &DomainGeometry,
    eps: f64,
    mode: TransportMode,
) -> Result<Vec<CellEval>> {
    let regions = power_cells(positions, psi, dom, mode == TransportMode::Crowd);
    let inv_area = 1.0 / dom.total_area();
    regions
        .into_par_iter()
        .map(|region| {
            let i = region.owner;
            let xi = positions[i];
            match mode {
                TransportMode::Crowd | TransportMode::Uniform => {
                    let scale = if mode == TransportMode::Uniform { inv_area } else { 1.0 };
                    let m = region.moments();
                    let first = m.barycenter.map_or(Vec2::zeros(), |b| (b - xi) * m.area);
                    let couplings = region
                        .facets()
                        .into_iter()
                        .map(|f| {
                            let d = (positions[f.neighbor] - xi).norm();
                            (f.neighbor, scale * f.length / (2.0 * d))
                        })
                        .collect();
                    let arc_length = region.arc_length();
                    let extra_diag = if mode == TransportMode::Crowd && psi[i] > 0.0 {
                        arc_length / (2.0 * psi[i].sqrt())
                    } else {
                        0.0
                    };
                    Ok(CellEval {
                        mass: scale * m.area,
                        first: scale * first,
                        transport: scale * m.origin_second_moment,
                        couplings,
                        extra_diag,
                        arc_length,
                        region,
                    })
                }
                TransportMode::Entropy => {
                    let g = gaussian_cell_integrals(&region, &xi, psi[i], eps)?;
                    let couplings = gaussian_facet_integrals(&region, &xi, psi[i], eps)
                        .into_iter()
                        .map(|(j, gij)| (j, gij / (2.0 * (positions[j] - xi).norm())))
                        .collect();
                    Ok(CellEval {
                        mass: g.mass,
                        first: g.first,
                        transport: g.second,
                        couplings,
                        extra_diag: g.mass / (2.0 * eps),
                        arc_length: 0.0,
                        region,
                    })
                }
            }
        })
        .collect()
}

fn dual_value(mode: TransportMode, eps: f64, psi: &[f64], cells: &[CellEval]) -> f64 {
    let n = psi.len() as f64;
    let spsi: f64 = psi.iter().sum::<f64>() / n;
    match mode {
        TransportMode::Crowd | TransportMode::Uniform => {
            let s: f64 = cells.iter().zip(psi).map(|(c, p)| c.transport - p * c.mass).sum();
            (s + spsi) / (2.0 * eps)
        }
        TransportMode::Entropy => {
            let total: f64 = cells.iter().map(|c| c.mass).sum();
            spsi / (2.0 * eps) - total + 1.0
        }
    }
}

fn gradient(eps: f64, cells: &[CellEval]) -> Vec<f64> {
    let inv_n = 1.0 / cells.len() as f64;
    cells.iter().map(|c| (inv_n - c.mass) / (2.0 * eps)).collect()
}

/// Dual objective `D(ψ)` and its gradient in the given mode.
pub fn dual_objective(
    mode: TransportMode,
    particles: &ParticleSet,
    psi: &[f64],
    dom: &DomainGeometry,
) -> Result<(f64, Vec<f64>)> {
    check_particles(particles, psi.len())?;
    let cells = evaluate(&particles.positions, psi, dom, particles.eps, mode)?;
    Ok((dual_value(mode, particles.eps, psi, &cells), gradient(particles.eps, &cells)))
}

/// `D(ψ) = (1/2ε)[Σ_i ∫_{L_i∩B_i} (|y-x_i|² - ψ_i) dy + Σ_i ψ_i/N]`, concave,
/// with `∂D/∂ψ_i = (1/N - |L_i ∩ B_i|) / 2ε`.
pub fn dual_objective_crowd(particles: &ParticleSet, psi: &[f64], dom: &DomainGeometry) -> Result<(f64, Vec<f64>)> {
    dual_objective(TransportMode::Crowd, particles, psi, dom)
}

/// `D(ψ) = (1/2ε) Σ_i ψ_i/N - Σ_i m_i(ψ) + 1` where `m_i` is the Gaussian
/// mass of `L_i`; `∂D/∂ψ_i = (1/N - m_i) / 2ε`.
pub fn dual_objective_entropy(particles: &ParticleSet, psi: &[f64], dom: &DomainGeometry) -> Result<(f64, Vec<f64>)> {
    dual_objective(TransportMode::Entropy, particles, psi, dom)
}

fn check_particles(particles: &ParticleSet, n_psi: usize) -> Result<()> {
    if particles.positions.is_empty() {
        return Err(Error::InvalidInput("particle set is empty".into()));
    }
    if particles.positions.len() != n_psi {
        return Err(Error::InvalidInput(format!(
            "{} particles but {} potentials",
            particles.positions.len(),
            n_psi
        )));
    }
    if !(particles.eps > 0.0 && particles.eps.is_finite()) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {}", particles.eps)));
    }
    crate::geometry::domain_check_distinct(&particles.positions)
}

/// Converged potentials and the per-cell summaries of the transported
/// measure σ.
#[derive(Debug, Clone)]
pub struct DualState {
    pub mode: TransportMode,
    pub eps: f64,
    pub positions: Vec<Vec2>,
    pub psi: Vec<f64>,
    pub cell_masses: Vec<f64>,
    /// `β_i`, barycenter of σ restricted to cell `i`.
    pub barycenters: Vec<Vec2>,
    /// `∫_{L_i} |y - β_i|² dσ`.
    pub second_moments: Vec<f64>,
    /// `∫_{L_i} |y - x_i|² dσ`.
    pub transport_costs: Vec<f64>,
    pub arc_lengths: Vec<f64>,
    pub cells: Vec<CellRegion>,
    pub iterations: usize,
    pub residual: f64,
}

impl DualState {
    fn from_cells(
        mode: TransportMode,
        eps: f64,
        positions: &[Vec2],
        psi: Vec<f64>,
        cells: Vec<CellEval>,
        iterations: usize,
    ) -> Self {
        let residual = max_residual(&cells);
        let mut st = DualState {
            mode,
            eps,
            positions: positions.to_vec(),
            psi,
            cell_masses: Vec::with_capacity(cells.len()),
            barycenters: Vec::with_capacity(cells.len()),
            second_moments: Vec::with_capacity(cells.len()),
            transport_costs: Vec::with_capacity(cells.len()),
            arc_lengths: Vec::with_capacity(cells.len()),
            cells: Vec::with_capacity(cells.len()),
            iterations,
            residual,
        };
        for (c, x) in cells.into_iter().zip(positions) {
            let b = if c.mass > 0.0 { c.first / c.mass } else { Vec2::zeros() };
            st.cell_masses.push(c.mass);
            st.barycenters.push(x + b);
            st.second_moments.push((c.transport - c.mass * b.norm_squared()).max(0.0));
            st.transport_costs.push(c.transport);
            st.arc_lengths.push(c.arc_length);
            st.cells.push(c.region);
        }
        st
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// `W₂²(σ, μ_X) = Σ_i ∫_{L_i} |y - x_i|² dσ`.
    pub fn w2_squared(&self) -> f64 {
        self.transport_costs.iter().sum()
    }

    /// Kantorovich potential `φ(y)` on Ω implied by `ψ`.
    pub fn phi(&self, y: &Vec2) -> f64 {
        let m = self
            .positions
            .iter()
            .zip(&self.psi)
            .map(|(x, p)| (y - x).norm_squared() - p)
            .fold(f64::INFINITY, f64::min);
        match self.mode {
            TransportMode::Crowd => m.min(0.0),
            _ => m,
        }
    }

    /// Pressure proxy per particle: `-φ/ε` at the site for crowd motion,
    /// `log σ` at the site for diffusion.
    pub fn pressure(&self) -> Vec<f64> {
        self.positions
            .iter()
            .map(|x| match self.mode {
                TransportMode::Entropy => -self.phi(x) / (2.0 * self.eps),
                _ => -self.phi(x) / self.eps,
            })
            .collect()
    }

    /// Cell coloring weights `exp(-(|β_i - x_i|² + ψ_i) / 2ε)`.
    pub fn density_weights(&self) -> Vec<f64> {
        self.positions
            .iter()
            .zip(&self.barycenters)
            .zip(&self.psi)
            .map(|((x, b), p)| (-((b - x).norm_squared() + p) / (2.0 * self.eps)).exp())
            .collect()
    }
}

fn max_residual(cells: &[CellEval]) -> f64 {
    let inv_n = 1.0 / cells.len() as f64;
    cells.iter().map(|c| (c.mass - inv_n).abs()).fold(0.0, f64::max)
}

fn initial_psi(mode: TransportMode, n: usize, eps: f64) -> f64 {
    let nf = n as f64;
    match mode {
        TransportMode::Crowd => 1.0 / (nf * std::f64::consts::PI),
        TransportMode::Entropy => 2.0 * eps * (1.0 / (2.0 * std::f64::consts::PI * eps * nf)).ln(),
        TransportMode::Uniform => 0.0,
    }
}

/// Symmetrized analytic Jacobian `∂m/∂ψ`.
fn assemble_jacobian(mode: TransportMode, cells: &[CellEval]) -> CsrMatrix {
    let n = cells.len();
    let mut diag: Vec<f64> = cells.iter().map(|c| c.extra_diag).collect();
    let mut t = Vec::with_capacity(n * 8);
    for (i, c) in cells.iter().enumerate() {
        for &(j, cij) in &c.couplings {
            let h = 0.5 * cij;
            t.push((i, j, -h));
            t.push((j, i, -h));
            diag[i] += h;
            diag[j] += h;
        }
    }
    if mode != TransportMode::Entropy {
        let reg = 1e-12 * diag.iter().copied().fold(0.0, f64::max);
        diag.iter_mut().for_each(|d| *d += reg);
    }
    t.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
    CsrMatrix::from_triplets(n, t)
}

/// Dense central-difference Jacobian of the masses.
fn fd_jacobian(
    positions: &[Vec2],
    psi: &[f64],
    dom: &DomainGeometry,
    eps: f64,
    mode: TransportMode,
) -> Result<nalgebra::DMatrix<f64>> {
    let n = psi.len();
    let scale = psi.iter().map(|p| p.abs()).fold(1.0 / n as f64, f64::max);
    let h = 1e-6 * scale;
    let mut jac = nalgebra::DMatrix::zeros(n, n);
    let mut p = psi.to_vec();
    for j in 0..n {
        p[j] = psi[j] + h;
        let plus = evaluate(positions, &p, dom, eps, mode)?;
        p[j] = psi[j] - h;
        let minus = evaluate(positions, &p, dom, eps, mode)?;
        p[j] = psi[j];
        for i in 0..n {
            jac[(i, j)] = (plus[i].mass - minus[i].mass) / (2.0 * h);
        }
    }
    Ok(jac)
}

fn newton_direction(
    mode: TransportMode,
    opts: &NewtonOptions,
    positions: &[Vec2],
    psi: &[f64],
    dom: &DomainGeometry,
    eps: f64,
    cells: &[CellEval],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = psi.len();
    if opts.fd_hessian {
        let jac = fd_jacobian(positions, psi, dom, eps, mode)?;
        let b = nalgebra::DVector::from_column_slice(rhs);
        let svd = jac.svd(true, true);
        let x = svd
            .solve(&b, 1e-12 * svd.singular_values.max())
            .map_err(|e| Error::InvalidInput(format!("finite-difference Jacobian solve failed: {e}")))?;
        return Ok(x.iter().copied().collect());
    }
    let jac = assemble_jacobian(mode, cells);
    let sol = pcg(&jac, rhs, opts.cg_tol, 20 * n + 100);
    log::trace!("cg: {} iterations, relative residual {:e}", sol.iterations, sol.relative_residual);
    Ok(sol.x)
}

/// Damped Newton iteration on the potentials `ψ` so that every cell
/// receives mass `1/N`. `warm` provides a starting point; the cold start is
/// used when it leaves some cell empty.
pub fn newton_solve(
    particles: &ParticleSet,
    dom: &DomainGeometry,
    mode: TransportMode,
    opts: &NewtonOptions,
    warm: Option<&[f64]>,
) -> Result<DualState> {
    let n = particles.positions.len();
    check_particles(particles, n)?;
    let eps = particles.eps;
    let x = &particles.positions;
    let tol = opts.tol.unwrap_or(1e-9 / n as f64);
    let mut opts = opts.clone();
    if let Some((d, i, j)) = min_pairwise_distance(x) {
        if d < 1e-10 * dom.diameter() {
            log::warn!("particles {i} and {j} are nearly coincident (distance {d:e})");
            if n <= 200 {
                opts.fd_hessian = true;
            }
        }
    }

    let cold = vec![initial_psi(mode, n, eps); n];
    let mut psi = match warm {
        Some(w) if w.len() == n && w.iter().all(|p| p.is_finite()) => w.to_vec(),
        _ => cold.clone(),
    };
    let mut cells = evaluate(x, &psi, dom, eps, mode)?;
    if cells.iter().any(|c| !(c.mass > 0.0)) && psi != cold {
        log::debug!("warm start leaves an empty cell, restarting from the cold guess");
        psi = cold;
        cells = evaluate(x, &psi, dom, eps, mode)?;
    }
    if let Some(i) = cells.iter().position(|c| !(c.mass > 0.0)) {
        return Err(Error::EmptyCell(i));
    }
    let inv_n = 1.0 / n as f64;
    let min_mass = cells.iter().map(|c| c.mass).fold(f64::INFINITY, f64::min);
    let eps_damp = 0.5 * min_mass.min(inv_n);

    for it in 0..=opts.max_iterations {
        let r: Vec<f64> = cells.iter().map(|c| c.mass - inv_n).collect();
        let rmax = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
        log::debug!("newton {it}: max residual {rmax:e}");
        if rmax <= tol {
            return Ok(DualState::from_cells(mode, eps, x, psi, cells, it));
        }
        if it == opts.max_iterations {
            return Err(Error::NoConvergence { iterations: it, residual: rmax });
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = newton_direction(mode, &opts, x, &psi, dom, eps, &cells, &rhs)?;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = psi.iter().zip(&delta).map(|(p, d)| p + step * d).collect();
            let ev = evaluate(x, &cand, dom, eps, mode)?;
            let cmin = ev.iter().map(|c| c.mass).fold(f64::INFINITY, f64::min);
            let cnorm = ev.iter().map(|c| (c.mass - inv_n).powi(2)).sum::<f64>().sqrt();
            if cmin >= eps_damp && cnorm <= (1.0 - 0.5 * step) * rnorm {
                accepted = Some((cand, ev));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((p, ev)) => {
                psi = p;
                cells = ev;
            }
            None => return Err(Error::DampingFailed(opts.max_halvings)),
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Value and gradient of the Moreau–Yosida regularization `F_ε` at the
/// particle positions.
#[derive(Debug, Clone)]
pub struct MoreauYosidaResult {
    /// `F_ε(X)`, the dual objective at the converged potentials.
    pub value: f64,
    /// Primal value evaluated from the same transported measure.
    pub primal: f64,
    /// Per-particle velocity contribution `(β_i - x_i) / ε`.
    pub force: Vec<Vec2>,
    pub dual: DualState,
}

impl MoreauYosidaResult {
    /// `∇_{x_i} F_ε = (1/N)(x_i - β_i)/ε`.
    pub fn gradient(&self) -> Vec<Vec2> {
        let n = self.force.len() as f64;
        self.force.iter().map(|f| -f / n).collect()
    }

    /// `|primal - dual| / max(|primal|, tiny)`.
    pub fn duality_gap(&self) -> f64 {
        (self.primal - self.value).abs() / self.primal.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn moreau_yosida(
    particles: &ParticleSet,
    dom: &DomainGeometry,
    mode: TransportMode,
    opts: &NewtonOptions,
    warm: Option<&[f64]>,
) -> Result<MoreauYosidaResult> {
    let dual = newton_solve(particles, dom, mode, opts, warm)?;
    let eps = particles.eps;
    let n = dual.len() as f64;
    let spsi: f64 = dual.psi.iter().sum::<f64>() / n;
    let value = match mode {
        TransportMode::Crowd | TransportMode::Uniform => {
            let s: f64 = dual
                .transport_costs
                .iter()
                .zip(&dual.psi)
                .zip(&dual.cell_masses)
                .map(|((t, p), m)| t - p * m)
                .sum();
            (s + spsi) / (2.0 * eps)
        }
        TransportMode::Entropy => spsi / (2.0 * eps) - dual.cell_masses.iter().sum::<f64>() + 1.0,
    };
    let primal = match mode {
        TransportMode::Crowd | TransportMode::Uniform => dual.w2_squared() / (2.0 * eps),
        TransportMode::Entropy => dual.psi.iter().zip(&dual.cell_masses).map(|(p, m)| p * m).sum::<f64>() / (2.0 * eps),
    };
    let force = dual
        .barycenters
        .iter()
        .zip(&dual.positions)
        .map(|(b, x)| (b - x) / eps)
        .collect();
    Ok(MoreauYosidaResult { value, primal, force, dual })
}

/// Result of sampling the optimality conditions of a converged dual state.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplementarityReport {
    pub samples: usize,
    /// Crowd: `max(φ, 0)` and `|φ (1 - σ)|` over samples, plus `max(φ_raw, 0)`
    /// on the support of σ. Otherwise: `|φ/2ε + log σ|` at quadrature nodes.
    pub max_violation: f64,
    /// Samples strictly inside more than one cell (crowd only).
    pub overlaps: usize,
    pub total_mass: f64,
}

/// Samples the complementarity relations on a `per_axis × per_axis` grid
/// over the bounding box (crowd) or at the quadrature nodes of every cell.
pub fn check_complementarity(dual: &DualState, dom: &DomainGeometry, per_axis: usize) -> ComplementarityReport {
    let total_mass = dual.cell_masses.iter().sum();
    let raw_phi = |y: &Vec2| {
        dual.positions
            .iter()
            .zip(&dual.psi)
            .map(|(x, p)| (y - x).norm_squared() - p)
            .fold(f64::INFINITY, f64::min)
    };
    match dual.mode {
        TransportMode::Crowd => {
            let (lo, hi) = dom.bbox();
            // samples exactly on a shared facet belong to both closed cells,
            // or to neither after rounding
            let strict = -1e-12 * dom.diameter();
            let m = per_axis.max(2);
            let mut pts = Vec::with_capacity(m * m);
            for a in 0..m {
                for b in 0..m {
                    let y = Vec2::new(
                        lo.x + (hi.x - lo.x) * (a as f64 + 0.5) / m as f64,
                        lo.y + (hi.y - lo.y) * (b as f64 + 0.5) / m as f64,
                    );
                    if dom.contains(&y) {
                        pts.push(y);
                    }
                }
            }
            let per_sample: Vec<(f64, bool)> = pts
                .par_iter()
                .map(|y| {
                    let raw = raw_phi(y);
                    let phi = raw.min(0.0);
                    let owners = dual.cells.iter().filter(|c| c.contains(y, -strict)).count();
                    let sigma = if owners > 0 { 1.0 } else { 0.0 };
                    let mut v = phi.max(0.0).max((phi * (1.0 - sigma)).abs());
                    if sigma == 1.0 {
                        v = v.max(raw);
                    }
                    let overlap = owners > 1 && dual.cells.iter().filter(|c| c.contains(y, strict)).count() > 1;
                    (v, overlap)
                })
                .collect();
            ComplementarityReport {
                samples: pts.len(),
                max_violation: per_sample.iter().map(|s| s.0).fold(0.0, f64::max),
                overlaps: per_sample.iter().filter(|s| s.1).count(),
                total_mass,
            }
        }
        TransportMode::Entropy | TransportMode::Uniform => {
            let per_cell: Vec<(usize, f64)> = dual
                .cells
                .par_iter()
                .map(|cell| {
                    let i = cell.owner;
                    let xi = dual.positions[i];
                    let nodes = quadrature_nodes(cell);
                    let v = nodes
                        .iter()
                        .map(|y| {
                            let own = (y - xi).norm_squared() - dual.psi[i];
                            // φ/2ε + log σ with σ = exp(-own/2ε) on the owning cell
                            ((raw_phi(y) - own) / (2.0 * dual.eps)).abs()
                        })
                        .fold(0.0, f64::max);
                    (nodes.len(), v)
                })
                .collect();
            ComplementarityReport {
                samples: per_cell.iter().map(|c| c.0).sum(),
                max_violation: per_cell.iter().map(|c| c.1).fold(0.0, f64::max),
                overlaps: 0,
                total_mass,
            }
        }
    }
}

/// Straight facet lengths `|Γ_ij|` of every cell of a dual state.
pub fn facet_lengths(dual: &DualState) -> Vec<Vec<(usize, f64)>> {
    dual.cells
        .iter()
        .map(|c| c.facets().into_iter().map(|f| (f.neighbor, f.length)).collect())
        .collect()
}
