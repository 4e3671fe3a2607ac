//! Exact one-dimensional versions of the crowd projection and the entropic
//! dual, plus the pressure bounds they satisfy.

use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::ops::Range;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};
use crate::geometry::quadrature::normal_cdf_diff;
use crate::ot::TransportMode;

/// Particles on the interval `[a, b]`, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Particles1D {
    positions: Vec<f64>,
    eps: f64,
    a: f64,
    b: f64,
}

impl Particles1D {
    pub fn new(positions: Vec<f64>, eps: f64, interval: (f64, f64)) -> Result<Self> {
        let (a, b) = interval;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidDomain(format!("bad interval [{a}, {b}]")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        if positions.is_empty() {
            return Err(Error::InvalidInput("particle set is empty".into()));
        }
        if let Some(i) = positions.iter().position(|x| !(*x >= a && *x <= b)) {
            return Err(Error::OutsideDomain(positions[i], 0.0));
        }
        if let Some(i) = positions.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(if positions[i] == positions[i + 1] {
                Error::CoincidentPoints(i, i + 1)
            } else {
                Error::InvalidInput(format!("positions must be sorted (index {i})"))
            });
        }
        Ok(Self { positions, eps, a, b })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// A maximal saturated interval `[start, start + length]` of the projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub start: f64,
    pub length: f64,
    pub members: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Clusters1D {
    pub clusters: Vec<Cluster>,
}

/// Projection of the empirical measure onto densities bounded by one.
#[derive(Debug, Clone, PartialEq)]
pub struct CrowdProjection1D {
    pub clusters: Clusters1D,
    /// Left endpoint of each particle's cell; the cell has length `1/N`.
    pub cell_starts: Vec<f64>,
    pub barycenters: Vec<f64>,
    /// `W₂²(μ_N, σ_N)`.
    pub cost: f64,
}

/// Exact projection by pooling adjacent violators on
/// `y_i = x_i - (i + 1/2)/N`, clamped to `[a, b - 1]`.
pub fn project_crowd_1d(p: &Particles1D) -> Result<CrowdProjection1D> {
    let (a, b) = p.interval();
    if b - a < 1.0 {
        return Err(Error::InfeasibleDomain(b - a));
    }
    let n = p.len();
    let h = 1.0 / n as f64;
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(n);
    for (i, x) in p.positions().iter().enumerate() {
        blocks.push((x - (i as f64 + 0.5) * h, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 >= s1 / c1 as f64 {
                blocks.pop();
                *blocks.last_mut().unwrap() = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut first = 0;
    for (s, c) in blocks {
        let w = (s / c as f64).clamp(a, b - 1.0);
        let start = w + first as f64 * h;
        match clusters.last_mut() {
            // clamped blocks end up touching
            Some(last) if last.start + last.members.len() as f64 * h >= start => {
                last.members.end = first + c;
                last.length = last.members.len() as f64 * h;
            }
            _ => clusters.push(Cluster { start, length: c as f64 * h, members: first..first + c }),
        }
        first += c;
    }
    let mut cell_starts = vec![0.0; n];
    for cl in &clusters {
        for (k, i) in cl.members.clone().enumerate() {
            cell_starts[i] = cl.start + k as f64 * h;
        }
    }
    let barycenters: Vec<f64> = cell_starts.iter().map(|l| l + 0.5 * h).collect();
    let cost = p
        .positions()
        .iter()
        .zip(&cell_starts)
        .map(|(x, l)| interval_second_moment(*l, l + h, *x))
        .sum();
    Ok(CrowdProjection1D { clusters: Clusters1D { clusters }, cell_starts, barycenters, cost })
}

/// `∫_l^r (y - c)² dy`.
fn interval_second_moment(l: f64, r: f64, c: f64) -> f64 {
    ((r - c).powi(3) - (l - c).powi(3)) / 3.0
}

/// `(1/ε²) Σ_i ∫_{L_i} (y - β_i)² dy` with `ε = 1/N`; identically `1/12`.
pub fn verify_crowd_bound(p: &Particles1D) -> Result<f64> {
    let proj = project_crowd_1d(p)?;
    let n = p.len() as f64;
    let h = 1.0 / n;
    let s: f64 = proj
        .cell_starts
        .iter()
        .zip(&proj.barycenters)
        .map(|(l, beta)| interval_second_moment(*l, l + h, *beta))
        .sum();
    Ok(s * n * n)
}

/// `Q(x)/φ(x)` for `x ≥ 0` (upper-tail Mills ratio).
fn mills_ratio(x: f64) -> f64 {
    if x < 25.0 {
        0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2) * (2.0 * PI).sqrt() * (0.5 * x * x).exp()
    } else {
        let mut f = x;
        for k in (1..=60).rev() {
            f = x + k as f64 / f;
        }
        1.0 / f
    }
}

/// Moments of `exp(-(y-x)²/2ε)` over `[lo, hi]`, each scaled by
/// `exp(-shift)` where `shift` is returned, so that far tails stay finite.
#[derive(Debug, Clone, Copy)]
struct GaussPiece {
    /// `∫ exp(-(y-x)²/2ε) dy · exp(shift)`
    mass: f64,
    /// `∫ (y - x) ... dy · exp(shift)`
    first: f64,
    /// `∫ (y - x)² ... dy · exp(shift)`
    second: f64,
    /// Density `exp(-(y-x)²/2ε) · exp(shift)` at `hi`.
    at_hi: f64,
    shift: f64,
}

fn gauss_piece(lo: f64, hi: f64, x: f64, eps: f64) -> GaussPiece {
    let se = eps.sqrt();
    let (mut za, mut zb) = ((lo - x) / se, (hi - x) / se);
    // reflect so that the interval does not lie in the left tail
    let flip = zb <= 0.0;
    if flip {
        (za, zb) = (-zb, -za);
    }
    let shift = if za > 0.0 { 0.5 * za * za } else { 0.0 };
    let (ea, eb) = ((shift - 0.5 * za * za).exp(), (shift - 0.5 * zb * zb).exp());
    // closed forms cancel catastrophically on cells much shorter than the
    // local decay length of the Gaussian
    if (zb - za) * za.max(1.0) <= 1.0 {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        let rule = RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(24).expect("nonzero")));
        let w = |z: f64| (shift - 0.5 * z * z).exp();
        let mass = se * rule.integrate(za, zb, w);
        let first = eps * rule.integrate(za, zb, |z| z * w(z));
        let second = eps * se * rule.integrate(za, zb, |z| z * z * w(z));
        return if flip {
            GaussPiece { mass, first: -first, second, at_hi: ea, shift }
        } else {
            GaussPiece { mass, first, second, at_hi: eb, shift }
        };
    }
    let (mass, shift, ea, eb) = if za > 0.0 {
        let shift = 0.5 * za * za;
        let r = (-0.5 * (zb - za) * (zb + za)).exp();
        let m = se * (mills_ratio(za) - r * mills_ratio(zb)).max(0.0);
        (m, shift, 1.0, r)
    } else {
        let m = (2.0 * PI * eps).sqrt() * normal_cdf_diff(za, zb);
        (m, 0.0, (-0.5 * za * za).exp(), (-0.5 * zb * zb).exp())
    };
    // moments in the reflected frame, then map back
    let first = eps * (ea - eb);
    let second = eps * mass + eps * se * (za * ea - zb * eb);
    if flip {
        GaussPiece { mass, first: -first, second, at_hi: ea, shift }
    } else {
        GaussPiece { mass, first, second, at_hi: eb, shift }
    }
}

/// Variance of `N(x, ε)` conditioned on `[lo, hi]`; never exceeds `ε`.
pub fn truncated_gaussian_variance(lo: f64, hi: f64, x: f64, eps: f64) -> f64 {
    let g = gauss_piece(lo, hi, x, eps);
    if !(g.mass > 0.0) {
        // interval too thin to resolve: uniform limit
        return (hi - lo).powi(2) / 12.0;
    }
    let mean = g.first / g.mass;
    (g.second / g.mass - mean * mean).max(0.0)
}

/// Converged entropic dual on an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyDual1D {
    pub psi: Vec<f64>,
    /// `N + 1` cell endpoints, `a = e_0 ≤ e_1 ≤ … ≤ e_N = b`.
    pub boundaries: Vec<f64>,
    pub masses: Vec<f64>,
    pub barycenters: Vec<f64>,
    /// `∫_{L_i} (y - β_i)² σ(y) dy`.
    pub spreads: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

struct Eval1D {
    bounds: Vec<f64>,
    masses: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
    /// `c_k` couples cells `k` and `k+1`.
    couplings: Vec<f64>,
}

/// `diff[k] = ψ_k - ψ_{k+1}` is carried separately from `psi`: on close
/// pairs the cell boundary is far more sensitive to it than the rounding
/// of `psi` itself allows.
fn evaluate_1d(p: &Particles1D, psi: &[f64], diff: &[f64]) -> Option<Eval1D> {
    let x = p.positions();
    let n = x.len();
    let eps = p.eps();
    let (a, b) = p.interval();
    let mut bounds = Vec::with_capacity(n + 1);
    bounds.push(a);
    for k in 0..n - 1 {
        let d = x[k + 1] - x[k];
        let e = 0.5 * (x[k] + x[k + 1]) + diff[k] / (2.0 * d);
        bounds.push(e.clamp(a, b));
    }
    bounds.push(b);
    if bounds.windows(2).any(|w| w[1] < w[0]) {
        return None;
    }
    let mut masses = vec![0.0; n];
    let mut first = vec![0.0; n];
    let mut second = vec![0.0; n];
    let mut at_hi = vec![0.0; n];
    for i in 0..n {
        let g = gauss_piece(bounds[i], bounds[i + 1], x[i], eps);
        let scale = (psi[i] / (2.0 * eps) - g.shift).exp();
        masses[i] = g.mass * scale;
        first[i] = g.first * scale;
        second[i] = g.second * scale;
        at_hi[i] = g.at_hi * scale;
    }
    let couplings = (0..n - 1)
        .map(|k| {
            let e = bounds[k + 1];
            if e <= a || e >= b {
                0.0
            } else {
                at_hi[k] / (2.0 * (x[k + 1] - x[k]))
            }
        })
        .collect();
    if masses.iter().chain(&first).chain(&second).any(|v| !v.is_finite()) {
        return None;
    }
    Some(Eval1D { bounds, masses, first, second, couplings })
}

/// Solves the symmetric tridiagonal system with diagonal `d` and
/// off-diagonal `-c`.
fn solve_tridiagonal(d: &[f64], c: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut denom = d[0];
    dp[0] = rhs[0] / denom;
    for i in 1..n {
        cp[i - 1] = -c[i - 1] / denom;
        denom = d[i] + c[i - 1] * cp[i - 1];
        dp[i] = (rhs[i] + c[i - 1] * dp[i - 1]) / denom;
    }
    let mut x = dp;
    for i in (0..n - 1).rev() {
        x[i] -= cp[i] * x[i + 1];
    }
    x
}

/// Damped Newton on the entropic dual with error-function cell masses.
pub fn entropy_dual_1d(p: &Particles1D) -> Result<EntropyDual1D> {
    let n = p.len();
    let eps = p.eps();
    let inv_n = 1.0 / n as f64;
    let tol = 1e-12 * inv_n;
    let (max_iter, max_halvings) = (100, 40);
    let mut psi = vec![2.0 * eps * (inv_n / (2.0 * PI * eps).sqrt()).ln(); n];
    let mut diff = vec![0.0; n - 1];
    let mut ev = evaluate_1d(p, &psi, &diff).ok_or(Error::NonFinite("initial entropic masses"))?;
    if let Some(i) = ev.masses.iter().position(|m| !(*m > 0.0)) {
        return Err(Error::EmptyCell(i));
    }
    let eps_damp = 0.5 * ev.masses.iter().copied().fold(inv_n, f64::min);
    for it in 0..=max_iter {
        let r: Vec<f64> = ev.masses.iter().map(|m| m - inv_n).collect();
        let rmax = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if rmax <= tol {
            let barycenters: Vec<f64> = (0..n).map(|i| p.positions()[i] + ev.first[i] / ev.masses[i]).collect();
            let spreads = (0..n)
                .map(|i| {
                    let shift = ev.first[i] / ev.masses[i];
                    (ev.second[i] - ev.masses[i] * shift * shift).max(0.0)
                })
                .collect();
            return Ok(EntropyDual1D {
                psi,
                boundaries: ev.bounds,
                masses: ev.masses,
                barycenters,
                spreads,
                iterations: it,
                residual: rmax,
            });
        }
        if it == max_iter {
            return Err(Error::NoConvergence { iterations: it, residual: rmax });
        }
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let left = if i > 0 { ev.couplings[i - 1] } else { 0.0 };
                let right = if i + 1 < n { ev.couplings[i] } else { 0.0 };
                ev.masses[i] / (2.0 * eps) + left + right
            })
            .collect();
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = solve_tridiagonal(&diag, &ev.couplings, &rhs);
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=max_halvings {
            let cand: Vec<f64> = psi.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
            let cand_diff: Vec<f64> =
                diff.iter().zip(delta.windows(2)).map(|(a, w)| a + step * (w[0] - w[1])).collect();
            if let Some(e) = evaluate_1d(p, &cand, &cand_diff) {
                let cmin = e.masses.iter().copied().fold(f64::INFINITY, f64::min);
                let cnorm = e.masses.iter().map(|m| (m - inv_n).powi(2)).sum::<f64>().sqrt();
                if cmin >= eps_damp && cnorm <= (1.0 - 0.5 * step) * rnorm {
                    accepted = Some((cand, cand_diff, e));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((c, cd, e)) => {
                psi = c;
                diff = cd;
                ev = e;
            }
            None => return Err(Error::DampingFailed(max_halvings)),
        }
    }
    unreachable!("loop returns on its last iteration")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionBound {
    /// `Σ_i ∫_{L_i} (y - β_i)² σ_N(y) dy`
    pub lhs: f64,
    /// `(3/2) |Ω| √ε / N`
    pub bound: f64,
}

impl DiffusionBound {
    pub fn holds(&self) -> bool {
        self.lhs <= self.bound
    }
}

pub fn verify_diffusion_bound(p: &Particles1D) -> Result<DiffusionBound> {
    let dual = entropy_dual_1d(p)?;
    let (a, b) = p.interval();
    Ok(DiffusionBound {
        lhs: dual.spreads.iter().sum(),
        bound: 1.5 * (b - a) * p.eps().sqrt() / p.len() as f64,
    })
}

/// Trajectory of a one-dimensional particle flow.
#[derive(Debug, Clone, Default)]
pub struct Flow1D {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    /// `(1/ε) Σ_k τ W₂²(σ_N^k, (1/N) Σ δ_{β_i^k})`.
    pub hypothesis_integral: f64,
}

/// Explicit Euler flow `ẋ_i = -V'(x_i) + (β_i - x_i)/ε` with the exact 1D
/// projection (crowd) or entropic dual (entropy). Positions are clamped to
/// the interval and kept sorted.
pub fn run_flow_1d(
    x0: &Particles1D,
    mode: TransportMode,
    tau: f64,
    t_final: f64,
    grad_v: impl Fn(f64) -> f64,
) -> Result<Flow1D> {
    if !(tau > 0.0 && tau.is_finite() && t_final >= 0.0) {
        return Err(Error::InvalidInput(format!("bad time stepping tau = {tau}, T = {t_final}")));
    }
    if mode == TransportMode::Uniform {
        return Err(Error::InvalidInput("uniform mode has no 1D flow".into()));
    }
    let steps = (t_final / tau - 1e-9).ceil().max(0.0) as usize;
    let eps = x0.eps();
    let (a, b) = x0.interval();
    let mut p = x0.clone();
    let mut out = Flow1D::default();
    for k in 0..=steps {
        out.times.push(k as f64 * tau);
        out.positions.push(p.positions().to_vec());
        if k == steps {
            break;
        }
        let (beta, spread) = match mode {
            TransportMode::Crowd => {
                let proj = project_crowd_1d(&p)?;
                let n = p.len() as f64;
                (proj.barycenters, 1.0 / (12.0 * n * n))
            }
            _ => {
                let d = entropy_dual_1d(&p)?;
                let s = d.spreads.iter().sum();
                (d.barycenters, s)
            }
        };
        out.hypothesis_integral += tau * spread / eps;
        let mut next: Vec<f64> = p
            .positions()
            .iter()
            .zip(&beta)
            .map(|(x, bt)| (x + tau * (-grad_v(*x) + (bt - x) / eps)).clamp(a, b))
            .collect();
        next.sort_by(f64::total_cmp);
        p = Particles1D::new(next, eps, (a, b))?;
    }
    log::info!(
        "1D {mode:?} flow: N = {}, eps = {eps:e}, hypothesis integral {:.4e}",
        p.len(),
        out.hypothesis_integral
    );
    Ok(out)
}
