use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::oned::{truncated_gaussian_variance, verify_crowd_bound, verify_diffusion_bound, Particles1D};

/// Allowed deviation of the crowd quantity from `1/12`.
pub const CROWD_IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct CrowdCase {
    pub n: usize,
    pub length: f64,
    pub value: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffusionCase {
    pub n: usize,
    pub eps: f64,
    pub length: f64,
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Bounds1DReport {
    pub seed: u64,
    pub crowd: Vec<CrowdCase>,
    pub crowd_max_deviation: f64,
    pub crowd_pass: bool,
    pub diffusion: Vec<DiffusionCase>,
    /// Largest `lhs / bound`.
    pub diffusion_max_ratio: f64,
    pub diffusion_pass: bool,
    pub lemma_samples: usize,
    /// Largest truncated variance divided by `ε`.
    pub lemma_max_ratio: f64,
    pub lemma_pass: bool,
}

impl Bounds1DReport {
    pub fn pass(&self) -> bool {
        self.crowd_pass && self.diffusion_pass && self.lemma_pass
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

/// Sorted, strictly increasing positions in `[0, length]`; every other
/// configuration packs its particles into a short window so that clusters
/// and boundary contact both occur.
fn sample_positions(rng: &mut ChaCha8Rng, n: usize, length: f64, packed: bool) -> Vec<f64> {
    let (lo, hi) = if packed {
        let w = rng.gen_range(0.05..0.5) * length;
        let c = rng.gen_range(0.0..length - w);
        (c, c + w)
    } else {
        (0.0, length)
    };
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    x.sort_by(f64::total_cmp);
    x.dedup();
    x
}

/// Runs the 1D crowd identity on `crowd_cases` configurations with
/// `N ∈ {5, 50, 500}`, the diffusion bound on `diffusion_cases` random
/// `(N, ε)` pairs and the truncated-Gaussian variance bound on
/// `lemma_samples` random intervals.
pub fn bounds_1d_report(crowd_cases: usize, diffusion_cases: usize, lemma_samples: usize, seed: u64) -> Result<Bounds1DReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut crowd = Vec::with_capacity(crowd_cases);
    for k in 0..crowd_cases {
        let n = [5, 50, 500][k % 3];
        let length = rng.gen_range(1.0..3.0);
        let x = sample_positions(&mut rng, n, length, k % 2 == 1);
        let p = Particles1D::new(x, 1.0 / n as f64, (0.0, length))?;
        let value = verify_crowd_bound(&p)?;
        crowd.push(CrowdCase { n: p.len(), length, value, deviation: (value - 1.0 / 12.0).abs() });
    }
    let crowd_max_deviation = crowd.iter().map(|c| c.deviation).fold(0.0, f64::max);

    let mut diffusion = Vec::with_capacity(diffusion_cases);
    for k in 0..diffusion_cases {
        let n = rng.gen_range(2..=200);
        let eps = log_uniform(&mut rng, 1e-4, 1e-1);
        let length = rng.gen_range(0.5..3.0);
        let x = sample_positions(&mut rng, n, length, k % 2 == 1);
        let p = Particles1D::new(x, eps, (0.0, length))?;
        let b = verify_diffusion_bound(&p)?;
        diffusion.push(DiffusionCase { n: p.len(), eps, length, lhs: b.lhs, bound: b.bound, holds: b.holds() });
    }
    let diffusion_max_ratio = diffusion.iter().map(|d| d.lhs / d.bound).fold(0.0, f64::max);

    let mut lemma_max_ratio: f64 = 0.0;
    for _ in 0..lemma_samples {
        let lo = rng.gen_range(-2.0..2.0);
        let hi = lo + log_uniform(&mut rng, 1e-3, 5.0);
        let x = rng.gen_range(-3.0..3.0);
        let eps = log_uniform(&mut rng, 1e-4, 1.0);
        lemma_max_ratio = lemma_max_ratio.max(truncated_gaussian_variance(lo, hi, x, eps) / eps);
    }

    Ok(Bounds1DReport {
        seed,
        crowd_pass: crowd_max_deviation <= CROWD_IDENTITY_TOL,
        crowd_max_deviation,
        crowd,
        diffusion_pass: diffusion.iter().all(|d| d.holds),
        diffusion_max_ratio,
        diffusion,
        lemma_samples,
        // the variance of a truncated Gaussian is at most ε; allow rounding
        lemma_pass: lemma_max_ratio <= 1.0 + 1e-12,
        lemma_max_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_report_passes() {
        let rep = bounds_1d_report(6, 6, 50, 3).unwrap();
        assert!(rep.pass(), "{rep:#?}");
        assert_eq!(rep.crowd.len(), 6);
    }
}
