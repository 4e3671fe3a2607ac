use crate::error::{Error, Result};
use crate::geometry::{DomainGeometry, ParticleSet, Vec2};
use crate::ot::{newton_solve, NewtonOptions, TransportMode};

/// Lattice points of `hℤ²` in the box `[lo, hi]` satisfying `keep`, in
/// row-major order (rows of increasing `y`, each by increasing `x`).
pub fn grid_points(lo: Vec2, hi: Vec2, h: f64, keep: impl Fn(&Vec2) -> bool) -> Vec<Vec2> {
    let i0 = (lo.x / h - 1e-9).ceil() as i64;
    let i1 = (hi.x / h + 1e-9).floor() as i64;
    let j0 = (lo.y / h - 1e-9).ceil() as i64;
    let j1 = (hi.y / h + 1e-9).floor() as i64;
    let mut out = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            let p = Vec2::new(i as f64 * h, j as f64 * h);
            if keep(&p) {
                out.push(p);
            }
        }
    }
    out
}

/// `Ω ∩ hℤ²` for a closed polygonal region, row-major.
pub fn grid_initialization(region: &DomainGeometry, h: f64) -> Result<Vec<Vec2>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("grid spacing must be positive, got {h}")));
    }
    let (lo, hi) = region.bbox();
    let tol = 1e-9 * h;
    let pts = grid_points(lo, hi, h, |p| region.contains_tol(p, tol));
    if pts.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(pts)
}

/// First `n` points of the (2, 3) Halton sequence mapped into the region's
/// bounding box and kept when inside the region.
pub fn halton_points(region: &DomainGeometry, n: usize) -> Vec<Vec2> {
    fn radical_inverse(mut k: u64, base: u64) -> f64 {
        let mut f = 1.0;
        let mut r = 0.0;
        while k > 0 {
            f /= base as f64;
            r += f * (k % base) as f64;
            k /= base;
        }
        r
    }
    let (lo, hi) = region.bbox();
    let mut out = Vec::with_capacity(n);
    let mut k = 1u64;
    while out.len() < n {
        let p = Vec2::new(
            lo.x + (hi.x - lo.x) * radical_inverse(k, 2),
            lo.y + (hi.y - lo.y) * radical_inverse(k, 3),
        );
        if region.contains(&p) {
            out.push(p);
        }
        k += 1;
    }
    out
}

#[derive(Debug, Clone)]
pub struct LloydResult {
    pub positions: Vec<Vec2>,
    /// `W₂²(uniform, μ_X)` at each iterate, starting with the initial points.
    pub costs: Vec<f64>,
}

/// Quantization of the uniform density on `region` by `n` equal-mass points:
/// alternate the mass-constrained power diagram and the move to cell
/// barycenters.
pub fn lloyd_quantization(region: &DomainGeometry, n: usize, iters: usize, opts: &NewtonOptions) -> Result<LloydResult> {
    if n == 0 {
        return Err(Error::InvalidInput("quantization needs at least one point".into()));
    }
    let mut x = halton_points(region, n);
    let mut costs = Vec::with_capacity(iters + 1);
    let mut warm: Option<Vec<f64>> = None;
    for it in 0..=iters {
        let ps = ParticleSet::new(x.clone(), 1.0)?;
        let st = newton_solve(&ps, region, TransportMode::Uniform, opts, warm.as_deref())?;
        costs.push(st.w2_squared());
        if it == iters {
            break;
        }
        x = st.barycenters.clone();
        warm = Some(st.psi);
    }
    Ok(LloydResult { positions: x, costs })
}
