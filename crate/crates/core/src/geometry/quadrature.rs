//! Integrals of the Gaussian weight `exp((ψ - |y - x|²) / 2ε)` over
//! straight-edged cells and along their facets.

use super::cell::{BoundaryEdge, CellRegion};
use super::Vec2;
use crate::error::{Error, Result};

/// Symmetric triangle rule: (weight, barycentric orbit generator, orbit size).
type Orbit = (f64, [f64; 3]);

// Degree-8 rule with 16 nodes.
const RULE8: [Orbit; 5] = [
    (0.144315607677787, [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]),
    (0.095091634267285, [0.081414823414554, 0.459292588292723, 0.459292588292723]),
    (0.103217370534718, [0.658861384496480, 0.170569307751760, 0.170569307751760]),
    (0.032458497623198, [0.898905543365938, 0.050547228317031, 0.050547228317031]),
    (0.027230314174435, [0.008394777409958, 0.263112829634638, 0.728492392955404]),
];

// Degree-5 rule with 7 nodes, used as the error estimator.
const RULE5: [Orbit; 3] = [
    (0.225, [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]),
    (0.132394152788506, [0.059715871789770, 0.470142064105115, 0.470142064105115]),
    (0.125939180544827, [0.797426985353087, 0.101286507323456, 0.101286507323456]),
];

const MAX_LEVEL: u32 = 12;

/// Expands a rule into `(weight, barycentric)` nodes; weights sum to one.
fn expand(rule: &[Orbit]) -> Vec<(f64, [f64; 3])> {
    let mut out = Vec::new();
    for &(w, [a, b, c]) in rule {
        let mut perms = vec![
            [a, b, c],
            [b, c, a],
            [c, a, b],
            [a, c, b],
            [c, b, a],
            [b, a, c],
        ];
        perms.sort_by(|p, q| p.partial_cmp(q).unwrap());
        perms.dedup();
        for p in perms {
            out.push((w, p));
        }
    }
    out
}

struct Rules {
    high: Vec<(f64, [f64; 3])>,
    low: Vec<(f64, [f64; 3])>,
}

fn rules() -> &'static Rules {
    static RULES: std::sync::OnceLock<Rules> = std::sync::OnceLock::new();
    RULES.get_or_init(|| Rules { high: expand(&RULE8), low: expand(&RULE5) })
}

/// Applies a rule to `f` over the triangle `(a, b, c)`.
pub fn triangle_rule<const K: usize>(
    high_order: bool,
    a: &Vec2,
    b: &Vec2,
    c: &Vec2,
    f: &mut impl FnMut(&Vec2) -> [f64; K],
) -> [f64; K] {
    let r = rules();
    let nodes = if high_order { &r.high } else { &r.low };
    let area = 0.5 * super::cross(&(b - a), &(c - a));
    let mut acc = [0.0; K];
    for &(w, [l0, l1, l2]) in nodes {
        let p = l0 * a + l1 * b + l2 * c;
        let v = f(&p);
        for k in 0..K {
            acc[k] += w * v[k];
        }
    }
    acc.map(|v| v * area)
}

/// Integrals of the Gaussian weight over one cell, with the site `x_i` as
/// the coordinate origin. All values include the factor `exp(ψ_i / 2ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianIntegrals {
    /// `∫ w`.
    pub mass: f64,
    /// `∫ (y - x_i) w`.
    pub first: Vec2,
    /// `∫ |y - x_i|² w`.
    pub second: f64,
}

impl GaussianIntegrals {
    /// `(1/mass) ∫ y w` in global coordinates.
    pub fn weighted_barycenter(&self, x_i: &Vec2) -> Option<Vec2> {
        (self.mass > 0.0).then(|| x_i + self.first / self.mass)
    }
}

/// Adaptive quadrature of `exp((ψ_i - |y - x_i|²) / 2ε)` and its first two
/// moments over a straight-edged cell.
pub fn gaussian_cell_integrals(cell: &CellRegion, x_i: &Vec2, psi_i: f64, eps: f64) -> Result<GaussianIntegrals> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let shift = cell.origin - x_i;
    let inv2e = 0.5 / eps;
    let mut f = |y: &Vec2| {
        let r2 = y.norm_squared();
        let w = (-r2 * inv2e).exp();
        [w, w * y.x, w * y.y, w * r2]
    };
    let triangles = fan_triangles(cell, &shift);
    let sigma = eps.sqrt();
    let level0: Vec<[f64; 4]> = triangles.iter().map(|t| triangle_rule(true, &t[0], &t[1], &t[2], &mut f)).collect();
    let total0: f64 = level0.iter().map(|v| v[0]).sum();
    let tol = 1e-12 * total0.max(f64::MIN_POSITIVE);
    let mut acc = [0.0; 4];
    for (t, est) in triangles.iter().zip(level0) {
        adapt(t, est, 0, tol, sigma, &mut f, &mut acc)?;
    }
    let scale = (psi_i * inv2e).exp();
    if !scale.is_finite() {
        return Err(Error::NonFinite("gaussian weight exp(psi / 2 eps)"));
    }
    Ok(GaussianIntegrals {
        mass: acc[0] * scale,
        first: Vec2::new(acc[1], acc[2]) * scale,
        second: acc[3] * scale,
    })
}

fn adapt(
    t: &[Vec2; 3],
    high: [f64; 4],
    level: u32,
    tol: f64,
    sigma: f64,
    f: &mut impl FnMut(&Vec2) -> [f64; 4],
    acc: &mut [f64; 4],
) -> Result<()> {
    let diam = (t[0] - t[1]).norm().max((t[1] - t[2]).norm()).max((t[2] - t[0]).norm());
    // a large triangle near the peak can fool the embedded error estimate
    let coarse = diam > 2.0 * sigma && triangle_distance(t) < 9.0 * sigma;
    let refine = coarse || {
        let low = triangle_rule(false, &t[0], &t[1], &t[2], f);
        let err = (high[0] - low[0]).abs()
            + ((high[1] - low[1]).abs() + (high[2] - low[2]).abs()) / sigma
            + (high[3] - low[3]).abs() / (sigma * sigma);
        err > tol
    };
    if !refine {
        for k in 0..4 {
            acc[k] += high[k];
        }
        return Ok(());
    }
    if level >= MAX_LEVEL {
        return Err(Error::QuadratureNotConverged);
    }
    let m01 = 0.5 * (t[0] + t[1]);
    let m12 = 0.5 * (t[1] + t[2]);
    let m20 = 0.5 * (t[2] + t[0]);
    for sub in [[t[0], m01, m20], [m01, t[1], m12], [m20, m12, t[2]], [m01, m12, m20]] {
        let est = triangle_rule(true, &sub[0], &sub[1], &sub[2], f);
        adapt(&sub, est, level + 1, tol, sigma, f, acc)?;
    }
    Ok(())
}

/// Distance from the origin to a counter-clockwise triangle.
fn triangle_distance(t: &[Vec2; 3]) -> f64 {
    let inside = (0..3).all(|k| super::cross(&(t[(k + 1) % 3] - t[k]), &(-t[k])) >= 0.0);
    if inside {
        return 0.0;
    }
    (0..3)
        .map(|k| super::domain::closest_on_segment(&Vec2::zeros(), &t[k], &t[(k + 1) % 3]).norm())
        .fold(f64::INFINITY, f64::min)
}

/// Fan triangulation of every part from its vertex centroid, shifted by
/// `shift`.
fn fan_triangles(cell: &CellRegion, shift: &Vec2) -> Vec<[Vec2; 3]> {
    let mut out = Vec::new();
    for part in &cell.parts {
        let verts: Vec<Vec2> = part.polygon_vertices().iter().map(|v| v + shift).collect();
        debug_assert!(part.is_polygonal(), "gaussian integrals expect straight-edged cells");
        if verts.len() < 3 {
            continue;
        }
        let c = verts.iter().sum::<Vec2>() / verts.len() as f64;
        for k in 0..verts.len() {
            out.push([c, verts[k], verts[(k + 1) % verts.len()]]);
        }
    }
    out
}

/// Global quadrature nodes (level-0 degree-8 rule on the fan triangles).
pub fn quadrature_nodes(cell: &CellRegion) -> Vec<Vec2> {
    let nodes = &rules().high;
    fan_triangles(cell, &cell.origin)
        .iter()
        .flat_map(|t| nodes.iter().map(move |(_, l)| l[0] * t[0] + l[1] * t[1] + l[2] * t[2]))
        .collect()
}

/// Standard normal CDF difference `Φ(b) - Φ(a)` for `a ≤ b`, accurate in
/// both tails.
pub fn normal_cdf_diff(a: f64, b: f64) -> f64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    if a >= 0.0 {
        0.5 * (libm::erfc(a * s) - libm::erfc(b * s))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b * s) - libm::erfc(-a * s))
    } else {
        0.5 * (libm::erf(b * s) - libm::erf(a * s))
    }
}

/// `∫ exp((ψ - |y|²) / 2ε) ds` along the straight segment `a → b`
/// (coordinates relative to the site).
pub fn gaussian_segment_integral(a: &Vec2, b: &Vec2, psi: f64, eps: f64) -> f64 {
    let e = b - a;
    let len = e.norm();
    if len == 0.0 {
        return 0.0;
    }
    let u = e / len;
    let s0 = a.dot(&u);
    let perp2 = (a.norm_squared() - s0 * s0).max(0.0);
    let se = eps.sqrt();
    ((psi - perp2) / (2.0 * eps)).exp() * (2.0 * std::f64::consts::PI * eps).sqrt() * normal_cdf_diff(s0 / se, (s0 + len) / se)
}

/// Gaussian-weighted lengths of the facets of `cell`, merged per neighbor.
pub fn gaussian_facet_integrals(cell: &CellRegion, x_i: &Vec2, psi_i: f64, eps: f64) -> Vec<(usize, f64)> {
    let shift = cell.origin - x_i;
    let mut out: Vec<(usize, f64)> = Vec::new();
    for e in cell.parts.iter().flat_map(|p| p.edges.iter()) {
        if let BoundaryEdge::Segment { a, b, label: super::EdgeLabel::Neighbor(j) } = e {
            let g = gaussian_segment_integral(&(a + shift), &(b + shift), psi_i, eps);
            match out.iter_mut().find(|(k, _)| k == j) {
                Some(entry) => entry.1 += g,
                None => out.push((*j, g)),
            }
        }
    }
    out.sort_by_key(|e| e.0);
    out
}
