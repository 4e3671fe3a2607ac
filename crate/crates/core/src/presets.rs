//! Benchmark geometries.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use crate::error::Result;
use crate::geometry::{ConvexPolygon, DomainGeometry, Vec2};

/// Number of chords used for the curved boundary of the radial sector.
pub const DEFAULT_ARC_SEGMENTS: usize = 256;

/// The quarter sector `{x : x₂ ≥ |x₁|, |x| ≤ r}` with its arc replaced by
/// `segments` chords.
pub fn radial_sector(r: f64, segments: usize) -> Result<DomainGeometry> {
    let m = segments.max(1);
    let mut v = vec![Vec2::zeros()];
    for k in 0..=m {
        let th = FRAC_PI_4 + FRAC_PI_2 * k as f64 / m as f64;
        v.push(Vec2::new(r * th.cos(), r * th.sin()));
    }
    Ok(DomainGeometry::single(ConvexPolygon::new(v)?))
}

/// Exact membership in the curved sector (closed set, relative tolerance).
pub fn in_radial_sector(p: &Vec2, r: f64) -> bool {
    let tol = 1e-12 * r;
    p.y >= p.x.abs() - tol && p.norm() <= r + tol
}

/// Two rooms joined by a corridor, scaled by `alpha`.
#[derive(Debug, Clone)]
pub struct Bimodal {
    pub alpha: f64,
    pub domain: DomainGeometry,
    pub left: ConvexPolygon,
    pub corridor: ConvexPolygon,
    pub right: ConvexPolygon,
    /// Exit points at the far corners of the right room.
    pub targets: [Vec2; 2],
}

/// Default room scale, chosen so that the left room has area `4/π`.
pub fn bimodal_alpha() -> f64 {
    2.0 / std::f64::consts::PI.sqrt()
}

pub fn bimodal(alpha: f64) -> Result<Bimodal> {
    let a = alpha;
    let left = ConvexPolygon::rectangle(0.0, 0.0, a, a)?;
    let corridor = ConvexPolygon::rectangle(a, a / 3.0, 4.0 * a / 3.0, 2.0 * a / 3.0)?;
    let right = ConvexPolygon::rectangle(4.0 * a / 3.0, 0.0, 7.0 * a / 3.0, a)?;
    let domain = DomainGeometry::new(vec![left.clone(), corridor.clone(), right.clone()])?;
    Ok(Bimodal {
        alpha,
        domain,
        left,
        corridor,
        right,
        targets: [Vec2::new(7.0 * a / 3.0, a), Vec2::new(7.0 * a / 3.0, 0.0)],
    })
}

pub fn square(x0: f64, y0: f64, side: f64) -> Result<DomainGeometry> {
    Ok(DomainGeometry::single(ConvexPolygon::rectangle(x0, y0, x0 + side, y0 + side)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sector_area_converges() {
        let d = radial_sector(2.0, DEFAULT_ARC_SEGMENTS).unwrap();
        assert!((d.total_area() - PI).abs() < 1e-4);
        assert!(d.contains(&Vec2::new(0.0, 1.0)));
        assert!(!d.contains(&Vec2::new(0.5, 0.4)));
    }

    #[test]
    fn bimodal_vertices() {
        let a = bimodal_alpha();
        let b = bimodal(a).unwrap();
        let v = b.right.vertices();
        assert!((v[0] - Vec2::new(4.0 * a / 3.0, 0.0)).norm() < 1e-12);
        assert!((v[2] - Vec2::new(7.0 * a / 3.0, a)).norm() < 1e-12);
        assert!((b.left.area() - 4.0 / PI).abs() < 1e-12);
        assert!((b.domain.total_area() - 19.0 * a * a / 9.0).abs() < 1e-12);
    }
}
