use rayon::prelude::*;

use super::cell::{disk_clip_polygon, CellPart, CellRegion};
use super::clip::{EdgeLabel, LabeledPolygon};
use super::domain::{check_distinct, DomainGeometry, ParticleSet};
use super::grid::SpatialGrid;
use super::Vec2;
use crate::error::{Error, Result};

/// Laguerre cells `{y ∈ Ω : |y-x_i|² - ψ_i ≤ |y-x_j|² - ψ_j ∀j}`, one per
/// particle, each possibly split across several domain pieces.
pub fn build_power_diagram(particles: &ParticleSet, psi: &[f64], dom: &DomainGeometry) -> Result<Vec<CellRegion>> {
    check_inputs(&particles.positions, psi)?;
    Ok(power_cells(&particles.positions, psi, dom, false))
}

/// Laguerre cells intersected with the balls `B(x_i, √ψ_i)`; cells with
/// `ψ_i ≤ 0` are empty.
pub fn build_ball_clipped_cells(particles: &ParticleSet, psi: &[f64], dom: &DomainGeometry) -> Result<Vec<CellRegion>> {
    check_inputs(&particles.positions, psi)?;
    Ok(power_cells(&particles.positions, psi, dom, true))
}

fn check_inputs(positions: &[Vec2], psi: &[f64]) -> Result<()> {
    if positions.len() != psi.len() {
        return Err(Error::InvalidInput(format!(
            "{} positions but {} potentials",
            positions.len(),
            psi.len()
        )));
    }
    if psi.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("psi"));
    }
    check_distinct(positions)
}

/// Unchecked cell construction; positions must be pairwise distinct.
pub(crate) fn power_cells(positions: &[Vec2], psi: &[f64], dom: &DomainGeometry, ball: bool) -> Vec<CellRegion> {
    let grid = SpatialGrid::new(positions, 2.0);
    let psi_max = psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bucket_psi = grid.bucket_max(psi);
    let ctx = Neighbors { positions, psi, psi_max, bucket_psi: &bucket_psi, grid: &grid };
    (0..positions.len())
        .into_par_iter()
        .map(|i| build_cell(i, &ctx, dom, ball))
        .collect()
}

/// Largest distance at which a neighbor with potential `psi_j` can still cut
/// a region contained in the disk of radius `r` around the site.
#[inline]
fn reach(r: f64, psi_i: f64, psi_j: f64) -> f64 {
    r + (r * r - psi_i + psi_j).max(0.0).sqrt()
}

struct Neighbors<'a> {
    positions: &'a [Vec2],
    psi: &'a [f64],
    psi_max: f64,
    bucket_psi: &'a [f64],
    grid: &'a SpatialGrid,
}

fn build_cell(i: usize, ctx: &Neighbors, dom: &DomainGeometry, ball: bool) -> CellRegion {
    let Neighbors { positions, psi, psi_max, bucket_psi, grid } = *ctx;
    let xi = positions[i];
    let psi_i = psi[i];
    let empty = CellRegion::empty(i, xi);
    let r_ball = if ball {
        if psi_i <= 0.0 {
            return empty;
        }
        psi_i.sqrt()
    } else {
        f64::INFINITY
    };

    let (lo, hi) = dom.bbox();
    let mut poly = LabeledPolygon {
        vertices: vec![
            Vec2::new(lo.x, lo.y) - xi,
            Vec2::new(hi.x, lo.y) - xi,
            Vec2::new(hi.x, hi.y) - xi,
            Vec2::new(lo.x, hi.y) - xi,
        ],
        labels: vec![EdgeLabel::Boundary; 4],
    };
    if ball {
        // only the square around the ball can survive the disk clip
        for (nx, ny) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            poly.clip_mut(&Vec2::new(nx, ny), 1.01 * r_ball, EdgeLabel::Boundary);
        }
        if poly.is_empty() {
            return empty;
        }
    }

    let mut radius = poly.max_radius().min(r_ball);
    let mut candidates: Vec<(f64, usize)> = Vec::new();
    let mut k = 0;
    loop {
        candidates.clear();
        grid.for_each_bucket_in_ring(&xi, k, |b, dist, items| {
            if dist >= reach(radius, psi_i, bucket_psi[b]) {
                return;
            }
            for &j in items {
                if j != i {
                    candidates.push(((positions[j] - xi).norm_squared(), j));
                }
            }
        });
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d2, j) in &candidates {
            if d2.sqrt() >= reach(radius, psi_i, psi[j]) {
                continue;
            }
            let d = positions[j] - xi;
            poly.clip_mut(&(2.0 * d), d2 + psi_i - psi[j], EdgeLabel::Neighbor(j));
            if poly.is_empty() {
                return empty;
            }
            radius = poly.max_radius().min(r_ball);
        }
        let lb = grid.ring_lower_bound(&xi, k);
        if lb.is_infinite() || lb >= reach(radius, psi_i, psi_max) {
            break;
        }
        k += 1;
    }

    let reach_all = poly.max_radius();
    let mut parts = Vec::new();
    for piece in dom.pieces() {
        let verts = piece.vertices();
        let n = verts.len();
        let mut part = poly.clone();
        for e in 0..n {
            let p = verts[e] - xi;
            let q = verts[(e + 1) % n] - xi;
            let edge = q - p;
            let normal = Vec2::new(edge.y, -edge.x);
            if normal.dot(&p) >= normal.norm() * reach_all {
                continue;
            }
            part.clip_mut(&normal, normal.dot(&p), EdgeLabel::Boundary);
            if part.is_empty() {
                break;
            }
        }
        if part.is_empty() {
            continue;
        }
        if ball {
            if let Some(p) = disk_clip_polygon(&part, &Vec2::zeros(), r_ball) {
                parts.push(p);
            }
        } else {
            parts.push(CellPart::from_polygon(&part));
        }
    }
    CellRegion { owner: i, origin: xi, parts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexPolygon;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> DomainGeometry {
        DomainGeometry::single(ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap())
    }

    fn random_particles(n: usize, seed: u64) -> ParticleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n).map(|_| Vec2::new(rng.gen(), rng.gen())).collect();
        ParticleSet::new(pts, 0.1).unwrap()
    }

    /// Reference construction clipping against every other particle.
    fn brute_force_areas(x: &[Vec2], psi: &[f64], dom: &DomainGeometry) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut total = 0.0;
                for piece in dom.pieces() {
                    let mut p = piece.to_labeled(&x[i]);
                    for j in 0..x.len() {
                        if j != i {
                            let d = x[j] - x[i];
                            p = p.clip(&(2.0 * d), d.norm_squared() + psi[i] - psi[j], EdgeLabel::Neighbor(j));
                        }
                    }
                    total += p.area();
                }
                total
            })
            .collect()
    }

    #[test]
    fn single_particle_owns_domain() {
        let x = ParticleSet::new(vec![Vec2::new(0.3, 0.2)], 0.1).unwrap();
        let cells = build_power_diagram(&x, &[5.0], &unit_square()).unwrap();
        assert!((cells[0].area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_all_pairs_clipping() {
        let dom = unit_square();
        let x = random_particles(150, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi: Vec<f64> = (0..150).map(|_| rng.gen_range(-0.01..0.01)).collect();
        let cells = build_power_diagram(&x, &psi, &dom).unwrap();
        let brute = brute_force_areas(&x.positions, &psi, &dom);
        for (c, b) in cells.iter().zip(&brute) {
            assert!((c.area() - b).abs() < 1e-14);
        }
        let total: f64 = cells.iter().map(CellRegion::area).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_points_shifted_bisector() {
        let dom = unit_square();
        let x = ParticleSet::new(vec![Vec2::new(0.25, 0.5), Vec2::new(0.75, 0.5)], 0.1).unwrap();
        let delta = 0.1;
        let cells = build_power_diagram(&x, &[delta, 0.0], &dom).unwrap();
        // separating line shifted by delta / (2 |x1 - x2|) toward x2
        let line = 0.5 + delta / (2.0 * 0.5);
        assert!((cells[0].area() - line).abs() < 1e-14);
        assert!((cells[1].area() - (1.0 - line)).abs() < 1e-14);
    }

    #[test]
    fn coincident_points_rejected() {
        let x = ParticleSet {
            positions: vec![Vec2::new(0.5, 0.5), Vec2::new(0.2, 0.2), Vec2::new(0.5, 0.5)],
            eps: 0.1,
        };
        assert_eq!(
            build_power_diagram(&x, &[0.0; 3], &unit_square()).unwrap_err(),
            Error::CoincidentPoints(0, 2)
        );
    }

    #[test]
    fn multi_piece_domain_and_ball_cells() {
        let a = ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let b = ConvexPolygon::rectangle(1.0, 0.25, 1.5, 0.75).unwrap();
        let c = ConvexPolygon::rectangle(2.0, 0.0, 3.0, 1.0).unwrap();
        let dom = DomainGeometry::new(vec![a, b, c]).unwrap();
        let x = random_particles(40, 2);
        let psi = vec![0.0; 40];
        let cells = build_power_diagram(&x, &psi, &dom).unwrap();
        let total: f64 = cells.iter().map(CellRegion::area).sum();
        assert!((total - dom.total_area()).abs() < 1e-12);
        let brute = brute_force_areas(&x.positions, &psi, &dom);
        for (c, b) in cells.iter().zip(&brute) {
            assert!((c.area() - b).abs() < 1e-13);
        }
        let psi_ball = vec![0.002; 40];
        let balls = build_ball_clipped_cells(&x, &psi_ball, &dom).unwrap();
        for (ball, cell) in balls.iter().zip(&cells) {
            assert!(ball.area() <= cell.area().min(std::f64::consts::PI * 0.002) + 1e-15);
        }
    }
}
