use std::f64::consts::PI;

use super::clip::{EdgeLabel, LabeledPolygon};
use super::{cross, Vec2};

/// One boundary element of a cell, in coordinates local to the cell origin.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryEdge {
    Segment { a: Vec2, b: Vec2, label: EdgeLabel },
    /// Counter-clockwise circular arc, `theta1 > theta0`.
    Arc { center: Vec2, radius: f64, theta0: f64, theta1: f64 },
}

impl BoundaryEdge {
    pub fn length(&self) -> f64 {
        match self {
            BoundaryEdge::Segment { a, b, .. } => (b - a).norm(),
            BoundaryEdge::Arc { radius, theta0, theta1, .. } => radius * (theta1 - theta0),
        }
    }
}

/// A closed, convex boundary loop.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellPart {
    pub edges: Vec<BoundaryEdge>,
}

impl CellPart {
    pub fn from_polygon(poly: &LabeledPolygon) -> Self {
        let n = poly.vertices.len();
        let edges = (0..n)
            .map(|k| BoundaryEdge::Segment {
                a: poly.vertices[k],
                b: poly.vertices[(k + 1) % n],
                label: poly.labels[k],
            })
            .collect();
        Self { edges }
    }

    pub fn is_polygonal(&self) -> bool {
        self.edges.iter().all(|e| matches!(e, BoundaryEdge::Segment { .. }))
    }

    /// Vertices of a straight-edged part.
    pub fn polygon_vertices(&self) -> Vec<Vec2> {
        self.edges
            .iter()
            .filter_map(|e| match e {
                BoundaryEdge::Segment { a, .. } => Some(*a),
                BoundaryEdge::Arc { .. } => None,
            })
            .collect()
    }

    fn contains_local(&self, y: &Vec2, tol: f64) -> bool {
        self.edges.iter().all(|e| match e {
            BoundaryEdge::Segment { a, b, .. } => {
                let d = b - a;
                cross(&d, &(y - a)) >= -tol * d.norm()
            }
            BoundaryEdge::Arc { center, radius, .. } => (y - center).norm() <= radius + tol,
        })
    }

    /// Area, first moment and polar second moment about the local origin.
    fn raw_moments(&self) -> (f64, Vec2, f64) {
        let mut area = 0.0;
        let mut first = Vec2::zeros();
        let mut second = 0.0;
        let mut tri = |a: Vec2, b: Vec2| {
            let ar = 0.5 * cross(&a, &b);
            area += ar;
            first += ar * (a + b) / 3.0;
            second += ar * (a.norm_squared() + b.norm_squared() + a.dot(&b)) / 6.0;
        };
        let mut sectors = (0.0, Vec2::zeros(), 0.0);
        for e in &self.edges {
            match *e {
                BoundaryEdge::Segment { a, b, .. } => tri(a, b),
                BoundaryEdge::Arc { center, radius, theta0, theta1 } => {
                    let p0 = center + radius * Vec2::new(theta0.cos(), theta0.sin());
                    let p1 = center + radius * Vec2::new(theta1.cos(), theta1.sin());
                    tri(p0, center);
                    tri(center, p1);
                    let dt = theta1 - theta0;
                    let a_s = 0.5 * radius * radius * dt;
                    let r3 = radius.powi(3) / 3.0;
                    let s_s = Vec2::new(r3 * (theta1.sin() - theta0.sin()), r3 * (theta0.cos() - theta1.cos()));
                    let j_s = 0.25 * radius.powi(4) * dt;
                    sectors.0 += a_s;
                    sectors.1 += s_s + a_s * center;
                    sectors.2 += j_s + 2.0 * center.dot(&s_s) + a_s * center.norm_squared();
                }
            }
        }
        (area + sectors.0, first + sectors.1, second + sectors.2)
    }
}

/// Shared straight boundary between a cell and the cell of `neighbor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    pub neighbor: usize,
    pub length: f64,
}

/// Exact moments of a cell region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMoments {
    pub area: f64,
    /// `None` for an empty region.
    pub barycenter: Option<Vec2>,
    /// `∫ |y - barycenter|² dy` over the region.
    pub second_moment: f64,
    /// `∫ |y - origin|² dy` over the region.
    pub origin_second_moment: f64,
}

/// The part of the domain owned by one particle, possibly split across
/// several domain pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRegion {
    pub owner: usize,
    /// Global position of the local coordinate origin (the owning particle).
    pub origin: Vec2,
    pub parts: Vec<CellPart>,
}

impl CellRegion {
    pub fn empty(owner: usize, origin: Vec2) -> Self {
        Self { owner, origin, parts: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn moments(&self) -> CellMoments {
        let (mut area, mut first, mut second) = (0.0, Vec2::zeros(), 0.0);
        for p in &self.parts {
            let (a, f, s) = p.raw_moments();
            area += a;
            first += f;
            second += s;
        }
        if area <= 0.0 {
            return CellMoments {
                area: 0.0,
                barycenter: None,
                second_moment: 0.0,
                origin_second_moment: 0.0,
            };
        }
        let b = first / area;
        CellMoments {
            area,
            barycenter: Some(self.origin + b),
            second_moment: (second - area * b.norm_squared()).max(0.0),
            origin_second_moment: second,
        }
    }

    pub fn area(&self) -> f64 {
        self.parts.iter().map(|p| p.raw_moments().0).sum()
    }

    /// Facet records merged per neighbor, sorted by neighbor index.
    pub fn facets(&self) -> Vec<Facet> {
        let mut out: Vec<Facet> = Vec::new();
        for e in self.parts.iter().flat_map(|p| p.edges.iter()) {
            if let BoundaryEdge::Segment { label: EdgeLabel::Neighbor(j), .. } = e {
                let len = e.length();
                match out.iter_mut().find(|f| f.neighbor == *j) {
                    Some(f) => f.length += len,
                    None => out.push(Facet { neighbor: *j, length: len }),
                }
            }
        }
        out.sort_by_key(|f| f.neighbor);
        out
    }

    /// Total length of circular-arc boundary.
    pub fn arc_length(&self) -> f64 {
        self.parts
            .iter()
            .flat_map(|p| p.edges.iter())
            .filter(|e| matches!(e, BoundaryEdge::Arc { .. }))
            .map(BoundaryEdge::length)
            .sum()
    }

    pub fn contains(&self, p: &Vec2, tol: f64) -> bool {
        let y = p - self.origin;
        self.parts.iter().any(|part| part.contains_local(&y, tol))
    }

    /// Boundary loops in global coordinates.
    pub fn global_loops(&self) -> Vec<Vec<BoundaryEdge>> {
        let o = self.origin;
        self.parts
            .iter()
            .map(|part| {
                part.edges
                    .iter()
                    .map(|e| match *e {
                        BoundaryEdge::Segment { a, b, label } => BoundaryEdge::Segment { a: a + o, b: b + o, label },
                        BoundaryEdge::Arc { center, radius, theta0, theta1 } => {
                            BoundaryEdge::Arc { center: center + o, radius, theta0, theta1 }
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Intersects a straight-edged cell with the closed disk `B(center, radius)`,
/// keeping the circular boundary as exact arcs.
pub fn clip_with_disk(cell: &CellRegion, center: &Vec2, radius: f64) -> CellRegion {
    let c = center - cell.origin;
    let parts = cell
        .parts
        .iter()
        .filter_map(|part| {
            debug_assert!(part.is_polygonal(), "disk clipping expects straight-edged parts");
            let verts = part.polygon_vertices();
            let labels = part
                .edges
                .iter()
                .filter_map(|e| match e {
                    BoundaryEdge::Segment { label, .. } => Some(*label),
                    BoundaryEdge::Arc { .. } => None,
                })
                .collect();
            disk_clip_polygon(&LabeledPolygon { vertices: verts, labels }, &c, radius)
        })
        .collect();
    CellRegion { owner: cell.owner, origin: cell.origin, parts }
}

pub(crate) fn disk_clip_polygon(poly: &LabeledPolygon, c: &Vec2, r: f64) -> Option<CellPart> {
    if !(r > 0.0) || poly.is_empty() {
        return None;
    }
    let n = poly.vertices.len();
    struct Piece {
        start: Vec2,
        end: Vec2,
        label: EdgeLabel,
    }
    let mut pieces: Vec<Piece> = Vec::with_capacity(n);
    let r2 = r * r;
    for k in 0..n {
        let a = poly.vertices[k] - c;
        let b = poly.vertices[(k + 1) % n] - c;
        let e = b - a;
        let qa = e.norm_squared();
        if qa == 0.0 {
            continue;
        }
        let qb = a.dot(&e);
        let qc = a.norm_squared() - r2;
        let disc = qb * qb - qa * qc;
        if disc <= 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        // stable roots of qa t² + 2 qb t + qc = 0
        let q = -(qb + qb.signum() * sq);
        let (mut t1, mut t2) = if q == 0.0 {
            (-sq / qa, sq / qa)
        } else {
            (q / qa, qc / q)
        };
        if t1 > t2 {
            std::mem::swap(&mut t1, &mut t2);
        }
        let lo = t1.max(0.0);
        let hi = t2.min(1.0);
        if hi - lo <= 1e-15 {
            continue;
        }
        let start = if lo == 0.0 { a } else { a + lo * e };
        let end = if hi == 1.0 { b } else { a + hi * e };
        pieces.push(Piece {
            start: start + c,
            end: end + c,
            label: poly.labels[k],
        });
    }
    if pieces.is_empty() {
        let inside = (0..n).all(|k| {
            let a = poly.vertices[k];
            let d = poly.vertices[(k + 1) % n] - a;
            cross(&d, &(c - a)) >= 0.0
        });
        return inside.then(|| CellPart {
            edges: vec![BoundaryEdge::Arc { center: *c, radius: r, theta0: 0.0, theta1: 2.0 * PI }],
        });
    }
    let tol = 1e-12 * r;
    let m = pieces.len();
    let mut edges = Vec::with_capacity(2 * m);
    for k in 0..m {
        let p = &pieces[k];
        edges.push(BoundaryEdge::Segment { a: p.start, b: p.end, label: p.label });
        let next = &pieces[(k + 1) % m];
        if (next.start - p.end).norm() > tol {
            let u = p.end - c;
            let v = next.start - c;
            let theta0 = u.y.atan2(u.x);
            let mut dt = v.y.atan2(v.x) - theta0;
            while dt <= 0.0 {
                dt += 2.0 * PI;
            }
            edges.push(BoundaryEdge::Arc { center: *c, radius: r, theta0, theta1: theta0 + dt });
        }
    }
    Some(CellPart { edges })
}
