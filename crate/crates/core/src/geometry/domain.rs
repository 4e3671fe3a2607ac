use super::clip::{EdgeLabel, LabeledPolygon};
use super::{cross, Vec2};
use crate::error::{Error, Result};

/// A convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
    area: f64,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidDomain(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(Error::InvalidDomain("non-finite polygon vertex".into()));
        }
        let area = signed_area(&vertices);
        if area <= 0.0 {
            return Err(Error::InvalidDomain(
                "polygon must have positive area with counter-clockwise vertices".into(),
            ));
        }
        let diam = diameter_of(&vertices);
        let tol = 1e-12 * diam * diam;
        let n = vertices.len();
        for k in 0..n {
            let a = vertices[k];
            let b = vertices[(k + 1) % n];
            let c = vertices[(k + 2) % n];
            if cross(&(b - a), &(c - b)) < -tol {
                return Err(Error::InvalidDomain(format!("polygon is not convex at vertex {}", (k + 1) % n)));
            }
        }
        Ok(Self { vertices, area })
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new(vec![
            Vec2::new(x0, y0),
            Vec2::new(x1, y0),
            Vec2::new(x1, y1),
            Vec2::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len();
        let o = self.vertices[0];
        let mut c = Vec2::zeros();
        for k in 0..n {
            let a = self.vertices[k] - o;
            let b = self.vertices[(k + 1) % n] - o;
            c += cross(&a, &b) * (a + b);
        }
        o + c / (6.0 * self.area)
    }

    pub fn diameter(&self) -> f64 {
        diameter_of(&self.vertices)
    }

    /// Closed-set membership with an absolute distance tolerance.
    pub fn contains(&self, p: &Vec2, tol: f64) -> bool {
        let n = self.vertices.len();
        (0..n).all(|k| {
            let a = self.vertices[k];
            let e = self.vertices[(k + 1) % n] - a;
            cross(&e, &(p - a)) >= -tol * e.norm()
        })
    }

    pub fn closest_point(&self, p: &Vec2) -> Vec2 {
        if self.contains(p, 0.0) {
            return *p;
        }
        let n = self.vertices.len();
        let mut best = self.vertices[0];
        let mut best_d2 = f64::INFINITY;
        for k in 0..n {
            let q = closest_on_segment(p, &self.vertices[k], &self.vertices[(k + 1) % n]);
            let d2 = (q - p).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                best = q;
            }
        }
        best
    }

    pub fn translated(&self, v: &Vec2) -> Self {
        Self {
            vertices: self.vertices.iter().map(|p| p + v).collect(),
            area: self.area,
        }
    }

    pub(crate) fn to_labeled(&self, origin: &Vec2) -> LabeledPolygon {
        LabeledPolygon {
            vertices: self.vertices.iter().map(|p| p - origin).collect(),
            labels: vec![EdgeLabel::Boundary; self.vertices.len()],
        }
    }
}

/// The computational domain Ω, a union of convex polygons with pairwise
/// disjoint interiors.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainGeometry {
    pieces: Vec<ConvexPolygon>,
    total_area: f64,
    bbox: (Vec2, Vec2),
}

impl DomainGeometry {
    pub fn new(pieces: Vec<ConvexPolygon>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidDomain("domain has no pieces".into()));
        }
        for (a, pa) in pieces.iter().enumerate() {
            for pb in pieces.iter().skip(a + 1) {
                let mut poly = pa.to_labeled(&Vec2::zeros());
                let nb = pb.vertices.len();
                for k in 0..nb {
                    let p = pb.vertices[k];
                    let e = pb.vertices[(k + 1) % nb] - p;
                    // keep the inner side of edge p -> p + e
                    let normal = Vec2::new(e.y, -e.x);
                    poly = poly.clip(&normal, normal.dot(&p), EdgeLabel::Boundary);
                }
                let overlap = poly.area();
                if overlap > 1e-10 * pa.area().min(pb.area()) {
                    return Err(Error::InvalidDomain(format!(
                        "domain pieces overlap (area {overlap:e})"
                    )));
                }
            }
        }
        let total_area = pieces.iter().map(|p| p.area()).sum();
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for v in pieces.iter().flat_map(|p| p.vertices.iter()) {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        Ok(Self {
            pieces,
            total_area,
            bbox: (lo, hi),
        })
    }

    pub fn single(piece: ConvexPolygon) -> Self {
        Self::new(vec![piece]).expect("a single convex polygon is a valid domain")
    }

    pub fn pieces(&self) -> &[ConvexPolygon] {
        &self.pieces
    }

    pub fn total_area(&self) -> f64 {
        self.total_area
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        self.bbox
    }

    pub fn diameter(&self) -> f64 {
        (self.bbox.1 - self.bbox.0).norm()
    }

    /// Membership with the default relative tolerance `1e-12 × diameter`.
    pub fn contains(&self, p: &Vec2) -> bool {
        self.contains_tol(p, 1e-12 * self.diameter())
    }

    pub fn contains_tol(&self, p: &Vec2, tol: f64) -> bool {
        self.pieces.iter().any(|q| q.contains(p, tol))
    }

    pub fn closest_point(&self, p: &Vec2) -> Vec2 {
        let mut best = *p;
        let mut best_d2 = f64::INFINITY;
        for piece in &self.pieces {
            let q = piece.closest_point(p);
            let d2 = (q - p).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                best = q;
            }
        }
        best
    }

    pub fn translated(&self, v: &Vec2) -> Self {
        Self {
            pieces: self.pieces.iter().map(|p| p.translated(v)).collect(),
            total_area: self.total_area,
            bbox: (self.bbox.0 + v, self.bbox.1 + v),
        }
    }
}

/// Particle positions together with the regularization parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub positions: Vec<Vec2>,
    pub eps: f64,
}

impl ParticleSet {
    pub fn new(positions: Vec<Vec2>, eps: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidInput("particle set is empty".into()));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        check_distinct(&positions)?;
        Ok(Self { positions, eps })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Rejects configurations in which two particles coincide exactly.
pub(crate) fn check_distinct(points: &[Vec2]) -> Result<()> {
    if let Some(i) = points.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::InvalidInput(format!("particle {i} has a non-finite position")));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .x
            .total_cmp(&points[b].x)
            .then(points[a].y.total_cmp(&points[b].y))
    });
    for w in order.windows(2) {
        if points[w[0]] == points[w[1]] {
            let (i, j) = (w[0].min(w[1]), w[0].max(w[1]));
            return Err(Error::CoincidentPoints(i, j));
        }
    }
    Ok(())
}

pub(crate) fn signed_area(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    let o = vertices[0];
    let mut s = 0.0;
    for k in 1..n.saturating_sub(1) {
        s += cross(&(vertices[k] - o), &(vertices[k + 1] - o));
    }
    0.5 * s
}

fn diameter_of(vertices: &[Vec2]) -> f64 {
    let mut d: f64 = 0.0;
    for (k, a) in vertices.iter().enumerate() {
        for b in &vertices[k + 1..] {
            d = d.max((a - b).norm());
        }
    }
    d
}

pub(crate) fn closest_on_segment(p: &Vec2, a: &Vec2, b: &Vec2) -> Vec2 {
    let e = b - a;
    let len2 = e.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&e) / len2).clamp(0.0, 1.0);
    a + t * e
}
