use super::domain::signed_area;
use super::Vec2;

/// Origin of a straight boundary edge of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeLabel {
    /// Edge lies on the boundary of a domain piece.
    Boundary,
    /// Edge is the facet shared with the cell of particle `j`.
    Neighbor(usize),
}

/// Convex polygon whose edge `k` (from vertex `k` to vertex `k + 1`)
/// carries `labels[k]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledPolygon {
    pub vertices: Vec<Vec2>,
    pub labels: Vec<EdgeLabel>,
}

impl LabeledPolygon {
    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn area(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            signed_area(&self.vertices)
        }
    }

    /// Largest distance from the local origin to a vertex.
    pub fn max_radius(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.norm_squared())
            .fold(0.0, f64::max)
            .sqrt()
    }

    /// Sutherland–Hodgman clip against the half-plane `normal · y <= offset`.
    /// Edges created along the clipping line receive `label`.
    pub fn clip(&self, normal: &Vec2, offset: f64, label: EdgeLabel) -> LabeledPolygon {
        let mut out = self.clone();
        out.clip_mut(normal, offset, label);
        out
    }

    /// In-place version of [`clip`](Self::clip); allocates only when the
    /// line actually cuts the polygon.
    pub fn clip_mut(&mut self, normal: &Vec2, offset: f64, label: EdgeLabel) {
        let n = self.vertices.len();
        if n < 3 {
            self.clear();
            return;
        }
        let side = |v: &Vec2| normal.dot(v) - offset;
        let (mut any_in, mut any_out) = (false, false);
        for v in &self.vertices {
            if side(v) <= 0.0 {
                any_in = true;
            } else {
                any_out = true;
            }
        }
        if !any_out {
            return;
        }
        if !any_in {
            self.clear();
            return;
        }
        let mut verts = Vec::with_capacity(n + 1);
        let mut labels = Vec::with_capacity(n + 1);
        for k in 0..n {
            let kn = (k + 1) % n;
            let (p, q) = (self.vertices[k], self.vertices[kn]);
            let (sp, sq) = (side(&p), side(&q));
            let edge_label = self.labels[k];
            match (sp <= 0.0, sq <= 0.0) {
                (true, true) => {
                    verts.push(p);
                    labels.push(edge_label);
                }
                (true, false) => {
                    verts.push(p);
                    labels.push(edge_label);
                    let t = sp / (sp - sq);
                    verts.push(p + t * (q - p));
                    labels.push(label);
                }
                (false, true) => {
                    let t = sp / (sp - sq);
                    verts.push(p + t * (q - p));
                    labels.push(edge_label);
                }
                (false, false) => {}
            }
        }
        self.vertices = verts;
        self.labels = labels;
        self.dedup();
    }

    fn clear(&mut self) {
        self.vertices.clear();
        self.labels.clear();
    }

    /// Drops zero-length edges; the surviving vertex keeps the label of the
    /// edge that follows it.
    fn dedup(&mut self) {
        let scale = self.max_radius().max(f64::MIN_POSITIVE);
        let tol2 = (1e-14 * scale).powi(2);
        let n = self.vertices.len();
        if n == 0 {
            return;
        }
        let mut w = 0;
        for k in 0..n {
            let next = self.vertices[(k + 1) % n];
            if (next - self.vertices[k]).norm_squared() > tol2 {
                self.vertices[w] = self.vertices[k];
                self.labels[w] = self.labels[k];
                w += 1;
            }
        }
        self.vertices.truncate(w);
        self.labels.truncate(w);
        if w < 3 || signed_area(&self.vertices) <= 0.0 {
            self.clear();
        }
    }
}
