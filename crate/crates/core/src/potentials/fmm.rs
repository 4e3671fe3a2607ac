use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainGeometry, Vec2};

/// Nodal values on a rectangular grid covering the domain's bounding box;
/// nodes outside the domain hold `+∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    /// Row-major (`j * nx + i`) values.
    pub values: Vec<f64>,
    pub inside: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    value: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on value, ties by node index
        other.value.total_cmp(&self.value).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl GridField {
    fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
        )
    }

    pub fn value_at_node(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    fn usable(&self, i: usize, j: usize) -> bool {
        let k = j * self.nx + i;
        self.inside[k] && self.values[k].is_finite()
    }

    /// First-order upwind fast marching for `|∇V| = 1` inside `dom`, with
    /// `V = 0` at the targets; the walls of `dom` are impassable.
    pub fn fast_marching(dom: &DomainGeometry, targets: &[Vec2], h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidInput(format!("fast marching spacing must be positive, got {h}")));
        }
        if targets.is_empty() {
            return Err(Error::InvalidInput("fast marching needs at least one target".into()));
        }
        let tol = 1e-9 * dom.diameter();
        if let Some(t) = targets.iter().find(|t| !dom.contains_tol(t, tol)) {
            return Err(Error::OutsideDomain(t.x, t.y));
        }
        let (lo, hi) = dom.bbox();
        let ext = hi - lo;
        let nx = (ext.x / h).ceil().max(1.0) as usize + 1;
        let ny = (ext.y / h).ceil().max(1.0) as usize + 1;
        let spacing = [ext.x / (nx - 1) as f64, ext.y / (ny - 1) as f64];
        let mut field = GridField {
            origin: [lo.x, lo.y],
            spacing,
            nx,
            ny,
            values: vec![f64::INFINITY; nx * ny],
            inside: vec![false; nx * ny],
        };
        for j in 0..ny {
            for i in 0..nx {
                field.inside[j * nx + i] = dom.contains_tol(&field.node(i, j), tol);
            }
        }
        // link between neighbouring nodes only if the midpoint is in the domain
        let linked = |f: &GridField, a: (usize, usize), b: (usize, usize)| {
            let m = 0.5 * (f.node(a.0, a.1) + f.node(b.0, b.1));
            f.inside[b.1 * f.nx + b.0] && dom.contains_tol(&m, tol)
        };

        let mut accepted = vec![false; nx * ny];
        let mut heap = BinaryHeap::new();
        let reach = 1.5 * spacing[0].max(spacing[1]);
        for t in targets {
            for j in 0..ny {
                for i in 0..nx {
                    let k = j * nx + i;
                    let d = (field.node(i, j) - t).norm();
                    if field.inside[k] && d <= reach && d < field.values[k] {
                        field.values[k] = d;
                        heap.push(Entry { value: d, node: k });
                    }
                }
            }
        }

        let mut n_accepted = 0usize;
        let mut last = f64::NEG_INFINITY;
        while let Some(Entry { value, node }) = heap.pop() {
            if accepted[node] || value > field.values[node] {
                continue;
            }
            accepted[node] = true;
            n_accepted += 1;
            debug_assert!(value >= last - 1e-12);
            last = value;
            let (i, j) = (node % nx, node / nx);
            let mut nbrs = Vec::with_capacity(4);
            if i > 0 {
                nbrs.push((i - 1, j));
            }
            if i + 1 < nx {
                nbrs.push((i + 1, j));
            }
            if j > 0 {
                nbrs.push((i, j - 1));
            }
            if j + 1 < ny {
                nbrs.push((i, j + 1));
            }
            for (a, b) in nbrs {
                let k = b * nx + a;
                if accepted[k] || !linked(&field, (i, j), (a, b)) {
                    continue;
                }
                let v = field.local_update(a, b, &accepted, &linked);
                if v < field.values[k] {
                    field.values[k] = v;
                    heap.push(Entry { value: v, node: k });
                }
            }
        }
        let n_inside = field.inside.iter().filter(|&&b| b).count();
        if n_accepted < n_inside {
            return Err(Error::UnreachableRegion(n_inside - n_accepted));
        }
        Ok(field)
    }

    fn local_update(
        &self,
        i: usize,
        j: usize,
        accepted: &[bool],
        linked: &impl Fn(&GridField, (usize, usize), (usize, usize)) -> bool,
    ) -> f64 {
        let nx = self.nx;
        let pick = |cands: [(isize, isize); 2]| {
            cands
                .iter()
                .filter_map(|&(a, b)| {
                    if a < 0 || b < 0 || a as usize >= self.nx || b as usize >= self.ny {
                        return None;
                    }
                    let (a, b) = (a as usize, b as usize);
                    let k = b * nx + a;
                    (accepted[k] && linked(self, (i, j), (a, b))).then_some(self.values[k])
                })
                .fold(f64::INFINITY, f64::min)
        };
        let (ii, jj) = (i as isize, j as isize);
        let a = pick([(ii - 1, jj), (ii + 1, jj)]);
        let b = pick([(ii, jj - 1), (ii, jj + 1)]);
        let (hx, hy) = (self.spacing[0], self.spacing[1]);
        let one_sided = (a + hx).min(b + hy);
        if !(a.is_finite() && b.is_finite()) {
            return one_sided;
        }
        // (T - a)²/hx² + (T - b)²/hy² = 1
        let (wx, wy) = (1.0 / (hx * hx), 1.0 / (hy * hy));
        let qa = wx + wy;
        let qb = -2.0 * (a * wx + b * wy);
        let qc = a * a * wx + b * b * wy - 1.0;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return one_sided;
        }
        let t = (-qb + disc.sqrt()) / (2.0 * qa);
        if t >= a.max(b) {
            t.min(one_sided)
        } else {
            one_sided
        }
    }

    fn locate(&self, x: &Vec2) -> (usize, usize, f64, f64) {
        let fx = ((x.x - self.origin[0]) / self.spacing[0]).clamp(0.0, (self.nx - 1) as f64);
        let fy = ((x.y - self.origin[1]) / self.spacing[1]).clamp(0.0, (self.ny - 1) as f64);
        let i = (fx.floor() as usize).min(self.nx.saturating_sub(2));
        let j = (fy.floor() as usize).min(self.ny.saturating_sub(2));
        (i, j, fx - i as f64, fy - j as f64)
    }

    fn corners(i: usize, j: usize, u: f64, v: f64) -> [((usize, usize), f64); 4] {
        [
            ((i, j), (1.0 - u) * (1.0 - v)),
            ((i + 1, j), u * (1.0 - v)),
            ((i, j + 1), (1.0 - u) * v),
            ((i + 1, j + 1), u * v),
        ]
    }

    /// Bilinear interpolation over the usable corners of the enclosing cell.
    pub fn value(&self, x: &Vec2) -> f64 {
        let (i, j, u, v) = self.locate(x);
        let mut s = 0.0;
        let mut w = 0.0;
        for ((a, b), wt) in Self::corners(i, j, u, v) {
            if self.usable(a, b) {
                s += wt * self.value_at_node(a, b);
                w += wt;
            }
        }
        if w > 0.0 {
            s / w
        } else {
            self.nearest_usable(x).map_or(f64::INFINITY, |(a, b)| self.value_at_node(a, b))
        }
    }

    /// Gradient of the bilinear interpolant when the enclosing cell is fully
    /// inside; otherwise interpolated one-sided nodal differences.
    pub fn gradient(&self, x: &Vec2) -> Vec2 {
        let (i, j, u, v) = self.locate(x);
        let (hx, hy) = (self.spacing[0], self.spacing[1]);
        let cs = Self::corners(i, j, u, v);
        if cs.iter().all(|((a, b), _)| self.usable(*a, *b)) {
            let f00 = self.value_at_node(i, j);
            let f10 = self.value_at_node(i + 1, j);
            let f01 = self.value_at_node(i, j + 1);
            let f11 = self.value_at_node(i + 1, j + 1);
            let gx = ((f10 - f00) * (1.0 - v) + (f11 - f01) * v) / hx;
            let gy = ((f01 - f00) * (1.0 - u) + (f11 - f10) * u) / hy;
            return Vec2::new(gx, gy);
        }
        let mut g = Vec2::zeros();
        let mut w = 0.0;
        for ((a, b), wt) in cs {
            if self.usable(a, b) {
                g += wt * self.nodal_gradient(a, b);
                w += wt;
            }
        }
        if w > 0.0 {
            g / w
        } else {
            self.nearest_usable(x).map_or(Vec2::zeros(), |(a, b)| self.nodal_gradient(a, b))
        }
    }

    fn nodal_gradient(&self, i: usize, j: usize) -> Vec2 {
        let f = self.value_at_node(i, j);
        let diff = |lo: Option<(usize, usize)>, hi: Option<(usize, usize)>, h: f64| {
            let lo = lo.filter(|&(a, b)| self.usable(a, b)).map(|(a, b)| self.value_at_node(a, b));
            let hi = hi.filter(|&(a, b)| self.usable(a, b)).map(|(a, b)| self.value_at_node(a, b));
            match (lo, hi) {
                (Some(l), Some(r)) => (r - l) / (2.0 * h),
                (Some(l), None) => (f - l) / h,
                (None, Some(r)) => (r - f) / h,
                (None, None) => 0.0,
            }
        };
        let gx = diff(
            (i > 0).then(|| (i - 1, j)),
            (i + 1 < self.nx).then(|| (i + 1, j)),
            self.spacing[0],
        );
        let gy = diff(
            (j > 0).then(|| (i, j - 1)),
            (j + 1 < self.ny).then(|| (i, j + 1)),
            self.spacing[1],
        );
        Vec2::new(gx, gy)
    }

    fn nearest_usable(&self, x: &Vec2) -> Option<(usize, usize)> {
        let mut best = None;
        let mut bd = f64::INFINITY;
        for j in 0..self.ny {
            for i in 0..self.nx {
                if self.usable(i, j) {
                    let d = (self.node(i, j) - x).norm_squared();
                    if d < bd {
                        bd = d;
                        best = Some((i, j));
                    }
                }
            }
        }
        best
    }
}
