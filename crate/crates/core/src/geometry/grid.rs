use super::Vec2;

/// Uniform bucket grid over a point cloud, used for ring-by-ring neighbor
/// enumeration.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl SpatialGrid {
    /// Buckets sized so that each holds about `per_bucket` points on average.
    pub fn new(points: &[Vec2], per_bucket: f64) -> Self {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if points.is_empty() {
            lo = Vec2::zeros();
            hi = Vec2::zeros();
        }
        let ext = hi - lo;
        let span = ext.x.max(ext.y).max(f64::MIN_POSITIVE);
        // guard against degenerate (collinear) clouds
        let area = (ext.x.max(1e-3 * span)) * (ext.y.max(1e-3 * span));
        let mut cell = (per_bucket * area / points.len().max(1) as f64).sqrt();
        if !(cell > 0.0) {
            cell = 1.0;
        }
        let nx = ((ext.x / cell).floor() as usize + 1).min(1 << 14);
        let ny = ((ext.y / cell).floor() as usize + 1).min(1 << 14);
        let cell = cell.max(ext.x / nx as f64).max(ext.y / ny as f64);
        let mut grid = Self { origin: lo, cell, nx, ny, start: Vec::new(), items: Vec::new() };
        let mut counts = vec![0usize; nx * ny + 1];
        let keys: Vec<usize> = points.iter().map(|p| grid.key(p)).collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for k in 0..nx * ny {
            counts[k + 1] += counts[k];
        }
        let mut fill = counts.clone();
        let mut items = vec![0; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            items[fill[k]] = i;
            fill[k] += 1;
        }
        grid.start = counts;
        grid.items = items;
        grid
    }

    fn coords(&self, p: &Vec2) -> (usize, usize) {
        let fx = ((p.x - self.origin.x) / self.cell).floor();
        let fy = ((p.y - self.origin.y) / self.cell).floor();
        let cx = if fx > 0.0 { (fx as usize).min(self.nx - 1) } else { 0 };
        let cy = if fy > 0.0 { (fy as usize).min(self.ny - 1) } else { 0 };
        (cx, cy)
    }

    fn key(&self, p: &Vec2) -> usize {
        let (cx, cy) = self.coords(p);
        cy * self.nx + cx
    }

    fn bucket(&self, cx: usize, cy: usize) -> &[usize] {
        let k = cy * self.nx + cx;
        &self.items[self.start[k]..self.start[k + 1]]
    }

    /// Number of rings needed to cover the whole grid from any query.
    pub fn max_ring(&self) -> usize {
        self.nx.max(self.ny)
    }

    /// Calls `f` on every point index stored in ring `k` around `q`
    /// (buckets at Chebyshev distance exactly `k` from the bucket of `q`).
    pub fn for_each_in_ring(&self, q: &Vec2, k: usize, mut f: impl FnMut(usize)) {
        let (cx, cy) = self.coords(q);
        let (cx, cy, k) = (cx as isize, cy as isize, k as isize);
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let mut visit = |x: isize, y: isize| {
            if x >= 0 && y >= 0 && x < nx && y < ny {
                for &i in self.bucket(x as usize, y as usize) {
                    f(i);
                }
            }
        };
        if k == 0 {
            visit(cx, cy);
            return;
        }
        for x in (cx - k)..=(cx + k) {
            visit(x, cy - k);
            visit(x, cy + k);
        }
        for y in (cy - k + 1)..=(cy + k - 1) {
            visit(cx - k, y);
            visit(cx + k, y);
        }
    }

    pub fn bucket_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Per-bucket maximum of `values` (indexed like the points); `-∞` for
    /// empty buckets.
    pub fn bucket_max(&self, values: &[f64]) -> Vec<f64> {
        (0..self.bucket_count())
            .map(|b| {
                self.items[self.start[b]..self.start[b + 1]]
                    .iter()
                    .map(|&i| values[i])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// Calls `f(bucket, distance, items)` for every non-empty bucket in ring
    /// `k` around `q`, where `distance` is the distance from `q` to the
    /// bucket's rectangle.
    pub fn for_each_bucket_in_ring(&self, q: &Vec2, k: usize, mut f: impl FnMut(usize, f64, &[usize])) {
        let (cx, cy) = self.coords(q);
        let (cx, cy, k) = (cx as isize, cy as isize, k as isize);
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let s = self.cell;
        let mut visit = |x: isize, y: isize| {
            if x >= 0 && y >= 0 && x < nx && y < ny {
                let b = y as usize * self.nx + x as usize;
                let items = &self.items[self.start[b]..self.start[b + 1]];
                if items.is_empty() {
                    return;
                }
                let x0 = self.origin.x + x as f64 * s;
                let y0 = self.origin.y + y as f64 * s;
                let dx = (x0 - q.x).max(q.x - x0 - s).max(0.0);
                let dy = (y0 - q.y).max(q.y - y0 - s).max(0.0);
                f(b, dx.hypot(dy), items);
            }
        };
        if k == 0 {
            visit(cx, cy);
            return;
        }
        for x in (cx - k)..=(cx + k) {
            visit(x, cy - k);
            visit(x, cy + k);
        }
        for y in (cy - k + 1)..=(cy + k - 1) {
            visit(cx - k, y);
            visit(cx + k, y);
        }
    }

    /// Lower bound on the distance from `q` to any point stored outside
    /// rings `0..=k`; infinite once the rings cover the grid.
    pub fn ring_lower_bound(&self, q: &Vec2, k: usize) -> f64 {
        let (cx, cy) = self.coords(q);
        if cx < k + 1 && cy < k + 1 && cx + k + 1 >= self.nx && cy + k + 1 >= self.ny {
            return f64::INFINITY;
        }
        let s = self.cell;
        let mut d = f64::INFINITY;
        if cx > k {
            d = d.min(q.x - (self.origin.x + (cx - k) as f64 * s));
        }
        if cx + k + 1 < self.nx {
            d = d.min(self.origin.x + (cx + k + 1) as f64 * s - q.x);
        }
        if cy > k {
            d = d.min(q.y - (self.origin.y + (cy - k) as f64 * s));
        }
        if cy + k + 1 < self.ny {
            d = d.min(self.origin.y + (cy + k + 1) as f64 * s - q.y);
        }
        d.max(0.0)
    }
}

/// Smallest pairwise distance and the pair achieving it (`None` if fewer
/// than two points).
pub fn min_pairwise_distance(points: &[Vec2]) -> Option<(f64, usize, usize)> {
    if points.len() < 2 {
        return None;
    }
    let grid = SpatialGrid::new(points, 2.0);
    let mut best = (f64::INFINITY, 0, 0);
    for (i, p) in points.iter().enumerate() {
        let mut k = 0;
        loop {
            grid.for_each_in_ring(p, k, |j| {
                if j != i {
                    let d = (points[j] - p).norm();
                    if d < best.0 || (d == best.0 && (i.min(j), i.max(j)) < (best.1, best.2)) {
                        best = (d, i.min(j), i.max(j));
                    }
                }
            });
            if grid.ring_lower_bound(p, k) >= best.0 || k > grid.max_ring() {
                break;
            }
            k += 1;
        }
    }
    Some(best)
}
