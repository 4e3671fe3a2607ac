//! External potentials `V` and interaction kernels `W`.

mod fmm;

use std::fmt;
use std::sync::Arc;

pub use fmm::GridField;

use crate::error::{Error, Result};
use crate::geometry::{DomainGeometry, Vec2};

/// Closed-form potential supplied by the caller: returns `(V(x), ∇V(x))`.
#[derive(Clone)]
pub struct CustomPotential {
    pub eval: Arc<dyn Fn(&Vec2) -> (f64, Vec2) + Send + Sync>,
    /// Lipschitz constant of `∇V`, used for energy-decay tolerances.
    pub grad_lipschitz: f64,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential")
            .field("grad_lipschitz", &self.grad_lipschitz)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum PotentialSpec {
    Zero,
    /// `V(x) = |x - center|`.
    Norm { center: Vec2 },
    /// `V(x) = |x - center|² / 2`.
    Quadratic { center: Vec2 },
    /// `V(x) = g · x`.
    Linear { gradient: Vec2 },
    /// Geodesic distance to the nearest target inside the domain, computed
    /// by fast marching with spacing `h_fmm`.
    Eikonal { targets: Vec<Vec2>, h_fmm: f64 },
    Custom(CustomPotential),
}

/// A potential ready for evaluation on a given domain.
#[derive(Debug, Clone)]
pub struct Potential {
    spec: PotentialSpec,
    field: Option<GridField>,
    dom: DomainGeometry,
}

impl Potential {
    pub fn new(spec: PotentialSpec, dom: &DomainGeometry) -> Result<Self> {
        let field = match &spec {
            PotentialSpec::Eikonal { targets, h_fmm } => Some(GridField::fast_marching(dom, targets, *h_fmm)?),
            _ => None,
        };
        Ok(Self { spec, field, dom: dom.clone() })
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn field(&self) -> Option<&GridField> {
        self.field.as_ref()
    }

    fn check_inside(&self, x: &Vec2) -> Result<()> {
        if self.dom.contains_tol(x, 1e-9 * self.dom.diameter()) {
            Ok(())
        } else {
            Err(Error::OutsideDomain(x.x, x.y))
        }
    }

    pub fn value(&self, x: &Vec2) -> Result<f64> {
        self.check_inside(x)?;
        Ok(match &self.spec {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::Norm { center } => (x - center).norm(),
            PotentialSpec::Quadratic { center } => 0.5 * (x - center).norm_squared(),
            PotentialSpec::Linear { gradient } => gradient.dot(x),
            PotentialSpec::Eikonal { .. } => self.field.as_ref().expect("field built in new").value(x),
            PotentialSpec::Custom(c) => (c.eval)(x).0,
        })
    }

    pub fn gradient(&self, x: &Vec2) -> Result<Vec2> {
        self.check_inside(x)?;
        Ok(match &self.spec {
            PotentialSpec::Zero => Vec2::zeros(),
            PotentialSpec::Norm { center } => {
                let d = x - center;
                let r = d.norm();
                if r > 0.0 {
                    d / r
                } else {
                    Vec2::zeros()
                }
            }
            PotentialSpec::Quadratic { center } => x - center,
            PotentialSpec::Linear { gradient } => *gradient,
            PotentialSpec::Eikonal { .. } => self.field.as_ref().expect("field built in new").gradient(x),
            PotentialSpec::Custom(c) => (c.eval)(x).1,
        })
    }

    /// Lipschitz constant of `∇V` away from its kinks.
    pub fn grad_lipschitz(&self) -> f64 {
        match &self.spec {
            PotentialSpec::Quadratic { .. } => 1.0,
            PotentialSpec::Custom(c) => c.grad_lipschitz,
            _ => 0.0,
        }
    }
}

/// Even interaction kernel `W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `W(z) = s |z|² / 2`.
    Quadratic { strength: f64 },
    /// `W(z) = s exp(-|z|² / 2w²)`.
    Gaussian { strength: f64, width: f64 },
}

impl KernelSpec {
    pub fn value(&self, z: &Vec2) -> f64 {
        match *self {
            KernelSpec::Quadratic { strength } => 0.5 * strength * z.norm_squared(),
            KernelSpec::Gaussian { strength, width } => strength * (-z.norm_squared() / (2.0 * width * width)).exp(),
        }
    }

    pub fn gradient(&self, z: &Vec2) -> Vec2 {
        match *self {
            KernelSpec::Quadratic { strength } => strength * z,
            KernelSpec::Gaussian { strength, width } => {
                let w2 = width * width;
                -strength / w2 * (-z.norm_squared() / (2.0 * w2)).exp() * z
            }
        }
    }

    pub fn grad_lipschitz(&self) -> f64 {
        match *self {
            KernelSpec::Quadratic { strength } => strength.abs(),
            KernelSpec::Gaussian { strength, width } => strength.abs() / (width * width),
        }
    }

    /// `-(1/N) Σ_{j≠i} ∇W(x_i - x_j)` for every particle.
    pub fn forces(&self, x: &[Vec2]) -> Vec<Vec2> {
        let n = x.len() as f64;
        x.iter()
            .enumerate()
            .map(|(i, xi)| {
                let mut f = Vec2::zeros();
                for (j, xj) in x.iter().enumerate() {
                    if j != i {
                        f -= self.gradient(&(xi - xj));
                    }
                }
                f / n
            })
            .collect()
    }

    /// `(1/2N²) Σ_{i≠j} W(x_i - x_j)`.
    pub fn energy(&self, x: &[Vec2]) -> f64 {
        let n = x.len() as f64;
        let mut s = 0.0;
        for (i, xi) in x.iter().enumerate() {
            for xj in &x[i + 1..] {
                s += self.value(&(xi - xj));
            }
        }
        s / (n * n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexPolygon;

    fn box_domain(x0: f64, y0: f64, x1: f64, y1: f64) -> DomainGeometry {
        DomainGeometry::single(ConvexPolygon::rectangle(x0, y0, x1, y1).unwrap())
    }

    #[test]
    fn analytic_gradients() {
        let dom = box_domain(-10.0, -10.0, 10.0, 10.0);
        let q = Potential::new(PotentialSpec::Quadratic { center: Vec2::zeros() }, &dom).unwrap();
        assert_eq!(q.gradient(&Vec2::new(1.5, -2.0)).unwrap(), Vec2::new(1.5, -2.0));
        let n = Potential::new(PotentialSpec::Norm { center: Vec2::zeros() }, &dom).unwrap();
        let g = n.gradient(&Vec2::new(3.0, 4.0)).unwrap();
        assert!((g - Vec2::new(0.6, 0.8)).norm() < 1e-15);
        assert_eq!(n.gradient(&Vec2::zeros()).unwrap(), Vec2::zeros());
        assert!(matches!(n.gradient(&Vec2::new(11.0, 0.0)), Err(Error::OutsideDomain(..))));
    }

    fn max_error_free_space(h: f64) -> f64 {
        let dom = box_domain(-1.0, -1.0, 1.0, 1.0);
        let f = GridField::fast_marching(&dom, &[Vec2::zeros()], h).unwrap();
        let mut err: f64 = 0.0;
        for j in 0..f.ny {
            for i in 0..f.nx {
                let p = Vec2::new(f.origin[0] + i as f64 * f.spacing[0], f.origin[1] + j as f64 * f.spacing[1]);
                err = err.max((f.value_at_node(i, j) - p.norm()).abs());
            }
        }
        err
    }

    #[test]
    fn fast_marching_converges_to_distance() {
        let e1 = max_error_free_space(0.04);
        let e2 = max_error_free_space(0.02);
        let e3 = max_error_free_space(0.01);
        assert!(e1 < 0.1 && e2 < e1 && e3 < e2, "{e1} {e2} {e3}");
        // first order: the error ratio stays bounded by a constant times h
        assert!(e3 / 0.01 < 2.0 * e1 / 0.04 + 1.0);
    }

    #[test]
    fn two_targets_give_min_distance() {
        let dom = box_domain(0.0, 0.0, 2.0, 1.0);
        let t = [Vec2::new(0.0, 0.5), Vec2::new(2.0, 0.5)];
        let f = GridField::fast_marching(&dom, &t, 0.01).unwrap();
        for p in [Vec2::new(0.3, 0.4), Vec2::new(1.7, 0.9), Vec2::new(1.0, 0.5)] {
            let exact = (p - t[0]).norm().min((p - t[1]).norm());
            assert!((f.value(&p) - exact).abs() < 0.03);
        }
    }

    #[test]
    fn shortest_path_around_a_corner() {
        let a = ConvexPolygon::rectangle(0.0, 0.0, 2.0, 1.0).unwrap();
        let b = ConvexPolygon::rectangle(0.0, 1.0, 1.0, 2.0).unwrap();
        let dom = DomainGeometry::new(vec![a, b]).unwrap();
        let target = Vec2::new(1.8, 0.8);
        let query = Vec2::new(0.2, 1.8);
        let corner = Vec2::new(1.0, 1.0);
        let exact = (target - corner).norm() + (corner - query).norm();
        let mut prev = f64::INFINITY;
        for h in [0.02, 0.01, 0.005] {
            let f = GridField::fast_marching(&dom, &[target], h).unwrap();
            let err = (f.value(&query) - exact).abs();
            assert!(err < 0.06 && err < prev, "h = {h}: error {err}");
            prev = err;
        }
    }

    #[test]
    fn eikonal_gradient_points_radially() {
        let dom = box_domain(-1.0, -1.0, 1.0, 1.0);
        let p = Potential::new(PotentialSpec::Eikonal { targets: vec![Vec2::zeros()], h_fmm: 0.01 }, &dom).unwrap();
        for x in [Vec2::new(0.5, 0.2), Vec2::new(-0.3, -0.7), Vec2::new(0.05, 0.9), Vec2::new(0.98, -0.99)] {
            let g = p.gradient(&x).unwrap();
            assert!((g - x.normalize()).norm() < 0.1, "{x:?}: {g:?}");
            assert!(g.norm() <= 1.0 + 0.05);
        }
    }

    #[test]
    fn unreachable_region_is_reported() {
        // two pieces touching only at a corner: a grid path cannot cross
        let a = ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let b = ConvexPolygon::rectangle(1.5, 1.5, 2.0, 2.0).unwrap();
        let dom = DomainGeometry::new(vec![a, b]).unwrap();
        assert!(matches!(
            GridField::fast_marching(&dom, &[Vec2::new(0.5, 0.5)], 0.05),
            Err(Error::UnreachableRegion(_))
        ));
    }

    #[test]
    fn kernel_forces_skip_self_interaction() {
        let k = KernelSpec::Quadratic { strength: 1.0 };
        let x = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        let f = k.forces(&x);
        assert_eq!(f[0], Vec2::new(0.5, 0.0));
        assert_eq!(f[1], Vec2::new(-0.5, 0.0));
        assert!((k.energy(&x) - 0.125).abs() < 1e-15);
        let g = KernelSpec::Gaussian { strength: 2.0, width: 0.5 };
        let z = Vec2::new(0.3, -0.1);
        let hstep = 1e-6;
        let fd = (g.value(&(z + Vec2::new(hstep, 0.0))) - g.value(&(z - Vec2::new(hstep, 0.0)))) / (2.0 * hstep);
        assert!((fd - g.gradient(&z).x).abs() < 1e-8);
    }
}
