//! Planar geometry: convex domains, Laguerre cells clipped to polygons and
//! disks, and exact or quadrature-based integrals over the resulting regions.

mod cell;
mod clip;
mod domain;
mod grid;
pub(crate) mod power;
pub mod quadrature;

pub use cell::{clip_with_disk, BoundaryEdge, CellMoments, CellPart, CellRegion, Facet};
pub use clip::{EdgeLabel, LabeledPolygon};
pub use domain::{ConvexPolygon, DomainGeometry, ParticleSet};
pub(crate) use domain::check_distinct as domain_check_distinct;
pub use grid::{min_pairwise_distance, SpatialGrid};
pub use power::{build_ball_clipped_cells, build_power_diagram};
pub use quadrature::{gaussian_cell_integrals, GaussianIntegrals};

pub type Vec2 = nalgebra::Vector2<f64>;

#[inline]
pub fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

#[inline]
pub fn vec2(x: f64, y: f64) -> Vec2 {
    Vec2::new(x, y)
}
