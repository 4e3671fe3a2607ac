//! Lagrangian particle discretization of Wasserstein gradient flows.
//!
//! Particles `x_1..x_N` carry mass `1/N` each. The congestion constraint
//! (crowd motion, density at most 1) or the entropy (linear diffusion) is
//! replaced by its Moreau–Yosida regularization `F_eps`, whose value and
//! gradient are obtained from a semi-discrete optimal transport problem
//! solved on Laguerre (power) cells. The particles then follow
//!
//! ```text
//! dx_i/dt = -∇V(x_i) - (1/N) Σ_j ∇W(x_i - x_j) + (β_i - x_i) / eps
//! ```
//!
//! where `β_i` is the barycenter of the mass transported onto `x_i`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod oned;
pub mod ot;
pub mod potentials;
pub mod presets;
pub mod snapshot;
pub mod validation;

pub use error::{Error, Result};
pub use geometry::{CellRegion, ConvexPolygon, DomainGeometry, ParticleSet, Vec2};
pub use ot::{DualState, MoreauYosidaResult, NewtonOptions, TransportMode};
