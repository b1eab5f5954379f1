//! Numerical weak KAM toolkit.
//!
//! Solves discounted Hamilton–Jacobi equations `λu + H(x, Du) = 0` on truncated boxes and
//! computes the ergodic structure of `H(x, Du) = c`: the critical value, the intrinsic
//! semidistance `S_a`, the Aubry set, the Peierls barrier and weak KAM solutions. Mather
//! measures (ergodic and discounted) are computed as optima of occupation-measure linear
//! programs, and the vanishing-discount limit is assembled from both sides.
//!
//! Everything lives on a uniform box grid ([`grid::Grid`]) with a finite symmetric velocity
//! set ([`grid::VelocitySet`]); the semi-Lagrangian foot-point structure
//! ([`grid::Transition`]) is shared by the value iteration, the shortest-path graphs and the
//! linear programs.

pub mod discounted;
pub mod ergodic;
pub mod field;
pub mod grid;
pub mod limit;
pub mod measures;
pub mod model;
pub mod simplex;

pub use field::ValueField;
pub use grid::{BoxDomain, Discretization, Grid, Transition, VelocitySet};
pub use model::{Family, HamiltonianModel, Potential};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
