//! Anisotropic (Finsler) capacity toolkit.
//!
//! Computes capacities, capacitary potentials and torsion functions for the
//! Dirichlet energy `∫ ½ H(Dv)²` of a norm `H`, together with the convex
//! geometry of the associated Wulff shapes: support functions, anisotropic
//! perimeter and mean curvature, mixed volumes and the Minkowski-type
//! inequality. The overdetermined boundary condition `H(Du) = const` is
//! checked numerically to classify domains as Wulff balls or not.

pub mod bodies;
pub mod error;
pub mod norms;
pub mod oracles;
pub mod pde;
pub mod sphere;
pub mod symfun;

pub use error::{Error, Result};
pub use norms::{NormFamily, NormModel};
pub use sphere::SphereGrid;

/// Entry point used by the `finslercap` binary; returns the process exit code.
pub fn cli_main() -> i32 {
    eprintln!("cli not wired yet");
    1
}
