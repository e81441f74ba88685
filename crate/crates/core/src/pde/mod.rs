//! Voxel-grid discretization and minimization of the convex Dirichlet
//! energies: the capacity energy `∫ ½H(Dv)²` and the torsion energy
//! `∫ (½H(Dψ)² + ψ)`, together with boundary-flux extraction and pointwise
//! operator diagnostics.

pub mod diagnostics;
pub mod domain;
pub mod energy;
pub mod field;
pub mod flux;
pub mod solve;

pub use domain::{DomainSpec, Gauge, GhostInterp, NodeClass, RadialRegion, VoxelDomain};
pub use energy::{EnergyBreakdown, EnergyModel};
pub use field::{FieldMeta, ScalarField};
pub use flux::{boundary_flux, FluxMethod, FluxOptions, FluxProfile, FluxSamples, RaySide};
pub use solve::{
    minimize, solve_dirichlet, solve_exterior_capacity, solve_torsion, ExteriorRun,
    ExteriorSolution, SolveStats, SolverOptions, TorsionSolution,
};
