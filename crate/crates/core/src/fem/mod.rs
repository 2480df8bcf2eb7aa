//! Structured quadrilateral finite elements: meshes, quadrature, sectional
//! matrix and vector assembly, SUPG stabilization, DOF partitions and
//! field export.

mod assembly;
mod function;
mod mesh;
mod partition;
pub mod quadrature;
mod vtk;

pub use assembly::{
    assemble_convection, assemble_load, assemble_load_rule, assemble_mass, assemble_mass_rule,
    assemble_neumann, assemble_stiffness, assemble_stiffness_rule, assemble_supg,
    assemble_convection_rule, interpolate, l2_error, supg_tau, supg_tau_value,
};
pub use function::{Anisotropy, SpaceFunction, VectorField};
pub use mesh::{uniform_breaks, BoundaryEdge, Element, Side, StructuredMesh};
pub use partition::{dirichlet_columns, restriction, DofPartition, DofRole, EdgeTag, Interface};
pub use vtk::{write_vtk, write_vtk_points};
