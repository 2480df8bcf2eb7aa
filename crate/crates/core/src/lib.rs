//! Parametric surrogate models of subdomain problems built with the proper
//! generalized decomposition, glued online by an overlapping Schwarz method
//! solved with matrix-free GMRES.

pub mod bench;
pub mod error;
pub mod fem;
pub mod param_grid;
pub mod pgd;
pub mod reference;
pub mod schwarz;
pub mod separated;
pub mod sparse;
pub mod subdomain;

pub use error::{Error, Result};
pub use param_grid::{interp_mode, make_uniform_axis, ParamAxis, ParamPoint};
