//! Isoparametric Lagrange finite elements on curved cap meshes.

mod assembly;
mod linsolve;
mod recovery;
mod space;
mod sparse;

pub use assembly::{assemble_mass, assemble_stiffness};
pub use linsolve::{pcg, solve_spd, solve_zero_mean, CgOptions, CgStats, Preconditioner};
pub use recovery::{recover_sigma, tensor_at_qp, vector_at_qp};
pub use space::{BoundaryPoint, FeSpace};
pub use sparse::CsrMatrix;
