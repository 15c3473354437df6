//! Far-field freeform reflector design by Sobolev gradient descent on the
//! Kantorovich dual with logarithmic cost, discretized by curved finite
//! elements on a spherical cap and validated by ray tracing.

pub mod error;
pub mod fem;
pub mod intensity;
pub mod mesh;
pub mod pgm;
pub mod problems;
pub mod quadrature;
pub mod raytrace;
pub mod solver;
pub mod sphere;

pub use error::{Error, Result};
pub use intensity::{Intensity, TargetBoundary};
pub use mesh::{CapMesh, GeometryOrder};
pub use solver::{ReflectorSolver, SolveReport, SolverConfig};
pub use sphere::{CostSign, TangentVector, UnitVector, Vec3};
