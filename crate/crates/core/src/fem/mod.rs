//! Plane linear elasticity on structured crossed triangulations.

pub mod assembly;
pub mod boundary;
pub mod constraints;
pub mod element;
pub mod mesh;
pub mod solver;

pub use boundary::{boundary_mass, BoundaryDiscretisation};
pub use constraints::{constrain, BcKind, BcModel};
pub use mesh::{build_grid_mesh, build_mesh, ElementOrder, Mesh, Rect, Side};
pub use solver::{solve, ConstraintRow, Constraints, Factorization, LinearSystem, Solution};
