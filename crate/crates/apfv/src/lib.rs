//! Cell-centered finite-volume solver for linear Friedrichs systems with
//! stiff relaxation on unstructured 2-D meshes.
//!
//! The solver splits a symmetric hyperbolic system with relaxation source
//! into a "diffusive" block, discretized with the nodal JL-(b)
//! asymptotic-preserving scheme, and a remainder block discretized with
//! classical upwind or Rusanov fluxes.  Model builders are provided for the
//! hyperbolic heat equation (P1), spherical-harmonic P_N systems and
//! discrete-ordinates S_N systems, together with a benchmark harness for
//! convergence studies.

pub mod harness;
pub mod mesh;
pub mod models;
pub mod numerics;
pub mod par;
pub mod problems;
pub mod schemes;
pub mod system;
pub mod timeint;

pub use mesh::Mesh;
pub use system::FriedrichsSystem;
