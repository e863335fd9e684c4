//! Structure-preserving reduced-order modeling for Hamiltonian systems:
//! proper orthogonal decomposition bases, conservative time integration, and
//! operator inference with symmetry constraints.

pub mod acceptance;
pub mod basis;
pub mod bench;
pub mod cli;
pub mod matkit;
pub mod models;
pub mod reduce;
pub mod timestep;
