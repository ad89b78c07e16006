//! Bosonic and exchange correlation energies of the mean-field electron gas
//! on the torus, with independent cross-checks for every quantity.

pub mod app;
pub mod config;
pub mod correlation;
pub mod error;
pub mod estimates;
pub mod fit;
pub mod fock;
pub mod lattice;
pub mod onebody;
pub mod potential;
pub mod quad;
pub mod report;
pub mod sum;

pub use error::{Error, Result};
pub use lattice::{FermiBall, LatticeVec, Lune, LuneSpectrum, OrbitTable};
pub use potential::{PotentialKind, PotentialModel};
