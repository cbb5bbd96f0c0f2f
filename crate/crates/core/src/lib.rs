//! Single-observable quantum state tomography for fixed-photon-number optical states.
//!
//! A state `rho_0` of `N` photons in `m` ports is padded with `M - m` vacuum
//! ancilla ports, sent through a random `M`-port linear coupler, and measured
//! with `N`-fold correlation detectors. All `C(M-1+N, N)` outcome probabilities
//! come from one observable. [`recovery`] reconstructs `rho_0` from them under a
//! low-rank prior.
//!
//! Module map:
//! - [`fock`]: occupation bases, click and original-subspace index sets
//! - [`optical`]: permanents and the lifted Fock-space unitary
//! - [`ensembles`]: Haar couplers, random mixed states, depolarization, waveguide arrays
//! - [`measurement`]: observable, outcome simulation, noise, POVM, measurement matrix
//! - [`recovery`]: spectrahedron projection, constrained least squares, LogDet reweighting
//! - [`metrics`]: fidelity, purity, entropy, numerical rank
//! - [`experiment`]: seeded sweeps reproducing the numerical studies

pub mod density;
pub mod ensembles;
pub mod error;
pub mod experiment;
pub mod fock;
pub mod linalg;
pub mod measurement;
pub mod metrics;
pub mod optical;
pub mod recovery;

pub use density::{ComplexMatrixParts, DensityMatrix};
pub use error::{QstError, Result};
pub use fock::{FockBasis, Occupation};
pub use measurement::{CouplerSource, DetectorMode, MeasurementMatrix, MeasurementRecord, PovmSet};
pub use optical::{LiftedUnitary, PortUnitary};
pub use recovery::{RecoveryConfig, RecoveryResult, Solver};
