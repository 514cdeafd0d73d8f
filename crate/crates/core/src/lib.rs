//! Data-driven identification of discrete-time linear state-space models.
//!
//! The crate fits `(A, B, C, D)` models to state, input and output snapshots
//! with input-output dynamic mode decomposition (ioDMD), compresses the state
//! data with proper orthogonal decomposition (POD), generates training data by
//! persistent or cross excitation, and enforces discrete-time stability of an
//! identified model by solving a spectral-radius-constrained least-squares
//! problem with a quasi-Newton exact-penalty method.
//!
//! Everything here is `no_std` with `alloc`; file formats, the experiment
//! harness and the command-line driver live in the `iodmd` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;

pub mod excite;
pub mod identify;
pub mod linalg;
pub mod plant;
pub mod pod;
pub mod snapshot;
pub mod stabilize;

mod bfgs;

pub use error::{Error, Result};
pub use excite::{ExcitationKind, ExcitationSpec};
pub use identify::{DmdModes, Fit, StateSpaceModel, TimeDomain};
pub use linalg::{SvdResult, Tolerances};
pub use plant::{InputTiming, Plant, SimConfig};
pub use pod::{PodBasis, PodOptions, PodSpectrum, ProjectionError};
pub use snapshot::{SnapshotPairs, TrajectoryData};
pub use stabilize::{IterateRecord, Memory, StabilizeConfig, StabilizeMode, StabilizeReport};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
/// Complex scalar.
pub type Complex = nalgebra::Complex<f64>;
