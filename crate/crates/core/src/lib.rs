//! Simulation, joint drift–diffusivity estimation, and identifiability
//! diagnostics for overdamped Langevin dynamics `dX = −∇Ψ(X)dt + σ dW`.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod estimate;
pub mod fisher;
pub mod io;
pub mod metrics;
pub mod model;
pub mod potentials;
pub mod rng;
pub mod sim;
pub mod stationary;

pub use error::{Error, Result};
pub use model::LangevinModel;
pub use potentials::{MultiIndex, NamedKind, NamedPotential, PolynomialPotential, Potential};
pub use sim::{InitialDistribution, Snapshot, SnapshotSeries, TrajectorySet};
