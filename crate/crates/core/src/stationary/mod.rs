//! Stationary (Gibbs) laws, the rescaling family that shares them, and
//! numerical stationarity diagnostics.

mod energy;
mod fokker_planck;
mod gibbs;

pub use energy::{energy_distance, stationarity_test, two_sample_test, StationarityRecord, TwoSampleTest, DEFAULT_PERMUTATIONS};
pub use fokker_planck::{fp_operator, fp_residual, fp_residual_report, gibbs_grid_density, FpResidual, GridDensity};
pub use gibbs::{
    gibbs_log_density, langevin_burn_in, metropolis_sample, metropolis_sample_from, rescaled_model,
    tune_proposal_scale, MetropolisOutput, DEFAULT_MH_STEPS, TARGET_ACCEPTANCE,
};
