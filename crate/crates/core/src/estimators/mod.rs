//! Monte-Carlo mutual-information estimation and the control-variate
//! combiner.

mod control_variate;
mod infonce;
mod ksg;
mod sampler;

pub use control_variate::{
    combine_cv, optimal_beta, pilot_mean, variance_reduction_report,
    variance_reduction_report_with, BetaEstimate, ControlVariateReport, EstimatorTrace, PilotSplit,
    DEFAULT_PILOT_FRACTION,
};
pub use infonce::{
    gaussian_infonce_bounds, infonce_bound, phase_embedding, InfoNceBound, GAUSS_CRITIC_FREQUENCY,
    GAUSS_CRITIC_TEMPERATURE,
};
pub use ksg::ksg_mi;
pub use sampler::{gaussian_mi, gaussian_pair_sampler, SampleBatch};
