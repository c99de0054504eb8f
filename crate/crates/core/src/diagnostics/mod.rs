//! Residuals, predictive checks and cross-validation.

mod cv;
mod ppc;
mod residuals;

pub use cv::{cross_validate, CvFold, CvReport, CvScheme};
pub use ppc::{
    draw_state_trajectory, point_mass, posterior_predictive_check, process_assumption_check, PpcMode, PpcResult, ProcessCheck,
    ReplicateStates, Statistic,
};
pub use residuals::{
    one_step_predictive, osa_residuals, pit_scores, quantile_residuals, response_residuals, response_residuals_from_states,
    smoothed_observation_means, OsaResiduals, Predictive, ResidualKind, ResidualSeries, ResidualSummary, SUMMARY_LAGS,
};
pub use tests::{acf, acf_dropping_missing, kolmogorov_survival, ks_test, mean_zero_test, KsResult, MeanTest, Reference};
