//! Vector autoregression under ordinary, reduced-rank, envelope and
//! reduced-rank envelope parameterizations.
//!
//! The usual flow is [`TimeSeriesData`] → [`LagDesign`] →
//! [`AutocovarianceSet`] → one of the `fit_*` functions. Everything downstream
//! of the moments (selection, asymptotic covariances, forecasting) takes
//! those fitted [`VarEstimate`]s as input.

pub mod asymptotics;
pub mod error;
pub mod estimators;
pub mod forecast;
pub mod matrix_kit;
pub mod moments;
pub mod selection;
pub mod sim;

/// Crate version, echoed into CLI run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use estimators::{
    conditional_loglik, fit_evar, fit_known_phi, fit_model, fit_olsvar, fit_revar, fit_rrvar, nop_count, Algorithm,
    Dims, EnvelopeFactors, ModelKind, OptimizerOptions, OptimizerReport, RankFactors, VarEstimate,
};
pub use forecast::{
    bootstrap_forecast_table, evaluate_rmsfe, forecast_h, stationary_bootstrap, BootstrapConfig, EvalConfig,
    ForecastRun, ForecastTable, RefitPolicy,
};
pub use matrix_kit::SymmetricMatrix;
pub use moments::{canonical_correlations, AutocovarianceSet, CanonicalDecomposition, LagDesign, TimeSeriesData};
pub use selection::{select_dims, select_lag, select_rank, select_staged, Criterion, DimsMode, SelectionReport};
pub use sim::{run_monte_carlo, run_selection_study, ErrorFamily, McReport, SelectionStudy, SimulationScenario};
