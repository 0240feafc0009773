//! Predictors that use traffic data only: per-day ARMA forecasts of travel
//! time and the historical mean of recent congestion starting times.

mod arma;
mod predict;

pub use arma::{
    common_factor_distance, fit_arma, fit_arma_conditioned, forecast, inverse_roots, min_length,
    select_order_aic, select_order_aic_over, spectral_radius, ArmaModel, COMMON_FACTOR_TOLERANCE,
};
pub use predict::{
    arma_coverage, historical_mean_cst, historical_mean_predictions, predict_cst_arma,
    predict_cst_arma_all, read_baseline_predictions, read_baseline_predictions_csv,
    write_baseline_predictions, write_baseline_predictions_csv, ArmaConfig, ArmaCstPrediction,
    BaselinePrediction, BASELINE_HEADER,
};
