use super::forward::{predict_all_counterfactuals, predict_outcome};
use super::params::HiCiParams;
use crate::datagen::Dataset;
use crate::error::Result;
use crate::losses::loss_rmse;
use crate::metrics::MetricsReport;
use crate::scalar::Scalar;

/// Test metrics of `params` on `d`.
pub fn evaluate<S: Scalar>(params: &HiCiParams<S>, d: &Dataset) -> Result<MetricsReport> {
    let pred = predict_all_counterfactuals(params, &d.x.cast::<S>())?.cast::<f64>();
    MetricsReport::compute(d.y_full.as_ref(), &pred, &d.t, &d.e, &d.meta.dosage_grid)
}

/// RMSE of the factual predictions on `d`.
pub fn factual_rmse<S: Scalar>(params: &HiCiParams<S>, d: &Dataset) -> Result<f64> {
    let y = predict_outcome(params, &d.x.cast::<S>(), &d.t, &d.e)?;
    let y: Vec<f64> = y.into_iter().map(Scalar::as_f64).collect();
    loss_rmse(&d.y, &y)
}
