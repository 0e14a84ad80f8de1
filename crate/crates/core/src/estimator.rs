//! Quantities computed from a batch of data alone: the stochastic gradient,
//! empirical Hessian and cost, and the approximate performance gain.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DataBatch;
use crate::error::{check_dim, check_stepsize, Error, Result};
use crate::model::{exact_gain, ModelState, TaskSpec};

/// How the performance gain of a candidate update is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainMode {
    /// From the batch only (empirical gradient and Hessian).
    Estimated,
    /// With the true distribution, for the same stochastic update.
    Oracle,
}

impl GainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GainMode::Estimated => "estimated",
            GainMode::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for GainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Predicted change in `J` for the update `w - eps * gradient`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainEstimate {
    pub value: f64,
    /// The candidate update direction; this is what gets transmitted.
    pub gradient: DVector<f64>,
    pub mode: GainMode,
}

fn check_batch(batch: &DataBatch, w: &ModelState) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_dim("weights vs batch features", batch.dim(), w.dim())
}

/// `g = (1/N) sum_i x_i (x_i^T w - y_i)`.
pub fn stochastic_gradient(batch: &DataBatch, w: &ModelState) -> Result<DVector<f64>> {
    check_batch(batch, w)?;
    let residuals = batch.features() * &w.weights - batch.labels();
    Ok(batch.features().tr_mul(&residuals) / batch.len() as f64)
}

/// `(1/N) sum_i x_i x_i^T`.
pub fn empirical_hessian(batch: &DataBatch) -> Result<DMatrix<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(batch.features().tr_mul(batch.features()) / batch.len() as f64)
}

/// `(1/2)(1/N) sum_i (y_i - x_i^T w)^2`.
pub fn empirical_objective(batch: &DataBatch, w: &ModelState) -> Result<f64> {
    check_batch(batch, w)?;
    let residuals = batch.labels() - batch.features() * &w.weights;
    Ok(0.5 * residuals.norm_squared() / batch.len() as f64)
}

/// Data-only gain `eps^2/2 (1/N) sum_i (g^T x_i)^2 - eps g^T g` for the given
/// direction. Costs `O(N n)`; the Hessian is never formed.
pub fn approximate_gain(batch: &DataBatch, g: &DVector<f64>, stepsize: f64) -> Result<f64> {
    check_stepsize(stepsize)?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_dim("direction vs batch features", batch.dim(), g.len())?;
    let projections = batch.features() * g;
    let curvature = projections.norm_squared() / batch.len() as f64;
    Ok(0.5 * stepsize * stepsize * curvature - stepsize * g.norm_squared())
}

/// Gain of the stochastic-gradient update built from `batch`.
///
/// In [`GainMode::Oracle`] the same stochastic direction is scored with the
/// exact quadratic of `task`.
pub fn estimated_gain(
    batch: &DataBatch,
    w: &ModelState,
    stepsize: f64,
    mode: GainMode,
    task: Option<&TaskSpec>,
) -> Result<GainEstimate> {
    check_stepsize(stepsize)?;
    let gradient = stochastic_gradient(batch, w)?;
    let value = match mode {
        GainMode::Estimated => approximate_gain(batch, &gradient, stepsize)?,
        GainMode::Oracle => {
            let task = task.ok_or(Error::MissingOracleTask)?;
            exact_gain(task, w, &gradient, stepsize)?
        }
    };
    Ok(GainEstimate { value, gradient, mode })
}
