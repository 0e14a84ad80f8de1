//! Closed-form guarantees for the threshold rule with exact gains, and the
//! harness that checks them against Monte Carlo aggregates.
//!
//! With `Sigma_x = H/2`, contraction `rho` and constant gradient covariance
//! `G`, the expected cost obeys
//!
//! ```text
//! E J(w_k) <= rho^k J(w_0) + (1 - rho^k) [ J* + (lambda + eps^2 Tr(Sigma_x G)) / (1 - rho) ]
//! ```
//!
//! and the expected number of transmissions is at most `(J(w_0) - J*) / lambda`.

use nalgebra::DMatrix;

use crate::error::{check_stepsize, Error, Result};
use crate::model::{contraction_factor, exact_objective, ModelState, TaskSpec};
use crate::simulator::AggregateStats;

/// Standard errors of slack granted to empirical means.
pub const SLACK_STANDARD_ERRORS: f64 = 2.0;

/// Covariance `G` of the stochastic gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientNoise {
    pub covariance: DMatrix<f64>,
}

/// Gradient covariance at `w = w*`: there `g = -(1/N) sum_i x_i eta_i`, so
/// `G = sigma^2 H / N`.
pub fn equilibrium_gradient_covariance(task: &TaskSpec, batch_size: usize) -> Result<GradientNoise> {
    if batch_size == 0 {
        return Err(Error::ZeroCount("batch size"));
    }
    Ok(GradientNoise {
        covariance: task.second_moment() * (task.noise_variance() / batch_size as f64),
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidLambda(lambda))
    }
}

struct EnvelopeTerms {
    rho: f64,
    limit: f64,
}

fn envelope_terms(task: &TaskSpec, stepsize: f64, lambda: f64, noise: &GradientNoise) -> Result<EnvelopeTerms> {
    check_stepsize(stepsize)?;
    check_lambda(lambda)?;
    let spectral = contraction_factor(task, stepsize)?;
    let rho = spectral.contraction;
    if rho.is_nan() || rho >= 1.0 {
        return Err(Error::VacuousBound(rho));
    }
    let trace = (&spectral.half_moment * &noise.covariance).trace();
    let limit = task.noise_floor() + (lambda + stepsize * stepsize * trace) / (1.0 - rho);
    Ok(EnvelopeTerms { rho, limit })
}

/// `J* + (lambda + eps^2 Tr(Sigma_x G)) / (1 - rho)`, the envelope as `k -> inf`.
pub fn envelope_limit(task: &TaskSpec, stepsize: f64, lambda: f64, noise: &GradientNoise) -> Result<f64> {
    envelope_terms(task, stepsize, lambda, noise).map(|t| t.limit)
}

/// Envelope values for `k = 0..=horizon`; the first equals `J(w_0)`.
pub fn convergence_envelope(
    task: &TaskSpec,
    stepsize: f64,
    lambda: f64,
    noise: &GradientNoise,
    w0: &ModelState,
    horizon: usize,
) -> Result<Vec<f64>> {
    let EnvelopeTerms { rho, limit } = envelope_terms(task, stepsize, lambda, noise)?;
    let j0 = exact_objective(task, w0)?;
    let mut rho_k = 1.0;
    let mut values = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        values.push(rho_k * j0 + (1.0 - rho_k) * limit);
        rho_k *= rho;
    }
    Ok(values)
}

/// `(J(w_0) - J*) / lambda`. Errors for `lambda = 0`, where no finite
/// budget exists.
pub fn communication_budget(task: &TaskSpec, w0: &ModelState, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Err(Error::UnboundedBudget);
    }
    Ok((exact_objective(task, w0)? - task.noise_floor()) / lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    ConvergenceEnvelope,
    CommunicationRate,
}

impl BoundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::ConvergenceEnvelope => "envelope",
            BoundKind::CommunicationRate => "budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub iter: usize,
    pub bound: f64,
    pub empirical_mean: f64,
    pub empirical_se: f64,
    pub violated: bool,
}

impl BoundRow {
    /// `bound + 2 se - mean`; negative means violated.
    pub fn margin(&self) -> f64 {
        self.bound + SLACK_STANDARD_ERRORS * self.empirical_se - self.empirical_mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub rows: Vec<BoundRow>,
    pub violated: bool,
    /// Smallest margin over all checked points.
    pub worst_margin: f64,
}

impl BoundReport {
    pub fn last(&self) -> &BoundRow {
        self.rows.last().expect("reports have at least one row")
    }
}

fn build_report(kind: BoundKind, bounds: &[f64], means: &[f64], ses: &[f64]) -> Result<BoundReport> {
    if bounds.len() != means.len() || means.len() != ses.len() || bounds.is_empty() {
        return Err(Error::HorizonMismatch {
            bound: bounds.len(),
            empirical: means.len(),
        });
    }
    let rows: Vec<BoundRow> = bounds
        .iter()
        .zip(means.iter().zip(ses))
        .enumerate()
        .map(|(iter, (&bound, (&mean, &se)))| {
            let mut row = BoundRow {
                iter,
                bound,
                empirical_mean: mean,
                empirical_se: se,
                violated: false,
            };
            row.violated = row.margin().is_nan() || row.margin() < 0.0;
            row
        })
        .collect();
    let worst_margin = rows.iter().map(BoundRow::margin).fold(f64::INFINITY, f64::min);
    let violated = rows.iter().any(|r| r.violated);
    Ok(BoundReport {
        kind,
        rows,
        violated,
        worst_margin,
    })
}

/// Compares the mean cost at each `k` with the envelope.
pub fn check_envelope(stats: &AggregateStats, envelope: &[f64]) -> Result<BoundReport> {
    build_report(BoundKind::ConvergenceEnvelope, envelope, &stats.mean_cost, &stats.se_cost)
}

/// Compares cumulative transmissions at each `k` with the budget. Since the
/// cumulative count is nondecreasing, a finite horizon only checks a
/// necessary condition.
pub fn check_budget(stats: &AggregateStats, budget: f64) -> Result<BoundReport> {
    let bounds = vec![budget; stats.mean_cumulative.len()];
    build_report(
        BoundKind::CommunicationRate,
        &bounds,
        &stats.mean_cumulative,
        &stats.se_cumulative,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn setup_a() -> TaskSpec {
        TaskSpec::setup_a(1.0).unwrap()
    }

    #[test]
    fn equilibrium_covariance_examples() {
        let g = equilibrium_gradient_covariance(&setup_a(), 20).unwrap();
        assert_relative_eq!(g.covariance[(0, 0)], 0.15, max_relative = 1e-15);
        assert_relative_eq!(g.covariance[(1, 1)], 0.05, max_relative = 1e-15);
        assert_eq!(g.covariance[(0, 1)], 0.0);

        let quiet = TaskSpec::setup_a(0.0).unwrap();
        assert_eq!(equilibrium_gradient_covariance(&quiet, 20).unwrap().covariance, DMatrix::zeros(2, 2));

        let g1 = equilibrium_gradient_covariance(&setup_a(), 5).unwrap().covariance;
        let g4 = equilibrium_gradient_covariance(&setup_a(), 20).unwrap().covariance;
        assert_relative_eq!(g4, g1 / 4.0, max_relative = 1e-15);
        assert!(equilibrium_gradient_covariance(&setup_a(), 0).is_err());
    }

    #[test]
    fn envelope_examples() {
        let task = setup_a();
        let noise = equilibrium_gradient_covariance(&task, 20).unwrap();
        let limit = envelope_limit(&task, 0.1, 1.0, &noise).unwrap();
        assert_relative_eq!(limit, 0.5 + 1.0025 / 0.19, max_relative = 1e-12);
        assert!((limit - 5.7763).abs() < 1e-3);

        let w0 = ModelState::zeros(2);
        let env = convergence_envelope(&task, 0.1, 1.0, &noise, &w0, 400).unwrap();
        assert_eq!(env[0], 26.5);
        assert!((env[400] - limit).abs() < 1e-9);
    }

    #[test]
    fn noiseless_thresholdless_envelope_decays_geometrically() {
        let task = setup_a();
        let zero = GradientNoise { covariance: DMatrix::zeros(2, 2) };
        let env = convergence_envelope(&task, 0.1, 0.0, &zero, &ModelState::zeros(2), 50).unwrap();
        for (k, &value) in env.iter().enumerate() {
            let expected = 0.5 + 0.81f64.powi(k as i32) * 26.0;
            assert_relative_eq!(value, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn envelope_monotone_in_lambda() {
        let task = setup_a();
        let noise = equilibrium_gradient_covariance(&task, 20).unwrap();
        let mut last = f64::NEG_INFINITY;
        for lambda in [0.0, 0.1, 0.5, 1.0, 3.0, 10.0] {
            let limit = envelope_limit(&task, 0.1, lambda, &noise).unwrap();
            assert!(limit >= last);
            last = limit;
        }
    }

    #[test]
    fn envelope_rejects_unstable_stepsize() {
        let task = setup_a();
        let noise = equilibrium_gradient_covariance(&task, 20).unwrap();
        assert!(matches!(
            envelope_limit(&task, 2.0 / 3.0, 1.0, &noise),
            Err(Error::VacuousBound(_))
        ));
        assert!(envelope_limit(&task, 0.1, -1.0, &noise).is_err());
    }

    #[test]
    fn budget_examples() {
        let task = setup_a();
        let w0 = ModelState::zeros(2);
        assert_relative_eq!(communication_budget(&task, &w0, 1.0).unwrap(), 26.0, max_relative = 1e-15);
        assert_relative_eq!(communication_budget(&task, &w0, 2.0).unwrap(), 13.0, max_relative = 1e-15);
        let at_opt = ModelState::new(DVector::from_row_slice(&[3.0, 5.0]));
        assert_eq!(communication_budget(&task, &at_opt, 1.0).unwrap(), 0.0);
        assert_eq!(communication_budget(&task, &w0, 0.0), Err(Error::UnboundedBudget));
        for lambda in [0.3, 1.0, 7.5] {
            let a = communication_budget(&task, &w0, lambda).unwrap();
            let b = communication_budget(&task, &w0, 2.0 * lambda).unwrap();
            assert_relative_eq!(b, a / 2.0, max_relative = 1e-15);
        }
    }

    fn stats(mean_cost: Vec<f64>, se_cost: Vec<f64>, cumulative: Vec<f64>) -> AggregateStats {
        let n = mean_cost.len();
        AggregateStats {
            runs: 10,
            mean_cost,
            se_cost,
            mean_rate: vec![0.0; n],
            se_rate: vec![0.0; n],
            se_cumulative: vec![0.0; n],
            mean_cumulative: cumulative,
        }
    }

    #[test]
    fn report_flags_violations_beyond_slack() {
        let s = stats(vec![10.0, 5.0, 4.0], vec![0.0, 0.5, 0.1], vec![0.0, 1.0, 2.0]);
        let ok = check_envelope(&s, &[10.0, 4.5, 4.0]).unwrap();
        assert!(!ok.violated);
        assert_relative_eq!(ok.worst_margin, 0.0);
        let bad = check_envelope(&s, &[10.0, 3.9, 4.0]).unwrap();
        assert!(bad.violated);
        assert!(bad.rows[1].violated && !bad.rows[2].violated);

        assert!(!check_budget(&s, 2.0).unwrap().violated);
        assert!(check_budget(&s, 1.5).unwrap().violated);
        assert!(matches!(
            check_envelope(&s, &[1.0, 2.0]),
            Err(Error::HorizonMismatch { bound: 2, empirical: 3 })
        ));
    }
}
