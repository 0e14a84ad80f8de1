//! Gain-based scheduling of stochastic gradient updates for linear
//! regression tasks that share a constrained communication channel.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: exact cost, gradient and gain of a task with known distribution.
//! * [`data`]: seeded Gaussian data generation.
//! * [`estimator`]: batch-only gradient, Hessian, cost and gain estimates.
//! * [`policies`]: threshold, greedy-gain, gradient-norm and baseline rules.
//! * [`simulator`]: scheduled SGD trajectories and Monte Carlo aggregation.
//! * [`theory`]: convergence envelope and communication budget checks.

pub mod data;
pub mod error;
pub mod estimator;
pub mod model;
pub mod policies;
pub mod simulator;
pub mod stats;
pub mod theory;

pub use data::{cholesky_factor, random_task, sample_batch, DataBatch, RngStream};
pub use error::{Error, Result};
pub use estimator::{
    approximate_gain, empirical_hessian, empirical_objective, estimated_gain, stochastic_gradient,
    GainEstimate, GainMode,
};
pub use model::{
    contraction_factor, exact_gain, exact_gradient, exact_objective, max_stepsize, ModelState,
    SpectralInfo, TaskSpec,
};
pub use policies::{
    baseline_select, gradient_norm_select, greedy_gain_select, threshold_decide, Baseline,
    PolicyConfig, PolicyKind, ScheduleDecision,
};
pub use simulator::{
    monte_carlo, monte_carlo_summary, run, run_indexed, AggregateStats, Execution, MonteCarlo,
    MonteCarloSummary, RunSummary, SimConfig, StepRecord, Trajectory,
};
pub use stats::{mean_se, MeanSe};
pub use theory::{
    check_budget, check_envelope, communication_budget, convergence_envelope,
    equilibrium_gradient_covariance, envelope_limit, BoundKind, BoundReport, BoundRow,
    GradientNoise,
};
