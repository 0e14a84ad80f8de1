//! Scheduled stochastic-gradient dynamics for one or many tasks.
//!
//! Each iteration every task draws a fresh batch, builds its stochastic
//! gradient and gains, the policy decides, and only scheduled tasks move to
//! `w - eps * g` using the very `g` that was scored. Unscheduled tasks keep
//! their weights.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::data::{sample_batch, RngStream, POLICY_LANE};
use crate::error::{check_dim, check_stepsize, Error, Result};
use crate::estimator::{approximate_gain, stochastic_gradient, GainMode};
use crate::model::{exact_gain, exact_gradient, exact_objective, max_stepsize, ModelState, TaskSpec};
use crate::policies::{PolicyConfig, ScheduleDecision};
use crate::stats::mean_se;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub tasks: Vec<TaskSpec>,
    pub initial_weights: Vec<DVector<f64>>,
    pub stepsizes: Vec<f64>,
    pub batch_size: usize,
    pub horizon: usize,
    pub policy: PolicyConfig,
    pub master_seed: u64,
    /// Permit stepsizes at or above `2 / lambda_max`.
    pub allow_unstable: bool,
    /// Replace stochastic gradients by the exact gradient (noise-free limit).
    pub exact_gradient: bool,
    /// Feed every task from the same random stream (identical batches when
    /// tasks share a dimension).
    pub shared_task_stream: bool,
}

impl SimConfig {
    /// All tasks start from zero with a common stepsize.
    pub fn new(
        tasks: Vec<TaskSpec>,
        stepsize: f64,
        batch_size: usize,
        horizon: usize,
        policy: PolicyConfig,
        master_seed: u64,
    ) -> Self {
        let initial_weights = tasks.iter().map(|t| DVector::zeros(t.dim())).collect();
        let stepsizes = vec![stepsize; tasks.len()];
        Self {
            tasks,
            initial_weights,
            stepsizes,
            batch_size,
            horizon,
            policy,
            master_seed,
            allow_unstable: false,
            exact_gradient: false,
            shared_task_stream: false,
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.tasks.len();
        if m == 0 {
            return Err(Error::NoTasks);
        }
        check_dim("initial weights list", m, self.initial_weights.len())?;
        check_dim("stepsize list", m, self.stepsizes.len())?;
        if self.batch_size == 0 {
            return Err(Error::ZeroCount("batch size"));
        }
        if self.horizon == 0 {
            return Err(Error::ZeroCount("horizon"));
        }
        for (j, task) in self.tasks.iter().enumerate() {
            check_dim("initial weights", task.dim(), self.initial_weights[j].len())?;
            let stepsize = self.stepsizes[j];
            check_stepsize(stepsize)?;
            let limit = max_stepsize(task);
            if !self.allow_unstable && stepsize >= limit {
                return Err(Error::UnstableStepsize {
                    task: j,
                    stepsize,
                    max_stepsize: limit,
                });
            }
        }
        self.policy.validate(m)
    }
}

/// State after one scheduling step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Post-update weights per task.
    pub weights: Vec<DVector<f64>>,
    /// Exact cost `J^j` of the post-update weights.
    pub costs: Vec<f64>,
    pub gain_estimated: Vec<f64>,
    pub gain_oracle: Vec<f64>,
    pub decision: ScheduleDecision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial_weights: Vec<DVector<f64>>,
    pub initial_costs: Vec<f64>,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.initial_costs.len()
    }

    /// Weights after `k` steps, `k = 0..=K`.
    pub fn weights_at(&self, k: usize) -> &[DVector<f64>] {
        if k == 0 {
            &self.initial_weights
        } else {
            &self.steps[k - 1].weights
        }
    }

    /// Costs per task after `k` steps.
    pub fn costs_at(&self, k: usize) -> &[f64] {
        if k == 0 {
            &self.initial_costs
        } else {
            &self.steps[k - 1].costs
        }
    }

    /// Cost averaged over tasks after `k` steps.
    pub fn mean_cost_at(&self, k: usize) -> f64 {
        let costs = self.costs_at(k);
        costs.iter().sum::<f64>() / costs.len() as f64
    }

    pub fn final_mean_cost(&self) -> f64 {
        self.mean_cost_at(self.horizon())
    }

    pub fn final_weights(&self) -> &[DVector<f64>] {
        self.weights_at(self.horizon())
    }

    /// Transmissions per step.
    pub fn step_transmissions(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|s| s.decision.transmissions())
    }

    pub fn transmissions(&self) -> usize {
        self.step_transmissions().sum()
    }

    /// Mean transmissions per step (raw count, not divided by the budget).
    pub fn communication_rate(&self) -> f64 {
        self.transmissions() as f64 / self.horizon() as f64
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            mean_costs: (0..=self.horizon()).map(|k| self.mean_cost_at(k)).collect(),
            transmissions: self.step_transmissions().collect(),
        }
    }
}

fn task_streams(config: &SimConfig, run_index: u64) -> Vec<RngStream> {
    (0..config.num_tasks())
        .map(|j| {
            let lane = if config.shared_task_stream { 0 } else { j as u64 };
            RngStream::for_lane(config.master_seed, run_index, lane)
        })
        .collect()
}

pub fn run(config: &SimConfig) -> Result<Trajectory> {
    run_indexed(config, 0)
}

/// One trajectory on the substreams of Monte Carlo run `run_index`.
pub fn run_indexed(config: &SimConfig, run_index: u64) -> Result<Trajectory> {
    config.validate()?;
    let m = config.num_tasks();
    let mut streams = task_streams(config, run_index);
    let mut policy_rng = RngStream::for_lane(config.master_seed, run_index, POLICY_LANE);

    let mut states: Vec<ModelState> = config
        .initial_weights
        .iter()
        .cloned()
        .map(ModelState::new)
        .collect();
    let initial_costs = config
        .tasks
        .iter()
        .zip(&states)
        .map(|(t, w)| exact_objective(t, w))
        .collect::<Result<Vec<_>>>()?;

    let mut steps = Vec::with_capacity(config.horizon);
    for k in 0..config.horizon {
        let step = (|| {
            let mut gradients = Vec::with_capacity(m);
            let mut gain_estimated = Vec::with_capacity(m);
            let mut gain_oracle = Vec::with_capacity(m);
            for j in 0..m {
                let task = &config.tasks[j];
                let stepsize = config.stepsizes[j];
                let batch = sample_batch(task, config.batch_size, &mut streams[j])?;
                let g = if config.exact_gradient {
                    exact_gradient(task, &states[j])?
                } else {
                    stochastic_gradient(&batch, &states[j])?
                };
                gain_estimated.push(approximate_gain(&batch, &g, stepsize)?);
                gain_oracle.push(exact_gain(task, &states[j], &g, stepsize)?);
                gradients.push(g);
            }
            let gains = match config.policy.gain_mode {
                GainMode::Estimated => &gain_estimated,
                GainMode::Oracle => &gain_oracle,
            };
            let decision = config.policy.decide(gains, &gradients, k, &mut policy_rng)?;
            for &j in &decision.selected {
                states[j].weights -= &gradients[j] * config.stepsizes[j];
            }
            let costs = config
                .tasks
                .iter()
                .zip(&states)
                .map(|(t, w)| exact_objective(t, w))
                .collect::<Result<Vec<_>>>()?;
            Ok(StepRecord {
                weights: states.iter().map(|s| s.weights.clone()).collect(),
                costs,
                gain_estimated,
                gain_oracle,
                decision,
            })
        })()
        .map_err(|e: Error| e.at_iteration(k))?;
        steps.push(step);
    }

    Ok(Trajectory {
        initial_weights: config.initial_weights.clone(),
        initial_costs,
        steps,
    })
}

/// Per-run series kept for aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Task-averaged cost after `k` steps, `k = 0..=K`.
    pub mean_costs: Vec<f64>,
    /// Transmissions at each step, length `K`.
    pub transmissions: Vec<usize>,
}

impl RunSummary {
    pub fn total_transmissions(&self) -> usize {
        self.transmissions.iter().sum()
    }

    pub fn final_mean_cost(&self) -> f64 {
        *self.mean_costs.last().expect("at least the initial cost")
    }

    pub fn communication_rate(&self) -> f64 {
        self.total_transmissions() as f64 / self.transmissions.len() as f64
    }
}

/// Cross-run means and standard errors, indexed by `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStats {
    pub runs: usize,
    pub mean_cost: Vec<f64>,
    pub se_cost: Vec<f64>,
    /// Average transmissions per step over the first `k` steps (0 at `k = 0`).
    pub mean_rate: Vec<f64>,
    pub se_rate: Vec<f64>,
    /// Total transmissions over the first `k` steps.
    pub mean_cumulative: Vec<f64>,
    pub se_cumulative: Vec<f64>,
}

impl AggregateStats {
    pub fn horizon(&self) -> usize {
        self.mean_cost.len() - 1
    }

    /// Aggregates in the given order; callers pass summaries sorted by run.
    pub fn from_summaries(summaries: &[RunSummary]) -> Self {
        let horizon = summaries.first().map_or(0, |s| s.transmissions.len());
        let mut stats = AggregateStats {
            runs: summaries.len(),
            mean_cost: Vec::with_capacity(horizon + 1),
            se_cost: Vec::with_capacity(horizon + 1),
            mean_rate: Vec::with_capacity(horizon + 1),
            se_rate: Vec::with_capacity(horizon + 1),
            mean_cumulative: Vec::with_capacity(horizon + 1),
            se_cumulative: Vec::with_capacity(horizon + 1),
        };
        let mut cumulative = vec![0usize; summaries.len()];
        let mut column = vec![0.0; summaries.len()];
        for k in 0..=horizon {
            if k > 0 {
                for (c, s) in cumulative.iter_mut().zip(summaries) {
                    *c += s.transmissions[k - 1];
                }
            }
            for (x, s) in column.iter_mut().zip(summaries) {
                *x = s.mean_costs[k];
            }
            let cost = mean_se(&column);
            for (x, &c) in column.iter_mut().zip(&cumulative) {
                *x = c as f64;
            }
            let cum = mean_se(&column);
            let (rate, rate_se) = if k == 0 {
                (0.0, 0.0)
            } else {
                (cum.mean / k as f64, cum.se / k as f64)
            };
            stats.mean_cost.push(cost.mean);
            stats.se_cost.push(cost.se);
            stats.mean_cumulative.push(cum.mean);
            stats.se_cumulative.push(cum.se);
            stats.mean_rate.push(rate);
            stats.se_rate.push(rate_se);
        }
        stats
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Serial,
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub summaries: Vec<RunSummary>,
    pub aggregate: AggregateStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarlo {
    pub trajectories: Vec<Trajectory>,
    pub summaries: Vec<RunSummary>,
    pub aggregate: AggregateStats,
}

fn collect_runs<T: Send>(
    runs: usize,
    execution: Execution,
    f: impl Fn(u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    if runs == 0 {
        return Err(Error::ZeroCount("runs"));
    }
    let results: Vec<Result<T>> = match execution {
        Execution::Serial => (0..runs as u64).map(&f).collect(),
        Execution::Parallel => (0..runs as u64).into_par_iter().map(&f).collect(),
    };
    results.into_iter().collect()
}

/// `runs` independent trajectories; run `r` uses stream index `r`. Results
/// are gathered in run order, so aggregates do not depend on scheduling.
pub fn monte_carlo(config: &SimConfig, runs: usize) -> Result<MonteCarlo> {
    config.validate()?;
    let trajectories = collect_runs(runs, Execution::Parallel, |r| run_indexed(config, r))?;
    let summaries: Vec<RunSummary> = trajectories.iter().map(Trajectory::summary).collect();
    let aggregate = AggregateStats::from_summaries(&summaries);
    Ok(MonteCarlo {
        trajectories,
        summaries,
        aggregate,
    })
}

/// Like [`monte_carlo`] but drops each trajectory after summarizing it.
pub fn monte_carlo_summary(
    config: &SimConfig,
    runs: usize,
    execution: Execution,
) -> Result<MonteCarloSummary> {
    config.validate()?;
    let summaries = collect_runs(runs, execution, |r| run_indexed(config, r).map(|t| t.summary()))?;
    let aggregate = AggregateStats::from_summaries(&summaries);
    Ok(MonteCarloSummary {
        summaries,
        aggregate,
    })
}
