//! Scheduling rules deciding which gradient updates get transmitted.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::RngStream;
use crate::error::{Error, Result};
use crate::estimator::GainMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Per task: transmit iff gain <= -lambda.
    Threshold,
    /// Transmit the `p` tasks with the smallest gains.
    GreedyGain,
    /// Transmit the `p` tasks with the largest squared gradient norms.
    GradientNorm,
    RoundRobin,
    UniformRandom,
    AlwaysTransmit,
    NeverTransmit,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Threshold => "threshold",
            PolicyKind::GreedyGain => "greedy-gain",
            PolicyKind::GradientNorm => "gradient-norm",
            PolicyKind::RoundRobin => "round-robin",
            PolicyKind::UniformRandom => "uniform-random",
            PolicyKind::AlwaysTransmit => "always-transmit",
            PolicyKind::NeverTransmit => "never-transmit",
        }
    }

    /// Rules that decide for each task on its own rather than sharing a
    /// per-step budget.
    pub fn is_per_task(self) -> bool {
        matches!(
            self,
            PolicyKind::Threshold | PolicyKind::AlwaysTransmit | PolicyKind::NeverTransmit
        )
    }

    pub fn baseline(self) -> Option<Baseline> {
        match self {
            PolicyKind::RoundRobin => Some(Baseline::RoundRobin),
            PolicyKind::UniformRandom => Some(Baseline::UniformRandom),
            PolicyKind::AlwaysTransmit => Some(Baseline::AlwaysTransmit),
            PolicyKind::NeverTransmit => Some(Baseline::NeverTransmit),
            _ => None,
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Control policies that ignore the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    RoundRobin,
    UniformRandom,
    AlwaysTransmit,
    NeverTransmit,
}

fn default_budget() -> usize {
    1
}

fn default_gain_mode() -> GainMode {
    GainMode::Estimated
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Threshold `lambda >= 0`; only read by [`PolicyKind::Threshold`].
    #[serde(default)]
    pub lambda: f64,
    /// Tasks schedulable per step; ignored by per-task rules.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_gain_mode")]
    pub gain_mode: GainMode,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            lambda: 0.0,
            budget: 1,
            gain_mode: GainMode::Estimated,
        }
    }

    pub fn threshold(lambda: f64, gain_mode: GainMode) -> Self {
        Self {
            lambda,
            gain_mode,
            ..Self::new(PolicyKind::Threshold)
        }
    }

    pub fn greedy(budget: usize, gain_mode: GainMode) -> Self {
        Self {
            budget,
            gain_mode,
            ..Self::new(PolicyKind::GreedyGain)
        }
    }

    pub fn validate(&self, tasks: usize) -> Result<()> {
        if tasks == 0 {
            return Err(Error::NoTasks);
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidLambda(self.lambda));
        }
        if self.budget == 0 || self.budget > tasks {
            return Err(Error::InvalidBudget {
                budget: self.budget,
                tasks,
            });
        }
        Ok(())
    }

    /// Upper bound on transmissions per step for `tasks` tasks.
    pub fn effective_budget(&self, tasks: usize) -> usize {
        if self.kind.is_per_task() {
            tasks
        } else {
            self.budget
        }
    }

    /// Applies the rule to one step's candidates. `gains` and `gradients`
    /// are indexed by task.
    pub fn decide(
        &self,
        gains: &[f64],
        gradients: &[DVector<f64>],
        step: usize,
        rng: &mut RngStream,
    ) -> Result<ScheduleDecision> {
        let m = gains.len();
        match self.kind {
            PolicyKind::Threshold => {
                if m == 0 {
                    return Err(Error::NoTasks);
                }
                let alphas = gains.iter().map(|&g| threshold_decide(g, self.lambda)).collect();
                Ok(ScheduleDecision::from_alphas(alphas))
            }
            PolicyKind::GreedyGain => greedy_gain_select(gains, self.budget),
            PolicyKind::GradientNorm => gradient_norm_select(gradients, self.budget),
            kind => {
                let baseline = kind.baseline().expect("remaining kinds are baselines");
                baseline_select(baseline, m, self.budget, step, rng)
            }
        }
    }
}

/// Which tasks transmit at one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleDecision {
    /// Selected task indices, ascending.
    pub selected: Vec<usize>,
    /// `alphas[j]` is true iff `j` is selected.
    pub alphas: Vec<bool>,
}

impl ScheduleDecision {
    pub fn from_alphas(alphas: Vec<bool>) -> Self {
        let selected = alphas
            .iter()
            .enumerate()
            .filter_map(|(j, &a)| a.then_some(j))
            .collect();
        Self { selected, alphas }
    }

    pub fn from_selected(tasks: usize, selected: impl IntoIterator<Item = usize>) -> Self {
        let mut alphas = vec![false; tasks];
        for j in selected {
            alphas[j] = true;
        }
        Self::from_alphas(alphas)
    }

    pub fn transmissions(&self) -> usize {
        self.selected.len()
    }
}

/// `true` iff `gain <= -lambda`; the boundary transmits.
pub fn threshold_decide(gain: f64, lambda: f64) -> bool {
    gain <= -lambda
}

/// Picks the `budget` smallest entries of `keys`; ties go to the lower index.
fn select_smallest(keys: &[f64], budget: usize) -> Result<ScheduleDecision> {
    let m = keys.len();
    if m == 0 {
        return Err(Error::NoTasks);
    }
    if budget == 0 || budget > m {
        return Err(Error::InvalidBudget { budget, tasks: m });
    }
    let mut order: Vec<usize> = (0..m).collect();
    // stable sort keeps lower indices first among equal keys
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    Ok(ScheduleDecision::from_selected(m, order.into_iter().take(budget)))
}

pub fn greedy_gain_select(gains: &[f64], budget: usize) -> Result<ScheduleDecision> {
    select_smallest(gains, budget)
}

pub fn gradient_norm_select(gradients: &[DVector<f64>], budget: usize) -> Result<ScheduleDecision> {
    let neg_norms: Vec<f64> = gradients.iter().map(|g| -g.norm_squared()).collect();
    select_smallest(&neg_norms, budget)
}

pub fn baseline_select(
    kind: Baseline,
    tasks: usize,
    budget: usize,
    step: usize,
    rng: &mut RngStream,
) -> Result<ScheduleDecision> {
    if tasks == 0 {
        return Err(Error::NoTasks);
    }
    match kind {
        Baseline::AlwaysTransmit => return Ok(ScheduleDecision::from_alphas(vec![true; tasks])),
        Baseline::NeverTransmit => return Ok(ScheduleDecision::from_alphas(vec![false; tasks])),
        _ => {}
    }
    if budget == 0 || budget > tasks {
        return Err(Error::InvalidBudget { budget, tasks });
    }
    Ok(match kind {
        Baseline::RoundRobin => {
            ScheduleDecision::from_selected(tasks, (0..budget).map(|i| (step * budget + i) % tasks))
        }
        Baseline::UniformRandom => {
            ScheduleDecision::from_selected(tasks, rand::seq::index::sample(rng, tasks, budget))
        }
        Baseline::AlwaysTransmit | Baseline::NeverTransmit => unreachable!(),
    })
}
