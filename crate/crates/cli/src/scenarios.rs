//! Scenario runners. Each one runs its Monte Carlo experiments, writes CSV
//! tables plus SVG plots into the output directory, and returns the numbers
//! it wrote.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gainsched_core::{
    check_budget, check_envelope, communication_budget, convergence_envelope, envelope_limit,
    equilibrium_gradient_covariance, mean_se, monte_carlo, monte_carlo_summary, BoundReport,
    Execution, GainMode, MeanSe, ModelState, MonteCarlo, PolicyConfig, PolicyKind,
};
use nalgebra::DVector;

use crate::config::{ExperimentConfig, Scenario, RESOLVED_CONFIG_FILE};
use crate::output::{self, write_table, Histogram};
use crate::plot::{self, Series};

fn f(x: f64) -> String {
    x.to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffPoint {
    pub setting: usize,
    pub stepsize: f64,
    pub batch_size: usize,
    pub lambda: f64,
    /// Average transmissions per step over the horizon.
    pub rate: MeanSe,
    pub final_cost: MeanSe,
}

pub const TRADEOFF_HEADER: [&str; 8] =
    ["setting", "stepsize", "batch_size", "lambda", "mean_rate", "se_rate", "mean_J", "se_J"];

/// Communication rate against final cost of the threshold rule, swept over
/// `lambda` for each `(stepsize, batch_size)` setting.
pub fn scenario_tradeoff(config: &ExperimentConfig, out: &Path) -> Result<Vec<TradeoffPoint>> {
    let mut points = Vec::new();
    for (s, setting) in config.sweep.settings.iter().enumerate() {
        for &lambda in &config.sweep.lambdas {
            let policy = PolicyConfig { lambda, ..config.policy };
            let sim = config.sim_config_with(policy, Some(setting.stepsize), setting.batch_size);
            let mc = monte_carlo_summary(&sim, config.runs, Execution::Parallel)
                .with_context(|| format!("setting {s}, lambda {lambda}"))?;
            let rates: Vec<f64> = mc.summaries.iter().map(|r| r.communication_rate()).collect();
            let costs: Vec<f64> = mc.summaries.iter().map(|r| r.final_mean_cost()).collect();
            points.push(TradeoffPoint {
                setting: s,
                stepsize: setting.stepsize,
                batch_size: setting.batch_size,
                lambda,
                rate: mean_se(&rates),
                final_cost: mean_se(&costs),
            });
        }
    }

    let rows = points.iter().map(|p| {
        vec![
            p.setting.to_string(),
            f(p.stepsize),
            p.batch_size.to_string(),
            f(p.lambda),
            f(p.rate.mean),
            f(p.rate.se),
            f(p.final_cost.mean),
            f(p.final_cost.se),
        ]
    });
    write_table(&out.join("tradeoff.csv"), &TRADEOFF_HEADER, rows)?;

    let series: Vec<Series> = config
        .sweep
        .settings
        .iter()
        .enumerate()
        .map(|(s, setting)| Series {
            name: format!("eps={}, N={}", setting.stepsize, setting.batch_size),
            points: points
                .iter()
                .filter(|p| p.setting == s)
                .map(|p| (p.rate.mean, p.final_cost.mean))
                .collect(),
            markers: true,
        })
        .collect();
    plot::line_chart(
        &out.join("tradeoff.svg"),
        &format!("Communication rate vs cost after {} steps", config.horizon),
        "average communication rate",
        "mean J(w_K)",
        &series,
    )?;
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasDraw {
    pub oracle_selected: Vec<usize>,
    pub estimated_selected: Vec<usize>,
    pub oracle_metric: f64,
    pub estimated_metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasResult {
    pub draws: Vec<BiasDraw>,
    pub oracle: MeanSe,
    pub estimated: MeanSe,
    /// Per-draw `estimated - oracle`.
    pub paired_difference: MeanSe,
    pub histogram: Histogram,
}

pub const BIAS_DRAWS_HEADER: [&str; 4] = ["draw", "scheme", "selected", "metric"];
pub const SUMMARY_HEADER: [&str; 3] = ["scheme", "mean", "se"];

fn join_indices(ix: &[usize]) -> String {
    ix.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

/// One greedy scheduling step from fixed weights, scored with exact gains
/// and with estimated gains on the same batches. The metric is the
/// task-averaged cost after the step.
pub fn scenario_bias_histogram(config: &ExperimentConfig, out: &Path) -> Result<BiasResult> {
    let run_mode = |gain_mode| -> Result<MonteCarlo> {
        let policy = PolicyConfig {
            kind: PolicyKind::GreedyGain,
            gain_mode,
            ..config.policy
        };
        let mut sim = config.sim_config_with(policy, None, config.batch_size);
        sim.horizon = 1;
        Ok(monte_carlo(&sim, config.runs)?)
    };
    let oracle = run_mode(GainMode::Oracle)?;
    let estimated = run_mode(GainMode::Estimated)?;

    let draws: Vec<BiasDraw> = oracle
        .trajectories
        .iter()
        .zip(&estimated.trajectories)
        .map(|(o, e)| BiasDraw {
            oracle_selected: o.steps[0].decision.selected.clone(),
            estimated_selected: e.steps[0].decision.selected.clone(),
            oracle_metric: o.final_mean_cost(),
            estimated_metric: e.final_mean_cost(),
        })
        .collect();
    let om: Vec<f64> = draws.iter().map(|d| d.oracle_metric).collect();
    let em: Vec<f64> = draws.iter().map(|d| d.estimated_metric).collect();
    let diff: Vec<f64> = draws.iter().map(|d| d.estimated_metric - d.oracle_metric).collect();

    let rows = draws.iter().enumerate().flat_map(|(r, d)| {
        [
            vec![r.to_string(), "oracle".to_owned(), join_indices(&d.oracle_selected), f(d.oracle_metric)],
            vec![r.to_string(), "estimated".to_owned(), join_indices(&d.estimated_selected), f(d.estimated_metric)],
        ]
    });
    write_table(&out.join("bias_draws.csv"), &BIAS_DRAWS_HEADER, rows)?;

    let result = BiasResult {
        oracle: mean_se(&om),
        estimated: mean_se(&em),
        paired_difference: mean_se(&diff),
        histogram: Histogram::new(&[&om, &em], config.histogram.bins, config.histogram.range),
        draws,
    };
    write_table(
        &out.join("bias_summary.csv"),
        &SUMMARY_HEADER,
        [
            vec!["oracle".to_owned(), f(result.oracle.mean), f(result.oracle.se)],
            vec!["estimated".to_owned(), f(result.estimated.mean), f(result.estimated.se)],
        ],
    )?;
    let names = ["oracle", "estimated"];
    result.histogram.write_csv(&out.join("bias_histogram.csv"), &names)?;
    plot::histogram_chart(
        &out.join("bias_histogram.svg"),
        "Mean cost across tasks after one step",
        "(J1 + J2) / 2",
        &result.histogram,
        &["known distribution", "estimated gain"],
    )?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparePoint {
    pub stepsize: f64,
    pub greedy: MeanSe,
    pub gradient: MeanSe,
    /// Per-run `gradient - greedy` on common random numbers.
    pub paired_difference: MeanSe,
    pub greedy_costs: Vec<f64>,
    pub gradient_costs: Vec<f64>,
    /// Transmissions per step, identical for both rules.
    pub transmissions_per_step: Option<usize>,
}

pub const COMPARE_RUNS_HEADER: [&str; 5] = ["stepsize", "run", "policy", "final_J", "transmissions"];
pub const COMPARE_SUMMARY_HEADER: [&str; 4] = ["stepsize", "policy", "mean", "se"];

/// Greedy gain scheduling against gradient-norm scheduling on identical
/// data, for each stepsize in the sweep.
pub fn scenario_policy_comparison(config: &ExperimentConfig, out: &Path) -> Result<Vec<ComparePoint>> {
    let greedy = PolicyConfig {
        kind: PolicyKind::GreedyGain,
        ..config.policy
    };
    let gradient = PolicyConfig {
        kind: PolicyKind::GradientNorm,
        ..config.policy
    };
    let mut points = Vec::new();
    let mut run_rows = Vec::new();
    for &stepsize in &config.sweep.stepsizes {
        let a = monte_carlo_summary(
            &config.sim_config_with(greedy, Some(stepsize), config.batch_size),
            config.runs,
            Execution::Parallel,
        )?;
        let b = monte_carlo_summary(
            &config.sim_config_with(gradient, Some(stepsize), config.batch_size),
            config.runs,
            Execution::Parallel,
        )?;
        let greedy_costs: Vec<f64> = a.summaries.iter().map(|s| s.final_mean_cost()).collect();
        let gradient_costs: Vec<f64> = b.summaries.iter().map(|s| s.final_mean_cost()).collect();
        let diff: Vec<f64> = greedy_costs.iter().zip(&gradient_costs).map(|(g, n)| n - g).collect();

        let per_step = a.summaries[0].transmissions[0];
        let uniform = a
            .summaries
            .iter()
            .chain(&b.summaries)
            .all(|s| s.transmissions.iter().all(|&t| t == per_step));

        for (policy, mc) in [(greedy.kind, &a), (gradient.kind, &b)] {
            for (r, s) in mc.summaries.iter().enumerate() {
                run_rows.push(vec![
                    f(stepsize),
                    r.to_string(),
                    policy.to_string(),
                    f(s.final_mean_cost()),
                    s.total_transmissions().to_string(),
                ]);
            }
        }

        let hist = Histogram::new(&[&greedy_costs, &gradient_costs], config.histogram.bins, config.histogram.range);
        let names = [greedy.kind.as_str(), gradient.kind.as_str()];
        hist.write_csv(&out.join(format!("compare_histogram_eps{stepsize}.csv")), &names)?;
        plot::histogram_chart(
            &out.join(format!("compare_histogram_eps{stepsize}.svg")),
            &format!("Mean cost across tasks after {} steps, eps={stepsize}", config.horizon),
            "mean J",
            &hist,
            &["gain-based", "gradient norm"],
        )?;

        points.push(ComparePoint {
            stepsize,
            greedy: mean_se(&greedy_costs),
            gradient: mean_se(&gradient_costs),
            paired_difference: mean_se(&diff),
            greedy_costs,
            gradient_costs,
            transmissions_per_step: uniform.then_some(per_step),
        });
    }
    write_table(&out.join("compare_runs.csv"), &COMPARE_RUNS_HEADER, run_rows)?;
    let rows = points.iter().flat_map(|p| {
        [
            vec![f(p.stepsize), greedy.kind.to_string(), f(p.greedy.mean), f(p.greedy.se)],
            vec![f(p.stepsize), gradient.kind.to_string(), f(p.gradient.mean), f(p.gradient.se)],
        ]
    });
    write_table(&out.join("compare_summary.csv"), &COMPARE_SUMMARY_HEADER, rows)?;
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsPoint {
    pub lambda: f64,
    pub gain_mode: GainMode,
    pub envelope_limit: f64,
    pub envelope: BoundReport,
    pub budget_value: f64,
    pub budget: BoundReport,
}

pub const BOUNDS_SUMMARY_HEADER: [&str; 8] =
    ["kind", "lambda", "mode", "bound", "empirical_mean", "empirical_se", "violated", "worst_margin"];

pub fn bounds_file_stem(kind: &str, lambda: f64, mode: GainMode) -> String {
    format!("bounds_{kind}_lambda{lambda}_{mode}")
}

/// Monte Carlo check of the convergence envelope and the communication
/// budget of the threshold rule for each `lambda` in the sweep.
pub fn scenario_bounds(config: &ExperimentConfig, out: &Path) -> Result<Vec<BoundsPoint>> {
    let task = config.task_specs().remove(0);
    let stepsize = config.tasks[0].stepsize;
    let w0 = ModelState::new(DVector::from_row_slice(&config.tasks[0].initial_weights));
    let noise = equilibrium_gradient_covariance(&task, config.batch_size)?;
    let mode = config.policy.gain_mode;

    let mut points = Vec::new();
    for &lambda in &config.sweep.lambdas {
        let policy = PolicyConfig {
            kind: PolicyKind::Threshold,
            lambda,
            ..config.policy
        };
        let mc = monte_carlo_summary(&config.sim_config_with(policy, None, config.batch_size), config.runs, Execution::Parallel)?;
        let envelope = convergence_envelope(&task, stepsize, lambda, &noise, &w0, config.horizon)?;
        let budget_value = communication_budget(&task, &w0, lambda)?;
        let point = BoundsPoint {
            lambda,
            gain_mode: mode,
            envelope_limit: envelope_limit(&task, stepsize, lambda, &noise)?,
            envelope: check_envelope(&mc.aggregate, &envelope)?,
            budget_value,
            budget: check_budget(&mc.aggregate, budget_value)?,
        };

        let env_stem = bounds_file_stem("envelope", lambda, mode);
        output::write_bound_report(&out.join(format!("{env_stem}.csv")), &point.envelope)?;
        output::write_bound_report(
            &out.join(format!("{}.csv", bounds_file_stem("budget", lambda, mode))),
            &point.budget,
        )?;
        let curve = |pick: fn(&gainsched_core::BoundRow) -> f64| -> Vec<(f64, f64)> {
            point.envelope.rows.iter().map(|r| (r.iter as f64, pick(r))).collect()
        };
        plot::line_chart(
            &out.join(format!("{env_stem}.svg")),
            &format!("Expected cost vs envelope, lambda={lambda} ({mode} gains)"),
            "iteration k",
            "J(w_k)",
            &[
                Series { name: "empirical mean".into(), points: curve(|r| r.empirical_mean), markers: false },
                Series { name: "envelope".into(), points: curve(|r| r.bound), markers: false },
            ],
        )?;
        points.push(point);
    }

    let rows = points.iter().flat_map(|p| {
        [(&p.envelope, "envelope"), (&p.budget, "budget")].map(|(report, kind)| {
            let last = report.last();
            vec![
                kind.to_owned(),
                f(p.lambda),
                mode.to_string(),
                f(last.bound),
                f(last.empirical_mean),
                f(last.empirical_se),
                report.violated.to_string(),
                f(report.worst_margin),
            ]
        })
    });
    write_table(&out.join("bounds_summary.csv"), &BOUNDS_SUMMARY_HEADER, rows)?;
    Ok(points)
}

/// Plain Monte Carlo of the configured policy.
pub fn scenario_simulate(config: &ExperimentConfig, out: &Path) -> Result<MonteCarlo> {
    let mc = monte_carlo(&config.sim_config(), config.runs)?;
    output::write_trajectories(&out.join("trajectories.csv"), mc.trajectories.iter().enumerate())?;
    output::write_aggregate(&out.join("aggregate.csv"), &mc.aggregate)?;
    let a = &mc.aggregate;
    plot::line_chart(
        &out.join("simulate.svg"),
        &format!("{} policy, {} runs", config.policy.kind, config.runs),
        "iteration k",
        "mean J(w_k)",
        &[Series {
            name: "mean cost".into(),
            points: a.mean_cost.iter().enumerate().map(|(k, &j)| (k as f64, j)).collect(),
            markers: false,
        }],
    )?;
    Ok(mc)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioReport {
    Tradeoff(Vec<TradeoffPoint>),
    BiasHist(BiasResult),
    Compare(Vec<ComparePoint>),
    Bounds(Vec<BoundsPoint>),
    Simulate(MonteCarlo),
}

impl ScenarioReport {
    /// Short human-readable digest.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        match self {
            ScenarioReport::Tradeoff(points) => {
                for p in points {
                    s += &format!(
                        "eps={} N={} lambda={}: rate {:.4} ± {:.4}, J {:.4} ± {:.4}\n",
                        p.stepsize, p.batch_size, p.lambda, p.rate.mean, p.rate.se, p.final_cost.mean, p.final_cost.se
                    );
                }
            }
            ScenarioReport::BiasHist(r) => {
                s += &format!("oracle    {:.5} ± {:.5}\n", r.oracle.mean, r.oracle.se);
                s += &format!("estimated {:.5} ± {:.5}\n", r.estimated.mean, r.estimated.se);
            }
            ScenarioReport::Compare(points) => {
                for p in points {
                    s += &format!(
                        "eps={}: greedy-gain {:.4} ± {:.4}, gradient-norm {:.4} ± {:.4}\n",
                        p.stepsize, p.greedy.mean, p.greedy.se, p.gradient.mean, p.gradient.se
                    );
                }
            }
            ScenarioReport::Bounds(points) => {
                for p in points {
                    s += &format!(
                        "lambda={} ({}): envelope violated={} (limit {:.4}), budget {:.4} vs mean {:.4}, violated={}\n",
                        p.lambda,
                        p.gain_mode,
                        p.envelope.violated,
                        p.envelope_limit,
                        p.budget_value,
                        p.budget.last().empirical_mean,
                        p.budget.violated
                    );
                }
            }
            ScenarioReport::Simulate(mc) => {
                let a = &mc.aggregate;
                let k = a.horizon();
                s += &format!(
                    "final mean J {:.4} ± {:.4}, rate {:.4} ± {:.4}\n",
                    a.mean_cost[k], a.se_cost[k], a.mean_rate[k], a.se_rate[k]
                );
            }
        }
        s
    }
}

/// Runs `config` into `out` (created if needed) after writing the resolved
/// config echo there.
pub fn run_scenario(config: &ExperimentConfig, out: &Path) -> Result<ScenarioReport> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut echo = config.clone();
    echo.output_dir = Some(PathBuf::from(out));
    output::write_text(&out.join(RESOLVED_CONFIG_FILE), &echo.to_toml_string())?;
    Ok(match config.scenario {
        Scenario::Tradeoff => ScenarioReport::Tradeoff(scenario_tradeoff(config, out)?),
        Scenario::BiasHist => ScenarioReport::BiasHist(scenario_bias_histogram(config, out)?),
        Scenario::Compare => ScenarioReport::Compare(scenario_policy_comparison(config, out)?),
        Scenario::Bounds => ScenarioReport::Bounds(scenario_bounds(config, out)?),
        Scenario::Simulate => ScenarioReport::Simulate(scenario_simulate(config, out)?),
    })
}
