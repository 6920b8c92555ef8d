//! Evaluation harness: runs a solver over a dataset, rechecks every
//! returned configuration with the harness's own forward kinematics, and
//! reports solve rate, infeasible-prediction rate, error and runtime
//! statistics, and trajectory discontinuity counts.
//!
//! Queries are evaluated sequentially in dataset order (after a short
//! untimed warm-up), so per-query wall times are comparable across solvers
//! and stateful trajectory solvers see the waypoints in order.

use std::fmt;
use std::sync::Mutex;
use std::time::Instant;

use crate::analytical::{self, AnalyticalOptions};
use crate::chain::{ChainSpec, JointConfig};
use crate::datasets::{Dataset, DatasetKind};
use crate::distal::TrainedModel;
use crate::error::Error;
use crate::metrics::{orientation_error, position_error};
use crate::numerical::{self, NumericalOptions};
use crate::transform::Pose;
use crate::Result;

/// Success thresholds: a query counts as solved when the FK-rechecked
/// errors satisfy `eps_pos < pos` and `eps_ori < ori`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub pos: f64,
    pub ori: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { pos: 0.01, ori: 0.03 }
    }
}

impl Thresholds {
    pub fn new(pos: f64, ori: f64) -> Result<Self> {
        if !(pos > 0.0 && ori > 0.0) {
            return Err(Error::InvalidOptions(format!(
                "thresholds must be positive, got ({pos}, {ori})"
            )));
        }
        Ok(Self { pos, ori })
    }
}

/// Joint-space jump above which two consecutive trajectory solutions count
/// as a branch switch.
pub const DEFAULT_JUMP_THRESHOLD: f64 = 0.5;
/// Untimed queries run before measurement starts.
const WARMUP_QUERIES: usize = 10;

/// One evaluation run. Error and eta statistics cover the queries that
/// returned a configuration; the solve rate counts unanswered queries as
/// unsolved; wall-time statistics cover every query. When nothing is
/// returned the error statistics are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub solver: String,
    pub dataset: String,
    pub n_queries: usize,
    pub solve_rate: f64,
    pub eta: f64,
    pub eps_pos_mean: f64,
    pub eps_pos_std: f64,
    pub eps_ori_mean: f64,
    pub eps_ori_std: f64,
    pub mean_target_norm: f64,
    pub time_ms_mean: f64,
    pub time_ms_std: f64,
    pub discontinuities: usize,
}

/// Anything that answers pose queries one at a time. Implementations must
/// be deterministic per `(target, query_index)` so evaluations reproduce.
pub trait QuerySolver: Sync {
    /// Solver id for the report.
    fn name(&self) -> String;

    /// Best configuration for the target, or `None` when the solver has no
    /// answer (for example no analytical branch exists).
    fn solve_query(&self, target: &Pose, query_index: usize) -> Option<JointConfig>;
}

/// Closed-form solver adapter: returns the first within-limits branch, or
/// the first branch when none is feasible.
pub struct AnalyticalSolver<'a> {
    chain: &'a ChainSpec,
}

impl<'a> AnalyticalSolver<'a> {
    pub fn new(chain: &'a ChainSpec) -> Self {
        Self { chain }
    }
}

impl QuerySolver for AnalyticalSolver<'_> {
    fn name(&self) -> String {
        "analytical".into()
    }

    fn solve_query(&self, target: &Pose, _query_index: usize) -> Option<JointConfig> {
        let all = analytical::solve(self.chain, target, &AnalyticalOptions::default()).ok()?;
        let feasible = all.within_limits(self.chain).ok()?;
        feasible.configs.first().or_else(|| all.configs.first()).cloned()
    }
}

/// Numerical solver adapter. Each query derives its restart seed from the
/// base seed and the query index, so a run is reproducible but queries do
/// not share a restart sequence.
pub struct NumericalSolver<'a> {
    chain: &'a ChainSpec,
    opts: NumericalOptions,
}

impl<'a> NumericalSolver<'a> {
    pub fn new(chain: &'a ChainSpec, opts: NumericalOptions) -> Self {
        Self { chain, opts }
    }
}

impl QuerySolver for NumericalSolver<'_> {
    fn name(&self) -> String {
        format!("numerical-{}", self.opts.strategy)
    }

    fn solve_query(&self, target: &Pose, query_index: usize) -> Option<JointConfig> {
        let mut opts = self.opts.clone();
        opts.restart_seed = self.opts.restart_seed.wrapping_add(query_index as u64);
        numerical::solve(self.chain, target, &opts).ok().map(|r| r.config)
    }
}

/// Numerical solver warm-started from the previous waypoint's solution,
/// for trajectory consistency runs. Stateful: evaluate the waypoints in
/// order.
pub struct WarmStartNumericalSolver<'a> {
    chain: &'a ChainSpec,
    opts: NumericalOptions,
    last: Mutex<Option<JointConfig>>,
}

impl<'a> WarmStartNumericalSolver<'a> {
    pub fn new(chain: &'a ChainSpec, opts: NumericalOptions) -> Self {
        Self { chain, opts, last: Mutex::new(None) }
    }
}

impl QuerySolver for WarmStartNumericalSolver<'_> {
    fn name(&self) -> String {
        format!("numerical-{}-warmstart", self.opts.strategy)
    }

    fn solve_query(&self, target: &Pose, query_index: usize) -> Option<JointConfig> {
        let mut opts = self.opts.clone();
        opts.restart_seed = self.opts.restart_seed.wrapping_add(query_index as u64);
        let mut last = self.last.lock().expect("warm-start state");
        if query_index == 0 {
            // A fresh pass over the trajectory (the harness warm-up also
            // calls the early waypoints) must not inherit stale state.
            *last = None;
        }
        let result = numerical::solve_from(self.chain, target, last.as_ref(), &opts).ok()?;
        *last = Some(result.config.clone());
        Some(result.config)
    }
}

/// Learned-model adapter: one forward pass per query.
pub struct DtSolver<'a> {
    model: &'a TrainedModel,
}

impl<'a> DtSolver<'a> {
    /// Fails when the model was trained for a different chain.
    pub fn new(model: &'a TrainedModel, chain: &ChainSpec) -> Result<Self> {
        model.check_chain(chain)?;
        Ok(Self { model })
    }
}

/// Solver id for a learned model: plain `dt` for the chain's reference
/// architecture, with the hidden widths spelled out when they deviate, so
/// desk-scale substitutions stay visible in every report.
fn dt_solver_name(model: &TrainedModel) -> String {
    let hidden = &model.spec.hidden_layers;
    match crate::distal::preset_hidden(&model.chain_name) {
        Some(preset) if &preset == hidden => "dt".into(),
        _ => {
            let dims: Vec<String> = hidden.iter().map(|w| w.to_string()).collect();
            format!("dt[{}]", dims.join("x"))
        }
    }
}

impl QuerySolver for DtSolver<'_> {
    fn name(&self) -> String {
        dt_solver_name(self.model)
    }

    fn solve_query(&self, target: &Pose, _query_index: usize) -> Option<JointConfig> {
        Some(self.model.predict(target))
    }
}

/// Mean and population standard deviation; NaN mean for empty input.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn dataset_id(dataset: &Dataset) -> String {
    format!("{}-{}", dataset.chain, dataset.kind)
}

/// Runs the solver over every sample, timing only the solver call, and
/// classifies each query by an independent FK recheck — the solver's own
/// error reporting is never trusted. Discontinuities are counted for
/// trajectory datasets over the returned configurations in waypoint order.
pub fn evaluate(
    chain: &ChainSpec,
    solver: &dyn QuerySolver,
    dataset: &Dataset,
    thresholds: &Thresholds,
) -> Result<Report> {
    if dataset.chain != chain.name() {
        return Err(Error::ChainMismatch {
            expected: chain.name().to_string(),
            found: dataset.chain.clone(),
        });
    }
    let n = dataset.len();
    for (i, s) in dataset.samples.iter().take(WARMUP_QUERIES).enumerate() {
        let _ = solver.solve_query(&s.pose, i);
    }

    let mut times_ms = Vec::with_capacity(n);
    let mut eps_pos = Vec::new();
    let mut eps_ori = Vec::new();
    let mut solved = 0usize;
    let mut infeasible = 0usize;
    let mut returned = Vec::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        let start = Instant::now();
        let answer = solver.solve_query(&s.pose, i);
        times_ms.push(start.elapsed().as_secs_f64() * 1e3);
        if let Some(config) = answer {
            let reached = chain.forward_kinematics(&config)?;
            let ep = position_error(&reached, &s.pose);
            let eo = orientation_error(&reached, &s.pose);
            if ep < thresholds.pos && eo < thresholds.ori {
                solved += 1;
            }
            if !chain.within_limits(&config)? {
                infeasible += 1;
            }
            eps_pos.push(ep);
            eps_ori.push(eo);
            returned.push(config);
        }
    }

    let discontinuities = if dataset.kind == DatasetKind::Trajectory && returned.len() >= 2 {
        count_discontinuities(&returned, DEFAULT_JUMP_THRESHOLD)?
    } else {
        0
    };
    let (eps_pos_mean, eps_pos_std) = mean_std(&eps_pos);
    let (eps_ori_mean, eps_ori_std) = mean_std(&eps_ori);
    let (time_ms_mean, time_ms_std) = mean_std(&times_ms);
    let mean_target_norm =
        dataset.samples.iter().map(|s| s.pose.position.norm()).sum::<f64>() / n.max(1) as f64;

    Ok(Report {
        solver: solver.name(),
        dataset: dataset_id(dataset),
        n_queries: n,
        solve_rate: solved as f64 / n.max(1) as f64,
        eta: if returned.is_empty() { 0.0 } else { infeasible as f64 / returned.len() as f64 },
        eps_pos_mean,
        eps_pos_std,
        eps_ori_mean,
        eps_ori_std,
        mean_target_norm,
        time_ms_mean,
        time_ms_std,
        discontinuities,
    })
}

/// As [`evaluate`] for a learned model answering queries in batches: the
/// per-query wall time is the batch time divided by the batch size, which
/// is what amortized throughput comparisons need. Classification matches
/// the sequential path exactly.
pub fn evaluate_dt_batched(
    chain: &ChainSpec,
    model: &TrainedModel,
    dataset: &Dataset,
    thresholds: &Thresholds,
    batch_size: usize,
) -> Result<Report> {
    if batch_size == 0 {
        return Err(Error::InvalidOptions("batch size must be at least 1".into()));
    }
    model.check_chain(chain)?;
    if dataset.chain != chain.name() {
        return Err(Error::ChainMismatch {
            expected: chain.name().to_string(),
            found: dataset.chain.clone(),
        });
    }
    let n = dataset.len();
    let poses: Vec<Pose> = dataset.samples.iter().map(|s| s.pose).collect();
    if !poses.is_empty() {
        let warm = poses.len().min(WARMUP_QUERIES);
        let _ = model.predict_batch(&poses[..warm]);
    }

    let mut times_ms = Vec::with_capacity(n);
    let mut eps_pos = Vec::with_capacity(n);
    let mut eps_ori = Vec::with_capacity(n);
    let mut solved = 0usize;
    let mut infeasible = 0usize;
    let mut returned = 0usize;
    for chunk in poses.chunks(batch_size) {
        let start = Instant::now();
        let configs = model.predict_batch(chunk);
        let per_query_ms = start.elapsed().as_secs_f64() * 1e3 / chunk.len() as f64;
        for (target, config) in chunk.iter().zip(&configs) {
            times_ms.push(per_query_ms);
            let reached = chain.forward_kinematics(config)?;
            let ep = position_error(&reached, target);
            let eo = orientation_error(&reached, target);
            if ep < thresholds.pos && eo < thresholds.ori {
                solved += 1;
            }
            if !chain.within_limits(config)? {
                infeasible += 1;
            }
            eps_pos.push(ep);
            eps_ori.push(eo);
            returned += 1;
        }
    }

    let (eps_pos_mean, eps_pos_std) = mean_std(&eps_pos);
    let (eps_ori_mean, eps_ori_std) = mean_std(&eps_ori);
    let (time_ms_mean, time_ms_std) = mean_std(&times_ms);
    let mean_target_norm =
        dataset.samples.iter().map(|s| s.pose.position.norm()).sum::<f64>() / n.max(1) as f64;

    Ok(Report {
        solver: format!("{}-batch{batch_size}", dt_solver_name(model)),
        dataset: dataset_id(dataset),
        n_queries: n,
        solve_rate: solved as f64 / n.max(1) as f64,
        eta: if returned == 0 { 0.0 } else { infeasible as f64 / returned as f64 },
        eps_pos_mean,
        eps_pos_std,
        eps_ori_mean,
        eps_ori_std,
        mean_target_norm,
        time_ms_mean,
        time_ms_std,
        discontinuities: 0,
    })
}

/// Number of consecutive pairs whose joint-space distance exceeds the
/// threshold in the max-norm — branch switches along a trajectory.
pub fn count_discontinuities(configs: &[JointConfig], jump_threshold: f64) -> Result<usize> {
    if configs.len() < 2 {
        return Err(Error::InvalidOptions(
            "discontinuity counting needs at least 2 configurations".into(),
        ));
    }
    let dof = configs[0].len();
    let mut count = 0;
    for pair in configs.windows(2) {
        if pair[1].len() != dof {
            return Err(Error::DimensionMismatch { expected: dof, actual: pair[1].len() });
        }
        let jump = pair[0]
            .angles
            .iter()
            .zip(&pair[1].angles)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if jump > jump_threshold {
            count += 1;
        }
    }
    Ok(count)
}

/// Report output format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::InvalidOptions(format!("unknown report format `{other}`"))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "markdown",
        })
    }
}

/// The report CSV column order; the markdown table uses the same columns.
pub const REPORT_COLUMNS: &str = "solver,dataset,n_queries,solve_rate,eta,eps_pos_mean,\
eps_pos_std,eps_ori_mean,eps_ori_std,mean_target_norm,time_ms_mean,time_ms_std,discontinuities";

/// A float at 6 significant digits, rendered as the shortest string that
/// reads back to the rounded value — deterministic and stable across runs.
fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(5 - magnitude);
    format!("{}", (x * scale).round() / scale)
}

fn report_values(report: &Report) -> Vec<String> {
    vec![
        report.solver.clone(),
        report.dataset.clone(),
        report.n_queries.to_string(),
        sig6(report.solve_rate),
        sig6(report.eta),
        sig6(report.eps_pos_mean),
        sig6(report.eps_pos_std),
        sig6(report.eps_ori_mean),
        sig6(report.eps_ori_std),
        sig6(report.mean_target_norm),
        sig6(report.time_ms_mean),
        sig6(report.time_ms_std),
        report.discontinuities.to_string(),
    ]
}

/// Renders reports as one table, CSV or markdown, one row per report.
/// Deterministic: identical reports produce byte-identical text.
pub fn emit_reports(reports: &[Report], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(REPORT_COLUMNS);
            out.push('\n');
            for r in reports {
                out.push_str(&report_values(r).join(","));
                out.push('\n');
            }
            out
        }
        ReportFormat::Markdown => {
            let columns: Vec<&str> = REPORT_COLUMNS.split(',').collect();
            let mut out = format!("| {} |\n", columns.join(" | "));
            out.push_str(&format!("|{}\n", " --- |".repeat(columns.len())));
            for r in reports {
                out.push_str(&format!("| {} |\n", report_values(r).join(" | ")));
            }
            out
        }
    }
}

/// Renders a single report; see [`emit_reports`].
pub fn emit_report(report: &Report, format: ReportFormat) -> String {
    emit_reports(std::slice::from_ref(report), format)
}
