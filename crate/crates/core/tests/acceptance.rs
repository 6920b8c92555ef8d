//! Acceptance suite: one end-to-end check per shipped property, printed as a
//! single pass/fail line each. The binary runs without the libtest harness so
//! the lines always reach the terminal, in order, while the suite runs; the
//! process exits nonzero when any criterion fails.
//!
//! The suite pins `IKFORGE_THREADS=1` before anything touches the thread
//! pool, so every reported wall time is single-threaded and the learned-model
//! checks are bitwise reproducible across machines.

use std::hint::black_box;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ikforge_core::analytical::{solve as analytical_solve, AnalyticalOptions};
use ikforge_core::bench::{
    evaluate, DtSolver, NumericalSolver, Report, Thresholds, WarmStartNumericalSolver,
    DEFAULT_JUMP_THRESHOLD,
};
use ikforge_core::datasets::{
    default_unreachable_range, filter_nonsingular, make_line_trajectory, make_singular_set,
    make_unreachable_set, sample_uniform, Dataset, NONSINGULAR_SIGMA,
};
use ikforge_core::distal::{
    dt_backward, dt_loss, init_mlp, mlp_forward, preset_hidden, train, MlpParams, MlpSpec,
    TrainOpts, TrainedModel,
};
use ikforge_core::metrics::{orientation_error, position_error, LossWeights};
use ikforge_core::numerical::NumericalOptions;
use ikforge_core::{builtin_chain, builtin_names, ChainSpec, JointConfig, Pose, Result};

/// Network seed shared by every learned-model check.
const NET_SEED: u64 = 606;

/// Epoch budget for the secondary training runs (sample-efficiency curve,
/// penalty sweep, unreachable-pose trend). These checks compare models with
/// one controlled difference, so they trade schedule length for runtime;
/// the headline check keeps the full `TrainOpts::default()` schedule.
const SIDE_RUN_EPOCHS: usize = 1500;

/// Epoch budget for the 15-dof run, which pays roughly ten times the
/// planar per-epoch cost and only has to clear a 50% solve-rate bar.
const CHAIN15_EPOCHS: usize = 400;

fn side_run_opts() -> TrainOpts {
    TrainOpts { max_epochs: SIDE_RUN_EPOCHS, ..TrainOpts::default() }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn fail(detail: String) -> Outcome {
    Outcome { pass: false, detail }
}

fn verdict(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Criteria picked on the command line (`cargo test --test acceptance -- 3 5`
/// runs only those two); empty means the full suite.
struct Selection(Vec<usize>);

impl Selection {
    fn from_args() -> Self {
        Selection(std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect())
    }

    fn wants(&self, id: usize) -> bool {
        self.0.is_empty() || self.0.contains(&id)
    }

    fn count(&self) -> usize {
        if self.0.is_empty() {
            13
        } else {
            self.0.len()
        }
    }
}

fn report_line(id: usize, label: &str, outcome: Result<Outcome>, failures: &mut Vec<usize>) {
    let outcome = outcome.unwrap_or_else(|e| fail(format!("error: {e}")));
    let tag = if outcome.pass { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} [{label}]: {tag} — {}", outcome.detail);
    if !outcome.pass {
        failures.push(id);
    }
}

fn main() {
    // Honest single-threaded timings, set before the pool can be built.
    std::env::set_var("IKFORGE_THREADS", "1");
    let selection = Selection::from_args();
    let suite_start = Instant::now();
    println!("ikforge acceptance suite (single-threaded)");

    let chains: Vec<ChainSpec> = builtin_names()
        .iter()
        .map(|n| builtin_chain(n).expect("builtin chains must load"))
        .collect();
    let planar3 = chains.iter().find(|c| c.name() == "planar3").unwrap();
    let arm6 = chains.iter().find(|c| c.name() == "arm6").unwrap();
    let chain15 = chains.iter().find(|c| c.name() == "chain15").unwrap();
    let thresholds = Thresholds::default();
    let mut failures = Vec::new();

    if selection.wants(1) {
        report_line(1, "kinematic oracles", criterion1(&chains), &mut failures);
    }
    if selection.wants(2) {
        report_line(2, "analytical exactness", criterion2(planar3, arm6), &mut failures);
    }
    if selection.wants(3) {
        report_line(3, "numerical planar3", criterion3(planar3, &thresholds), &mut failures);
    }
    if selection.wants(4) {
        report_line(4, "numerical arm6", criterion4(arm6, &thresholds), &mut failures);
    }
    if selection.wants(5) {
        report_line(5, "singularity sensitivity", criterion5(arm6, &thresholds), &mut failures);
    }

    // The learned-model checks share one held-out planar3 query set and the
    // headline model; training failures degrade the dependent checks to FAIL
    // lines instead of aborting the suite.
    let eval_set = sample_uniform(planar3, 1000, 616).expect("eval set");
    let mut model6400: Option<TrainedModel> = None;
    let mut headline: Option<Report> = None;
    if selection.wants(6) || selection.wants(7) || selection.wants(11) {
        let outcome6 = match criterion6(planar3, &eval_set, &thresholds) {
            Ok((outcome, model, report)) => {
                model6400 = Some(model);
                headline = Some(report);
                Ok(outcome)
            }
            Err(e) => Err(e),
        };
        if selection.wants(6) {
            report_line(6, "dt headline planar3", outcome6, &mut failures);
        }
    }

    let mut model800: Option<(Dataset, TrainedModel)> = None;
    if selection.wants(7) || selection.wants(8) {
        let outcome7 = match headline.as_ref() {
            Some(report) => match criterion7(planar3, &eval_set, &thresholds, report) {
                Ok((outcome, ds, model_at_800)) => {
                    model800 = Some((ds, model_at_800));
                    Ok(outcome)
                }
                Err(e) => Err(e),
            },
            None => Ok(fail("skipped: headline model unavailable".into())),
        };
        if selection.wants(7) {
            report_line(7, "dt sample efficiency", outcome7, &mut failures);
        }
    }

    if selection.wants(8) {
        let outcome8 = match model800.as_ref() {
            Some((ds800, lambda0)) => criterion8(planar3, ds800, lambda0, &eval_set, &thresholds),
            None => Ok(fail("skipped: 800-sample model unavailable".into())),
        };
        report_line(8, "joint-limit penalty", outcome8, &mut failures);
    }

    if selection.wants(9) {
        report_line(9, "dt gradient exactness", criterion9(&chains), &mut failures);
    }
    if selection.wants(10) {
        report_line(10, "unreachable-pose trend", criterion10(planar3, &thresholds), &mut failures);
    }

    if selection.wants(11) {
        let outcome11 = match model6400.as_ref() {
            Some(model) => criterion11(planar3, model, &thresholds),
            None => Ok(fail("skipped: headline model unavailable".into())),
        };
        report_line(11, "trajectory consistency", outcome11, &mut failures);
    }

    if selection.wants(12) {
        report_line(12, "batch amortization", criterion12(arm6), &mut failures);
    }
    if selection.wants(13) {
        report_line(13, "chain15 scale echo", criterion13(chain15, &thresholds), &mut failures);
    }

    let total = suite_start.elapsed().as_secs_f64();
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        selection.count() - failures.len(),
        selection.count(),
        total
    );
    if !failures.is_empty() {
        println!("failed criteria: {failures:?}");
        std::process::exit(1);
    }
}

// --- criterion 1: FK and Jacobians against independent oracles ------------

fn rot_axis(axis: &Vector3<f64>, a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    let k = Matrix3::new(0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0);
    Matrix3::identity() + k * s + k * k * (1.0 - c)
}

fn homogeneous(r: Matrix3<f64>, t: Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

/// Forward kinematics recomputed from scratch as a product of plain
/// homogeneous matrices (Rodrigues rotations, no quaternions).
fn oracle_fk(chain: &ChainSpec, config: &JointConfig) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    for (joint, &theta) in chain.joints().iter().zip(&config.angles) {
        let pre = &joint.pre_transform;
        m *= homogeneous(pre.rotation.to_rotation_matrix().into_inner(), pre.translation);
        m *= homogeneous(rot_axis(&joint.axis, theta), Vector3::zeros());
    }
    let tool = chain.tool();
    m *= homogeneous(tool.rotation.to_rotation_matrix().into_inner(), tool.translation);
    m
}

fn fk_matrix(chain: &ChainSpec, config: &JointConfig) -> Result<Matrix4<f64>> {
    let pose = chain.forward_kinematics(config)?;
    Ok(homogeneous(pose.orientation().to_rotation_matrix().into_inner(), pose.position))
}

fn random_config(chain: &ChainSpec, rng: &mut ChaCha8Rng) -> JointConfig {
    JointConfig::new(
        chain.joints().iter().map(|j| rng.random_range(j.limit_lo..=j.limit_hi)).collect(),
    )
}

fn criterion1(chains: &[ChainSpec]) -> Result<Outcome> {
    let start = Instant::now();
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    let (mut worst_fk, mut worst_geo, mut worst_quat) = (0f64, 0f64, 0f64);
    for chain in chains {
        for _ in 0..100 {
            let config = random_config(chain, &mut rng);
            let got = fk_matrix(chain, &config)?;
            worst_fk = worst_fk.max((got - oracle_fk(chain, &config)).amax());

            // Central finite differences of the pose for both Jacobians.
            let jac = chain.geometric_jacobian(&config)?;
            let qjac = chain.quaternion_jacobian(&config)?;
            let mut fd_geo = DMatrix::zeros(6, chain.dof());
            let mut fd_quat = DMatrix::zeros(4, chain.dof());
            let r_base = got.fixed_view::<3, 3>(0, 0).into_owned();
            let q_base = chain.forward_kinematics(&config)?.quat_wxyz();
            for i in 0..chain.dof() {
                let mut plus = config.clone();
                let mut minus = config.clone();
                plus.angles[i] += h;
                minus.angles[i] -= h;
                let m_plus = fk_matrix(chain, &plus)?;
                let m_minus = fk_matrix(chain, &minus)?;
                let dp = (m_plus.fixed_view::<3, 1>(0, 3) - m_minus.fixed_view::<3, 1>(0, 3))
                    / (2.0 * h);
                let dr = (m_plus.fixed_view::<3, 3>(0, 0) - m_minus.fixed_view::<3, 3>(0, 0))
                    / (2.0 * h);
                let w = dr * r_base.transpose();
                fd_geo[(0, i)] = dp[0];
                fd_geo[(1, i)] = dp[1];
                fd_geo[(2, i)] = dp[2];
                fd_geo[(3, i)] = (w[(2, 1)] - w[(1, 2)]) / 2.0;
                fd_geo[(4, i)] = (w[(0, 2)] - w[(2, 0)]) / 2.0;
                fd_geo[(5, i)] = (w[(1, 0)] - w[(0, 1)]) / 2.0;
                let align = |mut q: [f64; 4]| {
                    if (0..4).map(|k| q[k] * q_base[k]).sum::<f64>() < 0.0 {
                        for v in &mut q {
                            *v = -*v;
                        }
                    }
                    q
                };
                let qp = align(chain.forward_kinematics(&plus)?.quat_wxyz());
                let qm = align(chain.forward_kinematics(&minus)?.quat_wxyz());
                for r in 0..4 {
                    fd_quat[(r, i)] = (qp[r] - qm[r]) / (2.0 * h);
                }
            }
            worst_geo = worst_geo.max((&fd_geo - &jac).norm() / jac.norm());
            // The quaternion Jacobian is tangent to one continuous sign
            // representative; allow the global flip.
            let direct = (&fd_quat - &qjac).norm();
            let flipped = (&fd_quat + &qjac).norm();
            worst_quat = worst_quat.max(direct.min(flipped) / qjac.norm());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst_fk < 1e-12 && worst_geo < 1e-6 && worst_quat < 1e-6 && elapsed < 10.0;
    Ok(verdict(
        ok,
        format!(
            "FK vs matrix oracle {worst_fk:.1e} (<1e-12), geometric rel {worst_geo:.1e}, \
             quaternion rel {worst_quat:.1e} (<1e-6), 100 configs x 3 chains, {elapsed:.1} s"
        ),
    ))
}

// --- criterion 2: closed-form exactness ------------------------------------

fn criterion2(planar3: &ChainSpec, arm6: &ChainSpec) -> Result<Outcome> {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (chain, seed) in [(planar3, 2002u64), (arm6, 2003u64)] {
        let targets = sample_uniform(chain, 10_000, seed)?;
        let mut solved = 0usize;
        let mut branches = 0usize;
        let mut bad_branches = 0usize;
        let mut worst = 0f64;
        for s in &targets.samples {
            let set = analytical_solve(chain, &s.pose, &AnalyticalOptions { respect_limits: false })?;
            let mut hit = false;
            for cfg in &set.configs {
                branches += 1;
                let reached = chain.forward_kinematics(cfg)?;
                let ep = position_error(&reached, &s.pose);
                let eo = orientation_error(&reached, &s.pose);
                worst = worst.max(ep).max(eo);
                let exact = ep < 1e-9 && eo < 1e-9;
                if !exact {
                    bad_branches += 1;
                }
                if exact && chain.within_limits(cfg)? {
                    hit = true;
                }
            }
            if hit {
                solved += 1;
            }
        }
        ok &= solved == targets.len() && bad_branches == 0;
        parts.push(format!(
            "{}: {solved}/10000 solved, {branches} branches all roundtrip (worst {worst:.1e})",
            chain.name()
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 30.0;
    Ok(verdict(ok, format!("{}; {elapsed:.1} s (<30 s)", parts.join("; "))))
}

// --- criteria 3/4: numerical solve rates ------------------------------------

fn criterion3(planar3: &ChainSpec, thresholds: &Thresholds) -> Result<Outcome> {
    let targets = sample_uniform(planar3, 1000, 3003)?;
    let solver = NumericalSolver::new(planar3, NumericalOptions::default());
    let report = evaluate(planar3, &solver, &targets, thresholds)?;
    let solved = (report.solve_rate * report.n_queries as f64).round() as usize;
    Ok(verdict(
        solved == report.n_queries,
        format!(
            "combined solver {solved}/{} at 0.01 m / 0.03 rad, mean {:.3} ms (5 ms budget)",
            report.n_queries, report.time_ms_mean
        ),
    ))
}

fn criterion4(arm6: &ChainSpec, thresholds: &Thresholds) -> Result<Outcome> {
    let targets = sample_uniform(arm6, 1000, 4004)?;
    let solver = NumericalSolver::new(arm6, NumericalOptions::default());
    let report = evaluate(arm6, &solver, &targets, thresholds)?;
    Ok(verdict(
        report.solve_rate >= 0.95,
        format!(
            "solve rate {:.2}% (>=95%), mean {:.3} ms",
            report.solve_rate * 100.0,
            report.time_ms_mean
        ),
    ))
}

// --- criterion 5: singular vs nonsingular targets ---------------------------

fn criterion5(arm6: &ChainSpec, thresholds: &Thresholds) -> Result<Outcome> {
    let singular = make_singular_set(arm6, 1000, 5005)?;
    let mut pool_size = 2000;
    let nonsingular = loop {
        let pool = sample_uniform(arm6, pool_size, 5105)?;
        let mut filtered = filter_nonsingular(arm6, &pool, NONSINGULAR_SIGMA)?;
        if filtered.len() >= 1000 {
            filtered.samples.truncate(1000);
            break filtered;
        }
        pool_size *= 2;
    };
    let solver = NumericalSolver::new(arm6, NumericalOptions::default());
    let on_singular = evaluate(arm6, &solver, &singular, thresholds)?;
    let on_regular = evaluate(arm6, &solver, &nonsingular, thresholds)?;
    let rate_gap = on_singular.solve_rate < on_regular.solve_rate;
    let time_gap = on_singular.time_ms_mean > on_regular.time_ms_mean;
    Ok(verdict(
        rate_gap || time_gap,
        format!(
            "singular {:.2}% / {:.3} ms vs nonsingular {:.2}% / {:.3} ms (rate lower: {rate_gap}, \
             time higher: {time_gap})",
            on_singular.solve_rate * 100.0,
            on_singular.time_ms_mean,
            on_regular.solve_rate * 100.0,
            on_regular.time_ms_mean
        ),
    ))
}

// --- criterion 6: the learned-solver headline -------------------------------

fn criterion6(
    planar3: &ChainSpec,
    eval_set: &Dataset,
    thresholds: &Thresholds,
) -> Result<(Outcome, TrainedModel, Report)> {
    let train_set = sample_uniform(planar3, 6400, 606)?;
    let spec = MlpSpec::for_chain(planar3, vec![256, 256], NET_SEED);
    let opts = TrainOpts::default();
    let t0 = Instant::now();
    let model = train(planar3, &train_set, &spec, &opts)?;
    let train_secs = t0.elapsed().as_secs_f64();
    let solver = DtSolver::new(&model, planar3)?;
    let report = evaluate(planar3, &solver, eval_set, thresholds)?;
    drop(solver);
    let ok = report.solve_rate >= 0.90 && train_secs <= 1800.0;
    let outcome = verdict(
        ok,
        format!(
            "6400 samples, 2x256, default TrainOpts: solve rate {:.2}% (>=90%) on {} held-out, \
             {} epochs in {:.0} s (<=1800 s)",
            report.solve_rate * 100.0,
            eval_set.len(),
            model.history.len(),
            train_secs
        ),
    );
    Ok((outcome, model, report))
}

// --- criterion 7: sample-efficiency curve ------------------------------------

fn criterion7(
    planar3: &ChainSpec,
    eval_set: &Dataset,
    thresholds: &Thresholds,
    headline: &Report,
) -> Result<(Outcome, Dataset, TrainedModel)> {
    let spec = MlpSpec::for_chain(planar3, vec![256, 256], NET_SEED);
    let opts = side_run_opts();
    let mut rate = std::collections::BTreeMap::new();
    let mut eps = std::collections::BTreeMap::new();
    rate.insert(6400usize, headline.solve_rate);
    eps.insert(6400usize, headline.eps_pos_mean);
    let mut keep: Option<(Dataset, TrainedModel)> = None;
    for (n, seed) in [(100usize, 701u64), (400, 702), (800, 703), (1600, 704)] {
        let ds = sample_uniform(planar3, n, seed)?;
        let model = train(planar3, &ds, &spec, &opts)?;
        let report = evaluate(planar3, &DtSolver::new(&model, planar3)?, eval_set, thresholds)?;
        rate.insert(n, report.solve_rate);
        eps.insert(n, report.eps_pos_mean);
        if n == 800 {
            keep = Some((ds, model));
        }
    }
    let monotone = rate[&100] < rate[&800] && rate[&800] < rate[&6400];
    let drop_a = eps[&1600] <= 0.75 * eps[&400];
    let drop_b = eps[&6400] <= 0.75 * eps[&1600];
    let outcome = verdict(
        monotone && drop_a && drop_b,
        format!(
            "solve 100/800/6400: {:.2}%/{:.2}%/{:.2}% (strictly increasing: {monotone}); \
             mean eps_pos 400->1600->6400: {:.4}->{:.4}->{:.4} m (>=25% drop per step: {}/{})",
            rate[&100] * 100.0,
            rate[&800] * 100.0,
            rate[&6400] * 100.0,
            eps[&400],
            eps[&1600],
            eps[&6400],
            drop_a,
            drop_b
        ),
    );
    let (ds800, model800) = keep.expect("800-sample run present");
    Ok((outcome, ds800, model800))
}

// --- criterion 8: joint-limit penalty ----------------------------------------

fn criterion8(
    planar3: &ChainSpec,
    ds800: &Dataset,
    lambda0_model: &TrainedModel,
    eval_set: &Dataset,
    thresholds: &Thresholds,
) -> Result<Outcome> {
    let spec = MlpSpec::for_chain(planar3, vec![256, 256], NET_SEED);
    let opts = TrainOpts { weights: LossWeights::new(0.75, 1.0)?, ..side_run_opts() };
    let lambda1_model = train(planar3, ds800, &spec, &opts)?;
    let r0 = evaluate(planar3, &DtSolver::new(lambda0_model, planar3)?, eval_set, thresholds)?;
    let r1 = evaluate(planar3, &DtSolver::new(&lambda1_model, planar3)?, eval_set, thresholds)?;
    let ok = r0.eta >= 0.08 && r1.eta <= 0.03 && r1.eps_pos_mean <= 3.0 * r0.eps_pos_mean;
    Ok(verdict(
        ok,
        format!(
            "eta {:.2}% at lambda=0 (>=8%), {:.2}% at lambda=1 (<=3%); mean eps_pos \
             {:.4} -> {:.4} m ({:.2}x, <=3x)",
            r0.eta * 100.0,
            r1.eta * 100.0,
            r0.eps_pos_mean,
            r1.eps_pos_mean,
            r1.eps_pos_mean / r0.eps_pos_mean
        ),
    ))
}

// --- criterion 9: analytic gradient vs finite differences --------------------

fn net_input(pose: &Pose, scale: f64) -> DVector<f64> {
    let q = pose.quat_wxyz();
    DVector::from_vec(vec![
        pose.position.x * scale,
        pose.position.y * scale,
        pose.position.z * scale,
        q[0],
        q[1],
        q[2],
        q[3],
    ])
}

fn loss_at(
    chain: &ChainSpec,
    params: &MlpParams,
    input: &DVector<f64>,
    target: &Pose,
    weights: &LossWeights,
) -> Result<f64> {
    let raw = mlp_forward(params, input)?;
    dt_loss(chain, raw.as_slice(), target, weights)
}

fn criterion9(chains: &[ChainSpec]) -> Result<Outcome> {
    let h = 1e-6;
    let weights = LossWeights::default();
    let mut worst = 0f64;
    let mut params_checked = 0usize;
    for chain in chains {
        let spec = MlpSpec::for_chain(chain, vec![8], 909);
        let params = init_mlp(&spec)?;
        let scale = 1.0 / chain.total_length();
        let samples = sample_uniform(chain, 50, 910)?;
        for s in &samples.samples {
            let input = net_input(&s.pose, scale);
            let grad = dt_backward(chain, &params, &input, &s.pose, &weights)?;
            let mut probe = params.clone();
            for l in 0..params.layer_count() {
                for idx in 0..params.weights[l].len() {
                    let saved = probe.weights[l][idx];
                    probe.weights[l][idx] = saved + h;
                    let lp = loss_at(chain, &probe, &input, &s.pose, &weights)?;
                    probe.weights[l][idx] = saved - h;
                    let lm = loss_at(chain, &probe, &input, &s.pose, &weights)?;
                    probe.weights[l][idx] = saved;
                    let fd = (lp - lm) / (2.0 * h);
                    let g = grad.weights[l][idx];
                    worst = worst.max((g - fd).abs() / fd.abs().max(g.abs()).max(1e-6));
                    params_checked += 1;
                }
                for idx in 0..params.biases[l].len() {
                    let saved = probe.biases[l][idx];
                    probe.biases[l][idx] = saved + h;
                    let lp = loss_at(chain, &probe, &input, &s.pose, &weights)?;
                    probe.biases[l][idx] = saved - h;
                    let lm = loss_at(chain, &probe, &input, &s.pose, &weights)?;
                    probe.biases[l][idx] = saved;
                    let fd = (lp - lm) / (2.0 * h);
                    let g = grad.biases[l][idx];
                    worst = worst.max((g - fd).abs() / fd.abs().max(g.abs()).max(1e-6));
                    params_checked += 1;
                }
            }
        }
    }
    Ok(verdict(
        worst < 1e-4,
        format!(
            "7->8->2n backward vs central differences: worst rel {worst:.1e} (<1e-4) over \
             {params_checked} parameter checks, 50 samples x 3 chains"
        ),
    ))
}

// --- criterion 10: unreachable-pose trend -------------------------------------

fn criterion10(planar3: &ChainSpec, thresholds: &Thresholds) -> Result<Outcome> {
    let range = default_unreachable_range(planar3.name()).expect("planar3 range");
    let base = sample_uniform(planar3, 1600, 1010)?;
    let swap_in = make_unreachable_set(planar3, 100, range, 1110)?;
    // Swap in the unreachable poses for reachable ones picked uniformly at
    // random, so the mixed set keeps the same size and sampling law.
    let mut mixed = base.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(1110);
    let picks = rand::seq::index::sample(&mut rng, mixed.len(), swap_in.len());
    for (src, dst) in picks.into_iter().enumerate() {
        mixed.samples[dst] = swap_in.samples[src].clone();
    }
    let mean_norm =
        swap_in.samples.iter().map(|s| s.pose.position.norm()).sum::<f64>() / swap_in.len() as f64;

    let spec = MlpSpec::for_chain(planar3, vec![256, 256], NET_SEED);
    let opts = side_run_opts();
    let model_base = train(planar3, &base, &spec, &opts)?;
    let model_mixed = train(planar3, &mixed, &spec, &opts)?;
    let test = make_unreachable_set(planar3, 1000, range, 1210)?;
    let rb = evaluate(planar3, &DtSolver::new(&model_base, planar3)?, &test, thresholds)?;
    let rm = evaluate(planar3, &DtSolver::new(&model_mixed, planar3)?, &test, thresholds)?;

    let ori_drop = rm.eps_ori_mean <= 0.5 * rb.eps_ori_mean;
    let pos_drop = rm.eps_pos_mean < rb.eps_pos_mean;
    let norm_ok = (mean_norm - 3.25).abs() <= 0.325;
    Ok(verdict(
        ori_drop && pos_drop && norm_ok,
        format!(
            "unreachable test eps_ori {:.3} -> {:.3} rad (>=50% drop: {ori_drop}), eps_pos \
             {:.3} -> {:.3} m (decreases: {pos_drop}); generated mean |x*| {mean_norm:.3} m \
             (3.25 +/- 10%: {norm_ok})",
            rb.eps_ori_mean, rm.eps_ori_mean, rb.eps_pos_mean, rm.eps_pos_mean
        ),
    ))
}

// --- criterion 11: consistency along a trajectory -----------------------------

fn criterion11(
    planar3: &ChainSpec,
    model: &TrainedModel,
    thresholds: &Thresholds,
) -> Result<Outcome> {
    let start = planar3.forward_kinematics(&JointConfig::new(vec![0.4, 1.6, -0.9]))?;
    let end = planar3.forward_kinematics(&JointConfig::new(vec![-0.8, 1.2, 0.5]))?;
    let traj = make_line_trajectory(planar3, &start, &end, 100)?;
    let dt_report = evaluate(planar3, &DtSolver::new(model, planar3)?, &traj, thresholds)?;
    let warm = WarmStartNumericalSolver::new(planar3, NumericalOptions::default());
    let warm_report = evaluate(planar3, &warm, &traj, thresholds)?;
    let ok = dt_report.discontinuities == 0 && warm_report.discontinuities == 0;
    Ok(verdict(
        ok,
        format!(
            "100 waypoints at {DEFAULT_JUMP_THRESHOLD} rad jump threshold: dt {} \
             discontinuities, warm-start numerical {} (both must be 0)",
            dt_report.discontinuities, warm_report.discontinuities
        ),
    ))
}

// --- criterion 12: batched prediction amortization -----------------------------

fn criterion12(arm6: &ChainSpec) -> Result<Outcome> {
    let hidden = preset_hidden(arm6.name()).expect("arm6 preset");
    let spec = MlpSpec::for_chain(arm6, hidden, 1212);
    let params = init_mlp(&spec)?;
    let model = TrainedModel {
        chain_name: arm6.name().to_string(),
        dof: arm6.dof(),
        spec,
        params,
        scale: 1.0 / arm6.total_length(),
        history: Vec::new(),
    };
    let poses: Vec<Pose> = sample_uniform(arm6, 1024, 1213)?.samples.iter().map(|s| s.pose).collect();
    black_box(model.predict(&poses[0]));
    black_box(model.predict_batch(&poses[..32]));

    let t0 = Instant::now();
    for p in &poses {
        black_box(model.predict(p));
    }
    let sequential = t0.elapsed().as_secs_f64() / poses.len() as f64;
    let t1 = Instant::now();
    for chunk in poses.chunks(32) {
        black_box(model.predict_batch(chunk));
    }
    let batched = t1.elapsed().as_secs_f64() / poses.len() as f64;
    let ratio = batched / sequential;
    Ok(verdict(
        ratio <= 0.2,
        format!(
            "6x512 net, 1024 queries: sequential {:.1} us/query, batch-32 {:.1} us/query, \
             ratio {ratio:.3} (<=0.2)",
            sequential * 1e6,
            batched * 1e6
        ),
    ))
}

// --- criterion 13: the 15-joint desk-scale echo ---------------------------------

fn criterion13(chain15: &ChainSpec, thresholds: &Thresholds) -> Result<Outcome> {
    let train_set = sample_uniform(chain15, 32_000, 1313)?;
    let spec = MlpSpec::for_chain(chain15, vec![256, 256, 256], NET_SEED);
    // The redundant chain only has to clear a 50% bar, so it gets a shorter
    // epoch budget than the headline run; the per-epoch cost is ~10x the
    // planar chain (5x the samples, a deeper net, a 15-column Jacobian).
    let opts = TrainOpts {
        max_epochs: CHAIN15_EPOCHS,
        ..TrainOpts::default()
    };
    let t0 = Instant::now();
    let model = train(chain15, &train_set, &spec, &opts)?;
    let train_secs = t0.elapsed().as_secs_f64();
    let eval_set = sample_uniform(chain15, 1000, 1413)?;
    let report = evaluate(chain15, &DtSolver::new(&model, chain15)?, &eval_set, thresholds)?;
    Ok(verdict(
        report.solve_rate >= 0.50,
        format!(
            "32000 samples, 3x256: solve rate {:.2}% (>=50%) on 1000 held-out, {} epochs \
             in {:.0} s",
            report.solve_rate * 100.0,
            model.history.len(),
            train_secs
        ),
    ))
}
