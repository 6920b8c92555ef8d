//! Iterative numerical IK in the TRAC-IK mould: a damped Jacobian
//! pseudo-inverse iteration and a box-constrained damped Gauss-Newton
//! least-squares optimiser, each with random restarts on stagnation, plus a
//! combined strategy that runs one after the other within a wall-clock
//! budget.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{ChainSpec, JointConfig};
use crate::error::Error;
use crate::metrics::{combined_loss, orientation_error, position_error, LossWeights};
use crate::transform::Pose;
use crate::Result;

/// Which local solver the numerical front end runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Damped pseudo-inverse iteration only.
    Pinv,
    /// Box-constrained damped Gauss-Newton only.
    Sqp,
    /// Pseudo-inverse with half the budget, Gauss-Newton with the rest.
    #[default]
    Combined,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pinv" => Ok(Strategy::Pinv),
            "sqp" => Ok(Strategy::Sqp),
            "combined" => Ok(Strategy::Combined),
            other => Err(Error::InvalidOptions(format!(
                "unknown strategy `{other}` (expected pinv, sqp or combined)"
            ))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Pinv => "pinv",
            Strategy::Sqp => "sqp",
            Strategy::Combined => "combined",
        })
    }
}

/// Options for the numerical solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericalOptions {
    /// Wall-clock budget per query, in seconds.
    pub max_time: f64,
    /// Iteration cap per local attempt; hitting it triggers a restart.
    pub max_iterations: usize,
    /// Position tolerance for success, in metres.
    pub pos_tolerance: f64,
    /// Orientation tolerance for success, in radians.
    pub ori_tolerance: f64,
    /// Damping of the least-squares step (also the initial Gauss-Newton mu).
    pub damping: f64,
    /// Seed of the restart generator; fixed seed means fully deterministic
    /// results.
    pub restart_seed: u64,
    /// Local solver selection.
    pub strategy: Strategy,
}

impl Default for NumericalOptions {
    fn default() -> Self {
        Self {
            max_time: 0.005,
            max_iterations: 100,
            pos_tolerance: 1e-4,
            ori_tolerance: 1e-4,
            damping: 1e-3,
            restart_seed: 0,
            strategy: Strategy::Combined,
        }
    }
}

impl NumericalOptions {
    fn validate(&self) -> Result<()> {
        if self.max_time <= 0.0 {
            return Err(Error::InvalidOptions("max_time must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidOptions("max_iterations must be at least 1".into()));
        }
        if self.pos_tolerance <= 0.0 || self.ori_tolerance <= 0.0 {
            return Err(Error::InvalidOptions("tolerances must be positive".into()));
        }
        if self.damping < 0.0 {
            return Err(Error::InvalidOptions("damping must be non-negative".into()));
        }
        Ok(())
    }
}

/// Outcome classification of a numerical solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IkStatus {
    /// Both tolerances met by a limit-feasible configuration.
    Solved,
    /// At least one full local attempt finished without success before the
    /// budget ran out (includes genuinely unreachable targets).
    NotSolved,
    /// The budget expired before even one local attempt could finish; no
    /// reachability verdict.
    UnreachableBudget,
}

impl IkStatus {
    pub fn is_solved(&self) -> bool {
        matches!(self, IkStatus::Solved)
    }
}

impl fmt::Display for IkStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IkStatus::Solved => "solved",
            IkStatus::NotSolved => "not_solved",
            IkStatus::UnreachableBudget => "unreachable_budget",
        })
    }
}

/// Result of a numerical solve: the best configuration seen, its pose
/// errors, and the work spent. `status == Solved` guarantees both errors are
/// within tolerance and the config respects the joint limits.
#[derive(Debug, Clone, PartialEq)]
pub struct IkResult {
    pub status: IkStatus,
    pub config: JointConfig,
    pub eps_pos: f64,
    pub eps_ori: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub wall_time: f64,
}

/// Cartesian error twist from `current` to `target`: the first three
/// entries are the position difference `p* - p`, the last three the
/// axis-angle vector (world frame, magnitude in `[0, pi]`) of the rotation
/// taking the current orientation to the target.
pub fn pose_twist_error(current: &Pose, target: &Pose) -> Vector6<f64> {
    let mut e = Vector6::zeros();
    let dp = target.position - current.position;
    // Relative rotation in the world frame; canonicalise to the w >= 0
    // hemisphere so the log map returns the short arc.
    let mut rel =
        target.orientation().into_inner() * current.orientation().inverse().into_inner();
    if rel.w < 0.0 {
        rel = -rel;
    }
    let axis_angle = UnitQuaternion::new_normalize(rel).scaled_axis();
    for i in 0..3 {
        e[i] = dp[i];
        e[i + 3] = axis_angle[i];
    }
    e
}

/// Damped least-squares step `J^T (J J^T + damping^2 I)^-1 e` toward the
/// target twist; with `damping = 0` and a full-rank Jacobian this is the
/// exact pseudo-inverse step.
pub fn pinv_step(
    chain: &ChainSpec,
    config: &JointConfig,
    target: &Pose,
    damping: f64,
) -> Result<DVector<f64>> {
    let pose = chain.forward_kinematics(config)?;
    let jac = chain.geometric_jacobian(config)?;
    let e = pose_twist_error(&pose, target);
    let e = DVector::from_column_slice(e.as_slice());
    let m = &jac * jac.transpose() + DMatrix::identity(6, 6) * (damping * damping);
    let y = match m.clone().cholesky() {
        Some(chol) => chol.solve(&e),
        // Singular normal matrix (undamped at a singularity): fall back to
        // the minimum-norm solution.
        None => m.svd(true, true).solve(&e, 1e-12).unwrap_or_else(|_| DVector::zeros(6)),
    };
    Ok(jac.transpose() * y)
}

/// Euclidean step-norm cap in radians; larger steps are scaled down.
const STEP_CAP: f64 = 0.5;
/// An attempt is stuck once the squared-error improvement stays below this
/// for [`STAGNATION_WINDOW`] consecutive iterations.
const STAGNATION_EPS: f64 = 1e-12;
const STAGNATION_WINDOW: usize = 5;
/// Gauss-Newton damping bounds; exceeding the upper bound counts as stuck.
const MU_MIN: f64 = 1e-10;
const MU_MAX: f64 = 1e6;

struct Evaluation {
    pose: Pose,
    eps_pos: f64,
    eps_ori: f64,
    /// Squared twist norm, the stagnation / Gauss-Newton objective.
    phi: f64,
}

fn evaluate(chain: &ChainSpec, config: &JointConfig, target: &Pose) -> Result<Evaluation> {
    let pose = chain.forward_kinematics(config)?;
    let e = pose_twist_error(&pose, target);
    Ok(Evaluation {
        eps_pos: position_error(&pose, target),
        eps_ori: orientation_error(&pose, target),
        phi: e.norm_squared(),
        pose,
    })
}

/// Book-keeping shared by both local solvers.
struct SolveState<'a> {
    chain: &'a ChainSpec,
    opts: &'a NumericalOptions,
    start: Instant,
    rng: ChaCha8Rng,
    iterations: usize,
    restarts: usize,
    attempts_completed: usize,
    best: Option<(f64, JointConfig, f64, f64)>,
}

impl<'a> SolveState<'a> {
    fn new(chain: &'a ChainSpec, opts: &'a NumericalOptions) -> Self {
        Self {
            chain,
            opts,
            start: Instant::now(),
            rng: ChaCha8Rng::seed_from_u64(opts.restart_seed),
            iterations: 0,
            restarts: 0,
            attempts_completed: 0,
            best: None,
        }
    }

    fn random_config(&mut self) -> JointConfig {
        JointConfig::new(
            self.chain
                .joints()
                .iter()
                .map(|j| self.rng.random_range(j.limit_lo..=j.limit_hi))
                .collect(),
        )
    }

    fn out_of_time(&self) -> bool {
        self.start.elapsed().as_secs_f64() >= self.opts.max_time
    }

    /// Records a candidate; returns true when it satisfies the tolerances.
    fn observe(&mut self, config: &JointConfig, eval: &Evaluation) -> bool {
        let score = 0.75 * eval.eps_pos + 0.25 * eval.eps_ori;
        if self.best.as_ref().is_none_or(|(s, ..)| score < *s) {
            self.best = Some((score, config.clone(), eval.eps_pos, eval.eps_ori));
        }
        eval.eps_pos <= self.opts.pos_tolerance && eval.eps_ori <= self.opts.ori_tolerance
    }

    fn finish(self, solved: bool) -> IkResult {
        let (_, config, eps_pos, eps_ori) = self
            .best
            .expect("at least the initial configuration is always observed");
        let status = if solved {
            IkStatus::Solved
        } else if self.attempts_completed > 0 {
            IkStatus::NotSolved
        } else {
            IkStatus::UnreachableBudget
        };
        IkResult {
            status,
            config,
            eps_pos,
            eps_ori,
            iterations: self.iterations,
            restarts: self.restarts,
            wall_time: self.start.elapsed().as_secs_f64(),
        }
    }
}

fn initial_config(
    chain: &ChainSpec,
    seed_config: Option<&JointConfig>,
    state: &mut SolveState<'_>,
) -> Result<JointConfig> {
    match seed_config {
        Some(c) => chain.clamp_to_limits(c),
        None => Ok(state.random_config()),
    }
}

/// Damped pseudo-inverse iteration with random restarts.
///
/// Iterates `theta <- clamp(theta + step)` with the step norm capped at
/// 0.5 rad, restarting from a uniform random feasible configuration whenever
/// the attempt stagnates (squared-error improvement below 1e-12 for 5
/// iterations) or hits the per-attempt iteration cap. Terminates on
/// tolerance satisfaction or when `max_time` expires.
pub fn solve_pinv(
    chain: &ChainSpec,
    target: &Pose,
    seed_config: Option<&JointConfig>,
    opts: &NumericalOptions,
) -> Result<IkResult> {
    opts.validate()?;
    let mut state = SolveState::new(chain, opts);
    let mut theta = initial_config(chain, seed_config, &mut state)?;

    'attempts: loop {
        let mut attempt_iters = 0;
        let mut best_phi = f64::INFINITY;
        let mut since_improvement = 0;
        loop {
            let eval = evaluate(chain, &theta, target)?;
            if state.observe(&theta, &eval) {
                return Ok(state.finish(true));
            }
            if state.out_of_time() {
                return Ok(state.finish(false));
            }
            if eval.phi < best_phi - STAGNATION_EPS {
                best_phi = eval.phi;
                since_improvement = 0;
            } else {
                since_improvement += 1;
            }
            if since_improvement >= STAGNATION_WINDOW || attempt_iters >= opts.max_iterations {
                state.attempts_completed += 1;
                state.restarts += 1;
                theta = state.random_config();
                continue 'attempts;
            }

            let mut step = pinv_step(chain, &theta, target, opts.damping)?;
            let norm = step.norm();
            if norm > STEP_CAP {
                step *= STEP_CAP / norm;
            }
            for (t, d) in theta.angles.iter_mut().zip(step.iter()) {
                *t += d;
            }
            theta = chain.clamp_to_limits(&theta)?;
            attempt_iters += 1;
            state.iterations += 1;
        }
    }
}

/// Box-constrained damped Gauss-Newton on the squared twist error with
/// random restarts; `phi(theta) = ||e(theta)||^2`, steps solve
/// `(J^T J + mu I) d = J^T e`, are norm-capped, projected onto the limit
/// box, and only accepted when they do not increase `phi` (`mu` adapts
/// down on accept, up on reject). Same termination contract as
/// [`solve_pinv`].
pub fn solve_sqp(
    chain: &ChainSpec,
    target: &Pose,
    seed_config: Option<&JointConfig>,
    opts: &NumericalOptions,
) -> Result<IkResult> {
    solve_sqp_traced(chain, target, seed_config, opts, None)
}

/// As [`solve_sqp`], optionally recording the objective value at every
/// accepted iterate (used to assert monotonicity in tests).
pub(crate) fn solve_sqp_traced(
    chain: &ChainSpec,
    target: &Pose,
    seed_config: Option<&JointConfig>,
    opts: &NumericalOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<IkResult> {
    opts.validate()?;
    let n = chain.dof();
    let mut state = SolveState::new(chain, opts);
    let mut theta = initial_config(chain, seed_config, &mut state)?;

    'attempts: loop {
        let mut attempt_iters = 0;
        let mut mu = opts.damping.max(MU_MIN);
        let mut since_improvement = 0;
        let mut eval = evaluate(chain, &theta, target)?;
        if state.observe(&theta, &eval) {
            return Ok(state.finish(true));
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(eval.phi);
        }
        loop {
            if state.out_of_time() {
                return Ok(state.finish(false));
            }
            if since_improvement >= STAGNATION_WINDOW
                || attempt_iters >= opts.max_iterations
                || mu > MU_MAX
            {
                state.attempts_completed += 1;
                state.restarts += 1;
                theta = state.random_config();
                eval = evaluate(chain, &theta, target)?;
                if state.observe(&theta, &eval) {
                    return Ok(state.finish(true));
                }
                if let Some(t) = trace.as_deref_mut() {
                    t.push(eval.phi);
                }
                continue 'attempts;
            }

            let jac = chain.geometric_jacobian(&theta)?;
            let e = pose_twist_error(&eval.pose, target);
            let e = DVector::from_column_slice(e.as_slice());
            let rhs = jac.transpose() * &e;
            let m = jac.transpose() * &jac + DMatrix::identity(n, n) * mu;
            let mut step = match m.clone().cholesky() {
                Some(chol) => chol.solve(&rhs),
                None => m
                    .svd(true, true)
                    .solve(&rhs, 1e-12)
                    .unwrap_or_else(|_| DVector::zeros(n)),
            };
            let norm = step.norm();
            if norm > STEP_CAP {
                step *= STEP_CAP / norm;
            }
            let mut candidate = theta.clone();
            for (t, d) in candidate.angles.iter_mut().zip(step.iter()) {
                *t += d;
            }
            let candidate = chain.clamp_to_limits(&candidate)?;
            let cand_eval = evaluate(chain, &candidate, target)?;
            attempt_iters += 1;
            state.iterations += 1;

            if cand_eval.phi <= eval.phi {
                let improved = cand_eval.phi < eval.phi - STAGNATION_EPS;
                theta = candidate;
                eval = cand_eval;
                mu = (mu / 3.0).max(MU_MIN);
                if let Some(t) = trace.as_deref_mut() {
                    t.push(eval.phi);
                }
                if state.observe(&theta, &eval) {
                    return Ok(state.finish(true));
                }
                if improved {
                    since_improvement = 0;
                } else {
                    since_improvement += 1;
                }
            } else {
                mu *= 3.0;
                since_improvement += 1;
            }
        }
    }
}

/// Solves with the strategy selected in the options. `combined` spends half
/// the budget on the pseudo-inverse stage and, if unsolved, the remainder on
/// Gauss-Newton, returning the better result (solved beats not solved, ties
/// broken by lower combined loss).
pub fn solve(chain: &ChainSpec, target: &Pose, opts: &NumericalOptions) -> Result<IkResult> {
    solve_from(chain, target, None, opts)
}

/// As [`solve`] but optionally warm-started from a seed configuration
/// (clamped into the limit box). Used for trajectory tracking.
pub fn solve_from(
    chain: &ChainSpec,
    target: &Pose,
    seed_config: Option<&JointConfig>,
    opts: &NumericalOptions,
) -> Result<IkResult> {
    opts.validate()?;
    match opts.strategy {
        Strategy::Pinv => solve_pinv(chain, target, seed_config, opts),
        Strategy::Sqp => solve_sqp(chain, target, seed_config, opts),
        Strategy::Combined => {
            let start = Instant::now();
            let first_opts = NumericalOptions { max_time: opts.max_time / 2.0, ..opts.clone() };
            let first = solve_pinv(chain, target, seed_config, &first_opts)?;
            if first.status.is_solved() {
                return Ok(first);
            }
            let remaining = (opts.max_time - start.elapsed().as_secs_f64()).max(1e-6);
            let second_opts = NumericalOptions { max_time: remaining, ..opts.clone() };
            let second = solve_sqp(chain, target, seed_config, &second_opts)?;

            let weights = LossWeights::default();
            let loss = |r: &IkResult| -> Result<f64> {
                let pose = chain.forward_kinematics(&r.config)?;
                Ok(combined_loss(&pose, target, &weights))
            };
            let pick_second = second.status.is_solved()
                || (!first.status.is_solved() && loss(&second)? <= loss(&first)?);
            let (mut winner, other) = if pick_second { (second, first) } else { (first, second) };
            winner.iterations += other.iterations;
            winner.restarts += other.restarts;
            winner.wall_time = start.elapsed().as_secs_f64();
            if !winner.status.is_solved()
                && (winner.status == IkStatus::NotSolved || other.status == IkStatus::NotSolved)
            {
                winner.status = IkStatus::NotSolved;
            }
            Ok(winner)
        }
    }
}
