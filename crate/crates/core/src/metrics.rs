//! Pose error metrics, the joint-limit penalty, the combined loss every
//! solver optimises, and the (sin, cos) encoding used by the learned solver.
//!
//! The combined loss for a configuration `theta` with tool pose `x = f(theta)`
//! and target `x*` is
//!
//! ```text
//! L(theta) = w * eps_pos + (1 - w) * eps_ori + lambda * d_v(theta)
//! ```
//!
//! where `eps_pos` is the Euclidean position error, `eps_ori` the geodesic
//! orientation error `2 acos(|q^T q*|)` and `d_v` the summed distance of each
//! joint to its limit interval.

use nalgebra::Vector3;

use crate::chain::{ChainSpec, JointConfig};
use crate::error::Error;
use crate::transform::Pose;
use crate::Result;

/// Weights of the combined loss: `position` is the `w` in
/// `w * eps_pos + (1 - w) * eps_ori` and `penalty` is the `lambda`
/// multiplying the joint-limit violation distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub position: f64,
    pub penalty: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { position: 0.75, penalty: 0.0 }
    }
}

impl LossWeights {
    pub fn new(position: f64, penalty: f64) -> Result<Self> {
        let weights = Self { position, penalty };
        weights.validate()?;
        Ok(weights)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.position) {
            return Err(Error::InvalidOptions(format!(
                "position weight must lie in [0, 1], got {}",
                self.position
            )));
        }
        if self.penalty < 0.0 {
            return Err(Error::InvalidOptions(format!(
                "penalty weight must be non-negative, got {}",
                self.penalty
            )));
        }
        Ok(())
    }
}

/// Euclidean distance between the tool positions, in metres.
pub fn position_error(pose: &Pose, target: &Pose) -> f64 {
    (pose.position - target.position).norm()
}

/// Geodesic orientation distance `2 acos(|<q, q*>|)` in radians, in
/// `[0, pi]`; invariant to the sign of either quaternion.
///
/// Evaluated through the relative quaternion `r = conj(q) * q*` as
/// `2 atan2(||vec r||, |w_r|)` — the same function for unit inputs, but
/// without the `acos` noise floor of ~1e-8 near perfect alignment, so exact
/// solutions report errors at machine precision.
pub fn orientation_error(pose: &Pose, target: &Pose) -> f64 {
    let r = pose.orientation().inverse().into_inner() * target.orientation().into_inner();
    2.0 * r.imag().norm().atan2(r.w.abs())
}

/// `w * eps_pos + (1 - w) * eps_ori` with `w = weights.position`.
pub fn combined_loss(pose: &Pose, target: &Pose, weights: &LossWeights) -> f64 {
    weights.position * position_error(pose, target)
        + (1.0 - weights.position) * orientation_error(pose, target)
}

/// Total joint-limit violation distance `d_v`, the sum of per-joint
/// distances to the limit interval (zero inside the limits).
pub fn violation_distance(chain: &ChainSpec, config: &JointConfig) -> Result<f64> {
    Ok(chain.limit_violations(config)?.iter().sum())
}

/// Full loss including the limit penalty; runs forward kinematics
/// internally.
pub fn penalized_loss(
    chain: &ChainSpec,
    config: &JointConfig,
    target: &Pose,
    weights: &LossWeights,
) -> Result<f64> {
    let pose = chain.forward_kinematics(config)?;
    Ok(combined_loss(&pose, target, weights)
        + weights.penalty * violation_distance(chain, config)?)
}

/// Position errors below this are treated as exactly on target; the
/// normalised direction (and with it the gradient) is undefined there.
const POS_GRAD_FLOOR: f64 = 1e-12;
/// Quaternion alignments beyond `1 - ORI_GRAD_CLAMP` sit in the numerically
/// flat region of `acos`; the orientation gradient is zeroed there.
const ORI_GRAD_CLAMP: f64 = 1e-7;

/// Analytic gradient of [`penalized_loss`] with respect to the joint angles.
///
/// The position term differentiates the Euclidean norm through the linear
/// rows of the geometric Jacobian; the orientation term differentiates
/// `2 acos(|<q, q*>|)` through the quaternion Jacobian (both evaluated on the
/// same internal orientation representative, so the sign convention cancels);
/// the penalty term contributes `±lambda` for joints outside their limits.
/// At the two non-differentiable points — zero position error and perfect
/// alignment — the corresponding term's gradient is zero.
pub fn grad_loss_wrt_config(
    chain: &ChainSpec,
    config: &JointConfig,
    target: &Pose,
    weights: &LossWeights,
) -> Result<Vec<f64>> {
    let frames = chain.fk_frames(config)?;
    let n = config.len();
    let mut grad = vec![0.0; n];

    // Position term: d/dtheta ||p - p*|| = J_pos^T (p - p*) / ||p - p*||.
    let diff: Vector3<f64> = frames.tool_position - target.position;
    let dist = diff.norm();
    if dist > POS_GRAD_FLOOR {
        let dir = diff / dist;
        for i in 0..n {
            let z = frames.world_axes[i];
            let lever = frames.tool_position - frames.joint_origins[i];
            grad[i] += weights.position * z.cross(&lever).dot(&dir);
        }
    }

    // Orientation term on the raw chain representative q:
    // eps = 2 acos(|d|), d = <q, q*>; d eps/dq = -2 sign(d) q* / sqrt(1-d^2).
    let q = frames.tool_quat_raw;
    let tq = target.quat_wxyz();
    let d = q.w * tq[0] + q.i * tq[1] + q.j * tq[2] + q.k * tq[3];
    if d.abs() < 1.0 - ORI_GRAD_CLAMP {
        let scale = -2.0 * d.signum() / (1.0 - d * d).sqrt() * (1.0 - weights.position);
        for i in 0..n {
            let col = nalgebra::Quaternion::from_imag(frames.world_axes[i]) * q * 0.5;
            let dd = col.w * tq[0] + col.i * tq[1] + col.j * tq[2] + col.k * tq[3];
            grad[i] += scale * dd;
        }
    }

    // Penalty term: d_v is piecewise linear with slope -1 below the lower
    // limit and +1 above the upper one.
    if weights.penalty > 0.0 {
        for (i, (joint, &theta)) in chain.joints().iter().zip(&config.angles).enumerate() {
            if theta < joint.limit_lo {
                grad[i] -= weights.penalty;
            } else if theta > joint.limit_hi {
                grad[i] += weights.penalty;
            }
        }
    }

    Ok(grad)
}

/// Encodes joint angles as interleaved `(sin, cos)` pairs:
/// `[sin t1, cos t1, sin t2, cos t2, ...]`. This is the representation the
/// learned solver regresses, avoiding the wrap discontinuity at ±pi.
pub fn encode_config(config: &JointConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(config.len() * 2);
    for &theta in &config.angles {
        let (s, c) = theta.sin_cos();
        out.push(s);
        out.push(c);
    }
    out
}

/// Decodes interleaved `(sin, cos)` pairs back to angles via `atan2`; the
/// pairs need not be normalised. Errors on odd-length input.
pub fn decode_config(values: &[f64]) -> Result<JointConfig> {
    if values.len() % 2 != 0 {
        return Err(Error::DimensionMismatch {
            expected: values.len() + 1,
            actual: values.len(),
        });
    }
    Ok(JointConfig::new(
        values.chunks_exact(2).map(|sc| sc[0].atan2(sc[1])).collect(),
    ))
}

/// Partial derivatives of `theta = atan2(s, c)` with respect to `(s, c)`:
/// `(c / (s^2 + c^2), -s / (s^2 + c^2))`. Used to backpropagate the pose
/// loss through the decode step during distal training.
pub(crate) fn decode_partials(s: f64, c: f64) -> (f64, f64) {
    let r = s * s + c * c;
    if r < 1e-30 {
        // atan2(0, 0) is arbitrary; treat the decode as locally constant.
        return (0.0, 0.0);
    }
    (c / r, -s / r)
}
