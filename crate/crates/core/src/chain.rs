//! Kinematic chain model: joint descriptions, forward kinematics, Jacobians,
//! manipulability, and the plain-text chain file format.
//!
//! A chain is a serial sequence of revolute joints. Joint `i` contributes
//! `pre_transform_i * Rot(axis_i, theta_i)` to the running tool transform and
//! a fixed tool transform caps the chain, so the full map is
//!
//! ```text
//! T(theta) = prod_i [ T_pre,i * Rot(axis_i, theta_i) ] * T_tool
//! ```

use std::fmt;

use nalgebra::{DMatrix, Quaternion, UnitQuaternion, Vector3};

use crate::error::Error;
use crate::transform::{Pose, Transform};
use crate::Result;

/// One revolute joint: a fixed mount transform followed by a rotation about a
/// unit axis expressed in the joint's local frame.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    /// Identifier unique within the chain.
    pub name: String,
    /// Fixed transform from the previous joint's frame to this joint's frame.
    pub pre_transform: Transform,
    /// Unit rotation axis in the local frame.
    pub axis: Vector3<f64>,
    /// Lower joint limit in radians.
    pub limit_lo: f64,
    /// Upper joint limit in radians.
    pub limit_hi: f64,
}

/// A full serial chain. Construct via [`ChainSpec::new`], [`parse_chain_spec`]
/// or [`builtin_chain`]; the constructor enforces the invariants (unit axes,
/// ordered limits within `[-pi, pi]`, unique joint names, at least one joint).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    name: String,
    joints: Vec<JointSpec>,
    tool: Transform,
    total_length: f64,
    planar_z: bool,
}

/// Joint angles for a specific chain, in radians, one entry per joint.
#[derive(Debug, Clone, PartialEq)]
pub struct JointConfig {
    pub angles: Vec<f64>,
}

impl JointConfig {
    pub fn new(angles: Vec<f64>) -> Self {
        Self { angles }
    }

    pub fn zeros(n: usize) -> Self {
        Self { angles: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(angles: Vec<f64>) -> Self {
        Self { angles }
    }
}

impl From<&[f64]> for JointConfig {
    fn from(angles: &[f64]) -> Self {
        Self { angles: angles.to_vec() }
    }
}

impl fmt::Display for JointConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, a) in self.angles.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a:.6}")?;
        }
        write!(f, "]")
    }
}

const AXIS_UNIT_TOL: f64 = 1e-9;
/// Tolerance for classifying a chain as planar (z-axis joints, motion
/// confined to the xy plane).
const PLANAR_TOL: f64 = 1e-12;

impl ChainSpec {
    /// Builds a chain, validating every invariant the rest of the crate
    /// relies on.
    pub fn new(name: impl Into<String>, joints: Vec<JointSpec>, tool: Transform) -> Result<Self> {
        let name = name.into();
        if joints.is_empty() {
            return Err(Error::Parse {
                line: 0,
                reason: "chain has no joints".into(),
            });
        }
        for (i, j) in joints.iter().enumerate() {
            if (j.axis.norm() - 1.0).abs() > AXIS_UNIT_TOL {
                return Err(Error::Parse {
                    line: 0,
                    reason: format!("joint {} axis is not unit length", j.name),
                });
            }
            if j.limit_lo >= j.limit_hi {
                return Err(Error::Parse {
                    line: 0,
                    reason: format!("joint {} limits are not ordered", j.name),
                });
            }
            if j.limit_lo < -std::f64::consts::PI || j.limit_hi > std::f64::consts::PI {
                return Err(Error::Parse {
                    line: 0,
                    reason: format!("joint {} limits extend beyond [-pi, pi]", j.name),
                });
            }
            if joints[..i].iter().any(|prev| prev.name == j.name) {
                return Err(Error::Parse {
                    line: 0,
                    reason: format!("duplicate joint name {}", j.name),
                });
            }
        }
        let total_length = joints
            .iter()
            .map(|j| j.pre_transform.translation.norm())
            .sum::<f64>()
            + tool.translation.norm();
        let planar_z = is_planar_z(&joints, &tool);
        Ok(Self { name, joints, tool, total_length, planar_z })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn tool(&self) -> &Transform {
        &self.tool
    }

    /// Number of joints (degrees of freedom).
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    /// Sum of link offset lengths plus the tool offset; the reach of a chain
    /// whose links line up at the zero configuration.
    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    /// True when every joint rotates about z and all offsets stay in the xy
    /// plane, so the tool can only translate in-plane and rotate about z.
    pub fn is_planar_z(&self) -> bool {
        self.planar_z
    }

    fn check_dof(&self, config: &JointConfig) -> Result<()> {
        if config.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                actual: config.len(),
            });
        }
        Ok(())
    }

    /// Tool pose for the given joint configuration.
    pub fn forward_kinematics(&self, config: &JointConfig) -> Result<Pose> {
        let frames = self.fk_frames(config)?;
        Ok(Pose::new(
            frames.tool_position,
            UnitQuaternion::new_normalize(frames.tool_quat_raw),
        ))
    }

    /// World-frame joint axes and origins along with the raw (un-normalised
    /// sign) tool quaternion. Internal building block shared by the
    /// Jacobians and the analytic loss gradient.
    pub(crate) fn fk_frames(&self, config: &JointConfig) -> Result<FkFrames> {
        self.check_dof(config)?;
        let mut position = Vector3::zeros();
        let mut rotation = Quaternion::identity();
        let mut joint_origins = Vec::with_capacity(self.dof());
        let mut world_axes = Vec::with_capacity(self.dof());
        for (joint, &theta) in self.joints.iter().zip(&config.angles) {
            let pre = &joint.pre_transform;
            position += rotate_raw(&rotation, &pre.translation);
            rotation *= pre.rotation.quaternion();
            joint_origins.push(position);
            world_axes.push(rotate_raw(&rotation, &joint.axis));
            let spin = UnitQuaternion::from_axis_angle(
                &nalgebra::Unit::new_unchecked(joint.axis),
                theta,
            );
            rotation *= spin.quaternion();
        }
        position += rotate_raw(&rotation, &self.tool.translation);
        rotation *= self.tool.rotation.quaternion();
        Ok(FkFrames {
            joint_origins,
            world_axes,
            tool_position: position,
            tool_quat_raw: rotation,
        })
    }

    /// Geometric Jacobian, 6 x dof. Row block 0..3 is linear velocity, rows
    /// 3..6 angular velocity, both in the world frame: column i is
    /// `(z_i x (p_tool - p_i), z_i)`.
    pub fn geometric_jacobian(&self, config: &JointConfig) -> Result<DMatrix<f64>> {
        let frames = self.fk_frames(config)?;
        let n = self.dof();
        let mut jac = DMatrix::zeros(6, n);
        for i in 0..n {
            let z = frames.world_axes[i];
            let lever = frames.tool_position - frames.joint_origins[i];
            let lin = z.cross(&lever);
            for r in 0..3 {
                jac[(r, i)] = lin[r];
                jac[(r + 3, i)] = z[r];
            }
        }
        Ok(jac)
    }

    /// Derivative of the raw tool quaternion with respect to each joint
    /// angle, 4 x dof with rows ordered (w, x, y, z). Column i is
    /// `0.5 * (0, z_i) * q` where `z_i` is the world-frame joint axis and `q`
    /// the raw chain quaternion (no sign canonicalisation), so the columns
    /// are tangent to the same representative that `fk_frames` returns.
    pub fn quaternion_jacobian(&self, config: &JointConfig) -> Result<DMatrix<f64>> {
        let frames = self.fk_frames(config)?;
        let n = self.dof();
        let mut jac = DMatrix::zeros(4, n);
        for i in 0..n {
            let col = Quaternion::from_imag(frames.world_axes[i]) * frames.tool_quat_raw * 0.5;
            jac[(0, i)] = col.w;
            jac[(1, i)] = col.i;
            jac[(2, i)] = col.j;
            jac[(3, i)] = col.k;
        }
        Ok(jac)
    }

    /// Smallest singular value of the task Jacobian: the full 6 x dof
    /// geometric Jacobian in general, reduced to the three achievable task
    /// rows (x, y, yaw) for planar z-axis chains so that the planar deficit
    /// does not read as a permanent singularity.
    pub fn min_singular_value(&self, config: &JointConfig) -> Result<f64> {
        let jac = self.geometric_jacobian(config)?;
        let task = if self.planar_z {
            let mut t = DMatrix::zeros(3, self.dof());
            for c in 0..self.dof() {
                t[(0, c)] = jac[(0, c)];
                t[(1, c)] = jac[(1, c)];
                t[(2, c)] = jac[(5, c)];
            }
            t
        } else {
            jac
        };
        let svals = task.singular_values();
        Ok(svals.iter().fold(f64::INFINITY, |m, &s| m.min(s)))
    }

    /// Per-joint limit violation distances: zero inside the limits, else the
    /// distance to the nearest bound. The sum is the `d_v` penalty term.
    pub fn limit_violations(&self, config: &JointConfig) -> Result<Vec<f64>> {
        self.check_dof(config)?;
        Ok(self
            .joints
            .iter()
            .zip(&config.angles)
            .map(|(j, &theta)| (j.limit_lo - theta).max(theta - j.limit_hi).max(0.0))
            .collect())
    }

    /// True when every joint angle lies within its limits.
    pub fn within_limits(&self, config: &JointConfig) -> Result<bool> {
        Ok(self.limit_violations(config)?.iter().all(|&v| v == 0.0))
    }

    /// Clamps each angle to its joint's limit interval.
    pub fn clamp_to_limits(&self, config: &JointConfig) -> Result<JointConfig> {
        self.check_dof(config)?;
        Ok(JointConfig::new(
            self.joints
                .iter()
                .zip(&config.angles)
                .map(|(j, &theta)| theta.clamp(j.limit_lo, j.limit_hi))
                .collect(),
        ))
    }
}

/// World-frame per-joint geometry produced by one forward pass.
pub(crate) struct FkFrames {
    /// World origin of each joint (after its pre-transform).
    pub joint_origins: Vec<Vector3<f64>>,
    /// World direction of each joint axis at the current configuration.
    pub world_axes: Vec<Vector3<f64>>,
    pub tool_position: Vector3<f64>,
    /// Raw chain quaternion product, not canonicalised to w >= 0.
    pub tool_quat_raw: Quaternion<f64>,
}

/// Rotates a vector by a quaternion that is unit up to accumulated rounding.
fn rotate_raw(q: &Quaternion<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    UnitQuaternion::new_unchecked(*q).transform_vector(v)
}

fn is_planar_z(joints: &[JointSpec], tool: &Transform) -> bool {
    let pure_z = |t: &Transform| {
        t.translation.z.abs() <= PLANAR_TOL
            && t.rotation.quaternion().i.abs() <= PLANAR_TOL
            && t.rotation.quaternion().j.abs() <= PLANAR_TOL
    };
    joints.iter().all(|j| {
        pure_z(&j.pre_transform)
            && j.axis.x.abs() <= PLANAR_TOL
            && j.axis.y.abs() <= PLANAR_TOL
    }) && pure_z(tool)
}

/// Parses the plain-text chain format.
///
/// ```text
/// name <identifier>
/// joint <name> xyz <x> <y> <z> rpy <r> <p> <y> axis <ax> <ay> <az> limits <lo> <hi>
/// tool xyz <x> <y> <z> rpy <r> <p> <y>
/// ```
///
/// `#` starts a comment, blank lines are ignored, the `tool` line is optional
/// (identity when absent) and joint order in the file is chain order.
pub fn parse_chain_spec(text: &str) -> Result<ChainSpec> {
    let mut name: Option<String> = None;
    let mut joints: Vec<JointSpec> = Vec::new();
    let mut tool: Option<Transform> = None;
    let mut tool_line = 0usize;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "name" => {
                if tokens.len() != 2 {
                    return Err(parse_err(line_no, "name takes exactly one identifier"));
                }
                if name.is_some() {
                    return Err(parse_err(line_no, "duplicate name line"));
                }
                name = Some(tokens[1].to_string());
            }
            "joint" => {
                if joints.iter().len() > 0 && tool.is_some() {
                    return Err(parse_err(line_no, "joint line after tool line"));
                }
                joints.push(parse_joint_line(line_no, &tokens)?);
            }
            "tool" => {
                if tool.is_some() {
                    return Err(parse_err(line_no, "duplicate tool line"));
                }
                if tokens.len() != 9 || tokens[1] != "xyz" || tokens[5] != "rpy" {
                    return Err(parse_err(
                        line_no,
                        "tool line must be `tool xyz <x> <y> <z> rpy <r> <p> <y>`",
                    ));
                }
                let xyz = parse_vec3(line_no, &tokens[2..5])?;
                let rpy = parse_vec3(line_no, &tokens[6..9])?;
                tool = Some(Transform::from_xyz_rpy(xyz, rpy));
                tool_line = line_no;
            }
            other => {
                return Err(parse_err(line_no, format!("unknown directive `{other}`")));
            }
        }
    }

    let _ = tool_line;
    let name = name.ok_or_else(|| parse_err(0, "missing name line"))?;
    let chain = ChainSpec::new(name, joints, tool.unwrap_or_else(Transform::identity))?;
    Ok(chain)
}

fn parse_joint_line(line_no: usize, tokens: &[&str]) -> Result<JointSpec> {
    if tokens.len() != 17
        || tokens[2] != "xyz"
        || tokens[6] != "rpy"
        || tokens[10] != "axis"
        || tokens[14] != "limits"
    {
        return Err(parse_err(
            line_no,
            "joint line must be `joint <name> xyz <x> <y> <z> rpy <r> <p> <y> \
             axis <ax> <ay> <az> limits <lo> <hi>`",
        ));
    }
    let name = tokens[1].to_string();
    let xyz = parse_vec3(line_no, &tokens[3..6])?;
    let rpy = parse_vec3(line_no, &tokens[7..10])?;
    let axis = parse_vec3(line_no, &tokens[11..14])?;
    let limit_lo = parse_f64(line_no, tokens[15])?;
    let limit_hi = parse_f64(line_no, tokens[16])?;
    if (axis.norm() - 1.0).abs() > AXIS_UNIT_TOL {
        return Err(parse_err(line_no, format!("axis of joint {name} is not unit length")));
    }
    if limit_lo >= limit_hi {
        return Err(parse_err(line_no, format!("limits of joint {name} are not ordered")));
    }
    if limit_lo < -std::f64::consts::PI || limit_hi > std::f64::consts::PI {
        return Err(parse_err(
            line_no,
            format!("limits of joint {name} extend beyond [-pi, pi]"),
        ));
    }
    Ok(JointSpec {
        name,
        pre_transform: Transform::from_xyz_rpy(xyz, rpy),
        axis,
        limit_lo,
        limit_hi,
    })
}

fn parse_vec3(line_no: usize, tokens: &[&str]) -> Result<Vector3<f64>> {
    Ok(Vector3::new(
        parse_f64(line_no, tokens[0])?,
        parse_f64(line_no, tokens[1])?,
        parse_f64(line_no, tokens[2])?,
    ))
}

fn parse_f64(line_no: usize, token: &str) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| parse_err(line_no, format!("expected a number, found `{token}`")))
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse { line, reason: reason.into() }
}

/// Serialises a chain back to the chain file format; `parse_chain_spec` of
/// the output reproduces the chain.
pub fn format_chain_spec(chain: &ChainSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!("name {}\n", chain.name()));
    for j in chain.joints() {
        let t = &j.pre_transform.translation;
        let rpy = rpy_of(&j.pre_transform.rotation);
        out.push_str(&format!(
            "joint {} xyz {:?} {:?} {:?} rpy {:?} {:?} {:?} axis {:?} {:?} {:?} limits {:?} {:?}\n",
            j.name, t.x, t.y, t.z, rpy.x, rpy.y, rpy.z, j.axis.x, j.axis.y, j.axis.z,
            j.limit_lo, j.limit_hi
        ));
    }
    let t = &chain.tool().translation;
    let rpy = rpy_of(&chain.tool().rotation);
    out.push_str(&format!(
        "tool xyz {:?} {:?} {:?} rpy {:?} {:?} {:?}\n",
        t.x, t.y, t.z, rpy.x, rpy.y, rpy.z
    ));
    out
}

/// Recovers intrinsic X-Y-Z angles from a rotation (inverse of
/// [`crate::transform::quat_from_rpy_intrinsic_xyz`]).
fn rpy_of(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let m = q.to_rotation_matrix();
    let m = m.matrix();
    // R = Rx(r) * Ry(p) * Rz(y): m02 = sin p, m01 = -cos p sin y, ...
    let p = m[(0, 2)].clamp(-1.0, 1.0).asin();
    if m[(0, 2)].abs() > 1.0 - 1e-12 {
        // Gimbal lock: only r - y (or r + y) is determined; pick y = 0.
        let r = m[(1, 0)].atan2(m[(1, 1)]);
        Vector3::new(r, p, 0.0)
    } else {
        let r = (-m[(1, 2)]).atan2(m[(2, 2)]);
        let y = (-m[(0, 1)]).atan2(m[(0, 0)]);
        Vector3::new(r, p, y)
    }
}

/// Returns one of the chains shipped with the crate: `planar3`, `arm6` or
/// `chain15`.
pub fn builtin_chain(name: &str) -> Result<ChainSpec> {
    let text = match name {
        "planar3" => include_str!("../chains/planar3.chain"),
        "arm6" => include_str!("../chains/arm6.chain"),
        "chain15" => include_str!("../chains/chain15.chain"),
        _ => return Err(Error::UnknownChain(name.to_string())),
    };
    parse_chain_spec(text)
}

/// Names accepted by [`builtin_chain`].
pub fn builtin_names() -> [&'static str; 3] {
    ["planar3", "arm6", "chain15"]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn builtin_chains_load_with_expected_shape() {
        let planar3 = builtin_chain("planar3").unwrap();
        assert_eq!(planar3.dof(), 3);
        assert_relative_eq!(planar3.total_length(), 1.3, epsilon = 1e-12);
        assert!(planar3.is_planar_z());

        let arm6 = builtin_chain("arm6").unwrap();
        assert_eq!(arm6.dof(), 6);
        assert_relative_eq!(arm6.total_length(), 1.12, epsilon = 1e-12);
        assert!(!arm6.is_planar_z());

        let chain15 = builtin_chain("chain15").unwrap();
        assert_eq!(chain15.dof(), 15);
        assert_relative_eq!(chain15.total_length(), 2.31, epsilon = 1e-12);
        assert!(!chain15.is_planar_z());

        assert!(matches!(builtin_chain("nope"), Err(Error::UnknownChain(_))));
    }

    #[test]
    fn planar3_fk_matches_hand_geometry() {
        let chain = builtin_chain("planar3").unwrap();
        // Zero configuration: links line up along +x.
        let pose = chain.forward_kinematics(&JointConfig::zeros(3)).unwrap();
        assert_relative_eq!(pose.position, Vector3::new(1.3, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(pose.quat_wxyz()[0], 1.0, epsilon = 1e-12);

        // First joint at 90 degrees swings the whole arm onto +y.
        let pose = chain
            .forward_kinematics(&JointConfig::new(vec![FRAC_PI_2, 0.0, 0.0]))
            .unwrap();
        assert_relative_eq!(pose.position, Vector3::new(0.0, 1.3, 0.0), epsilon = 1e-12);

        // Elbow bends: (0.6, 0.4 + 0.3, 0) with tool yaw pi/2.
        let pose = chain
            .forward_kinematics(&JointConfig::new(vec![0.0, FRAC_PI_2, 0.0]))
            .unwrap();
        assert_relative_eq!(pose.position, Vector3::new(0.6, 0.7, 0.0), epsilon = 1e-12);
        let q = pose.quat_wxyz();
        assert_relative_eq!(q[0], (FRAC_PI_2 / 2.0).cos(), epsilon = 1e-12);
        assert_relative_eq!(q[3], (FRAC_PI_2 / 2.0).sin(), epsilon = 1e-12);
    }

    #[test]
    fn arm6_fk_zero_points_straight_up() {
        let chain = builtin_chain("arm6").unwrap();
        let pose = chain.forward_kinematics(&JointConfig::zeros(6)).unwrap();
        assert_relative_eq!(pose.position, Vector3::new(0.0, 0.0, 1.12), epsilon = 1e-12);
        assert_relative_eq!(pose.quat_wxyz()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn geometric_jacobian_matches_hand_values_at_zero() {
        let chain = builtin_chain("planar3").unwrap();
        let jac = chain.geometric_jacobian(&JointConfig::zeros(3)).unwrap();
        // At zero the arm lies along +x, axes along +z: column i moves the
        // tool along +y with lever equal to the remaining arm length.
        let levers = [1.3, 0.7, 0.3];
        for (i, lever) in levers.iter().enumerate() {
            assert_relative_eq!(jac[(0, i)], 0.0, epsilon = 1e-12);
            assert_relative_eq!(jac[(1, i)], *lever, epsilon = 1e-12);
            assert_relative_eq!(jac[(2, i)], 0.0, epsilon = 1e-12);
            assert_relative_eq!(jac[(3, i)], 0.0, epsilon = 1e-12);
            assert_relative_eq!(jac[(4, i)], 0.0, epsilon = 1e-12);
            assert_relative_eq!(jac[(5, i)], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn min_singular_value_flags_the_stretched_arm() {
        let chain = builtin_chain("planar3").unwrap();
        // Stretched (elbow angle zero): radial motion impossible.
        let stretched = chain.min_singular_value(&JointConfig::zeros(3)).unwrap();
        assert!(stretched < 1e-12, "stretched arm should be singular, got {stretched}");
        // Bent elbow: well conditioned.
        let bent = chain
            .min_singular_value(&JointConfig::new(vec![0.3, FRAC_PI_2, -0.4]))
            .unwrap();
        assert!(bent > 0.1, "bent arm should be regular, got {bent}");
    }

    #[test]
    fn limit_violations_measure_distance_to_the_nearest_bound() {
        let chain = builtin_chain("planar3").unwrap();
        let v = chain
            .limit_violations(&JointConfig::new(vec![0.0, 3.1, -3.0]))
            .unwrap();
        assert_relative_eq!(v[0], 0.0);
        assert_relative_eq!(v[1], 3.1 - 2.9, epsilon = 1e-12);
        assert_relative_eq!(v[2], 3.0 - 2.9, epsilon = 1e-12);
        assert!(!chain.within_limits(&JointConfig::new(vec![0.0, 3.1, -3.0])).unwrap());
        assert!(chain.within_limits(&JointConfig::zeros(3)).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let chain = builtin_chain("planar3").unwrap();
        let err = chain.forward_kinematics(&JointConfig::zeros(4)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 3, actual: 4 }));
    }

    #[test]
    fn parser_reports_line_numbers_for_bad_input() {
        let bad_axis = "name t\njoint a xyz 0 0 0 rpy 0 0 0 axis 0 0 2 limits -1 1\n";
        match parse_chain_spec(bad_axis) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }

        let bad_limits = "name t\njoint a xyz 0 0 0 rpy 0 0 0 axis 0 0 1 limits 1 -1\n";
        assert!(matches!(parse_chain_spec(bad_limits), Err(Error::Parse { line: 2, .. })));

        let wide_limits = "name t\njoint a xyz 0 0 0 rpy 0 0 0 axis 0 0 1 limits -4 4\n";
        assert!(matches!(parse_chain_spec(wide_limits), Err(Error::Parse { line: 2, .. })));

        let not_a_number = "name t\njoint a xyz 0 0 X rpy 0 0 0 axis 0 0 1 limits -1 1\n";
        assert!(matches!(parse_chain_spec(not_a_number), Err(Error::Parse { line: 2, .. })));

        let duplicate = "name t\n\
            joint a xyz 0 0 0 rpy 0 0 0 axis 0 0 1 limits -1 1\n\
            joint a xyz 0 0 0 rpy 0 0 0 axis 0 0 1 limits -1 1\n";
        assert!(matches!(parse_chain_spec(duplicate), Err(Error::Parse { .. })));

        let no_joints = "name t\n";
        assert!(matches!(parse_chain_spec(no_joints), Err(Error::Parse { .. })));

        let no_name = "joint a xyz 0 0 0 rpy 0 0 0 axis 0 0 1 limits -1 1\n";
        assert!(matches!(parse_chain_spec(no_name), Err(Error::Parse { line: 0, .. })));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# heading\n\nname mini # trailing\njoint a xyz 1 0 0 rpy 0 0 0 axis 0 1 0 limits -1 1\n";
        let chain = parse_chain_spec(text).unwrap();
        assert_eq!(chain.name(), "mini");
        assert_eq!(chain.dof(), 1);
        // Tool defaults to identity.
        assert_relative_eq!(chain.tool().translation, Vector3::zeros());
    }

    #[test]
    fn format_roundtrips_through_the_parser() {
        for name in builtin_names() {
            let chain = builtin_chain(name).unwrap();
            let text = format_chain_spec(&chain);
            let reparsed = parse_chain_spec(&text).unwrap();
            assert_eq!(chain, reparsed);
        }
        // A chain with non-trivial rpy on a mount survives the roundtrip too.
        let text = "name bent\njoint a xyz 0.1 0.2 0.3 rpy 0.4 -0.5 0.6 axis 0 0 1 limits -2 2\ntool xyz 0 0 0.1 rpy 0.2 0 -0.3\n";
        let chain = parse_chain_spec(text).unwrap();
        let reparsed = parse_chain_spec(&format_chain_spec(&chain)).unwrap();
        assert_eq!(chain.dof(), reparsed.dof());
        let q = JointConfig::new(vec![0.7]);
        let a = chain.forward_kinematics(&q).unwrap().components();
        let b = reparsed.forward_kinematics(&q).unwrap().components();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn wrapped_rotations_keep_planarity_detection_honest() {
        // A z-rpy mount keeps the chain planar; an x-rpy mount breaks it.
        let planar = "name p\njoint a xyz 1 0 0 rpy 0 0 1.2 axis 0 0 1 limits -2 2\n";
        assert!(parse_chain_spec(planar).unwrap().is_planar_z());
        let tilted = "name p\njoint a xyz 1 0 0 rpy 1.2 0 0 axis 0 0 1 limits -2 2\n";
        assert!(!parse_chain_spec(tilted).unwrap().is_planar_z());
        let off_plane = "name p\njoint a xyz 0 0 1 rpy 0 0 0 axis 0 0 1 limits -2 2\n";
        assert!(!parse_chain_spec(off_plane).unwrap().is_planar_z());
    }

    #[test]
    fn quaternion_jacobian_columns_are_tangent() {
        // q^T dq/dtheta = 0 because dq/dtheta = 0.5 (0, z) q and (0, z) is
        // pure imaginary.
        let chain = builtin_chain("arm6").unwrap();
        let config = JointConfig::new(vec![0.3, -0.7, 1.1, 0.5, -0.2, 0.9]);
        let frames = chain.fk_frames(&config).unwrap();
        let q = frames.tool_quat_raw;
        let jac = chain.quaternion_jacobian(&config).unwrap();
        for c in 0..6 {
            let dot = q.w * jac[(0, c)] + q.i * jac[(1, c)] + q.j * jac[(2, c)] + q.k * jac[(3, c)];
            assert_relative_eq!(dot, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn total_length_bounds_the_reach() {
        // Random in-limit configurations never place the tool beyond
        // total_length from the base.
        let chain = builtin_chain("chain15").unwrap();
        let mut angles = vec![0.0; 15];
        for k in 0..50 {
            for (i, a) in angles.iter_mut().enumerate() {
                *a = (((k * 31 + i * 17) % 100) as f64 / 100.0 - 0.5) * 4.0;
            }
            let pose = chain.forward_kinematics(&JointConfig::new(angles.clone())).unwrap();
            assert!(pose.position.norm() <= chain.total_length() + 1e-9);
        }
    }
}
