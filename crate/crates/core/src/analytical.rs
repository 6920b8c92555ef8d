//! Closed-form inverse kinematics for the two shipped geometries that admit
//! it: the planar 3-joint arm (two-link reduction after fixing the tool yaw)
//! and the 6-joint arm with a spherical wrist (position/orientation
//! decoupling through the wrist centre).
//!
//! Both solvers return *every* solution branch — up to 2 for `planar3`
//! (elbow sign) and up to 8 for `arm6` (shoulder x elbow x wrist signs) —
//! in a deterministic order, with joint-limit filtering available as an
//! option rather than a default.

use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;

use crate::chain::{ChainSpec, JointConfig};
use crate::error::Error;
use crate::transform::Pose;
use crate::Result;

/// Tolerance for accepting a target as planar (z and tilt components).
const PLANAR_TARGET_TOL: f64 = 1e-9;
/// Law-of-cosines values may exceed [-1, 1] by rounding when the target sits
/// on the stretched/folded boundary; overshoots up to this much are clamped,
/// anything larger means the target is genuinely out of reach. The induced
/// position error is below 1e-10 for the shipped link lengths.
const COS_CLAMP_TOL: f64 = 1e-9;
/// Below this sine magnitude the wrist is treated as singular and the
/// canonical theta4 = 0 representative is returned.
const WRIST_SINGULAR_TOL: f64 = 1e-12;
/// Two branches closer than this in the max norm are duplicates.
const DEDUPE_TOL: f64 = 1e-9;

/// All closed-form solution branches for one target, in a deterministic
/// order. Invariants: every config reproduces the query pose under forward
/// kinematics (position and orientation error below 1e-9) and no two configs
/// coincide within 1e-9 in the max norm. Empty when the target is out of
/// reach.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticalSolutionSet {
    pub configs: Vec<JointConfig>,
}

impl AnalyticalSolutionSet {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// Keeps only branches inside the chain's joint limits.
    pub fn within_limits(&self, chain: &ChainSpec) -> Result<AnalyticalSolutionSet> {
        let mut configs = Vec::new();
        for c in &self.configs {
            if chain.within_limits(c)? {
                configs.push(c.clone());
            }
        }
        Ok(AnalyticalSolutionSet { configs })
    }

    /// Index of the branch closest to `reference` in the max norm; `None`
    /// when the set is empty. Useful for keeping trajectories on one branch.
    pub fn closest_to(&self, reference: &JointConfig) -> Option<usize> {
        self.configs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let d = c
                    .angles
                    .iter()
                    .zip(&reference.angles)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                (i, d)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    fn push_deduped(&mut self, config: JointConfig) {
        let duplicate = self.configs.iter().any(|c| {
            c.angles
                .iter()
                .zip(&config.angles)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
                <= DEDUPE_TOL
        });
        if !duplicate {
            self.configs.push(config);
        }
    }
}

/// Options for the closed-form solvers. `respect_limits` filters branches to
/// the joint-limit box; the default keeps every branch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AnalyticalOptions {
    pub respect_limits: bool,
}

/// Wraps an angle to `(-pi, pi]`.
fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Link lengths of a planar3-shaped chain: three z-axis joints in the plane,
/// links along local +x, no mount rotations.
struct Planar3Geometry {
    a1: f64,
    a2: f64,
    a3: f64,
}

fn planar3_geometry(chain: &ChainSpec) -> Result<Planar3Geometry> {
    let unsupported = |reason: &str| {
        Error::AnalyticalUnsupported(chain.name().to_string(), reason.to_string())
    };
    if chain.dof() != 3 {
        return Err(unsupported("planar closed form needs exactly 3 joints"));
    }
    if !chain.is_planar_z() {
        return Err(unsupported("planar closed form needs a planar z-axis chain"));
    }
    let js = chain.joints();
    for j in js {
        if (j.axis - Vector3::z()).norm() > 1e-12 {
            return Err(unsupported("planar closed form needs all joint axes along +z"));
        }
        if j.pre_transform.rotation.angle() > 1e-12 {
            return Err(unsupported("planar closed form needs unrotated joint mounts"));
        }
    }
    if chain.tool().rotation.angle() > 1e-12 {
        return Err(unsupported("planar closed form needs an unrotated tool"));
    }
    let along_x = |t: &Vector3<f64>| t.y.abs() <= 1e-12 && t.z.abs() <= 1e-12 && t.x >= 0.0;
    if js[0].pre_transform.translation.norm() > 1e-12
        || !along_x(&js[1].pre_transform.translation)
        || !along_x(&js[2].pre_transform.translation)
        || !along_x(&chain.tool().translation)
    {
        return Err(unsupported("planar closed form needs +x links from a base-origin joint"));
    }
    let a1 = js[1].pre_transform.translation.x;
    let a2 = js[2].pre_transform.translation.x;
    let a3 = chain.tool().translation.x;
    if a1 <= 0.0 || a2 <= 0.0 {
        return Err(unsupported("planar closed form needs positive link lengths"));
    }
    Ok(Planar3Geometry { a1, a2, a3 })
}

/// Closed-form IK for planar3-shaped chains.
///
/// The tool yaw fixes the last link's direction, reducing the problem to a
/// two-link reach of the wrist point; the elbow angle follows from the law
/// of cosines with its two sign branches, ordered positive elbow first.
pub fn solve_planar3(chain: &ChainSpec, target: &Pose) -> Result<AnalyticalSolutionSet> {
    let geo = planar3_geometry(chain)?;
    let q = target.quat_wxyz();
    if target.position.z.abs() > PLANAR_TARGET_TOL
        || q[1].abs() > PLANAR_TARGET_TOL
        || q[2].abs() > PLANAR_TARGET_TOL
    {
        return Err(Error::NonPlanarTarget);
    }
    // Canonical poses have w >= 0, so the yaw doubles back from the
    // quaternion without branch ambiguity.
    let yaw = 2.0 * q[3].atan2(q[0]);

    // Wrist point: pull the tool link back along the commanded yaw.
    let wx = target.position.x - geo.a3 * yaw.cos();
    let wy = target.position.y - geo.a3 * yaw.sin();

    let mut set = AnalyticalSolutionSet { configs: Vec::new() };
    let c2 = (wx * wx + wy * wy - geo.a1 * geo.a1 - geo.a2 * geo.a2) / (2.0 * geo.a1 * geo.a2);
    if c2.abs() > 1.0 + COS_CLAMP_TOL {
        return Ok(set); // out of reach (too far or inside the inner annulus)
    }
    let c2 = c2.clamp(-1.0, 1.0);
    let s2 = (1.0 - c2 * c2).sqrt();
    for s2_signed in [s2, -s2] {
        let theta2 = s2_signed.atan2(c2);
        let theta1 = wy.atan2(wx) - (geo.a2 * s2_signed).atan2(geo.a1 + geo.a2 * c2);
        let theta1 = wrap_angle(theta1);
        let theta3 = wrap_angle(yaw - theta1 - theta2);
        set.push_deduped(JointConfig::new(vec![theta1, theta2, theta3]));
    }
    Ok(set)
}

/// Fixed offsets of a wrist-partitioned 6-joint chain:
/// `Rz Tz(d1) Ry Tz(a2) Ry Tz(d4) Rz Ry Rz Tz(d6)`.
struct Wrist6Geometry {
    d1: f64,
    a2: f64,
    d4: f64,
    d6: f64,
}

fn wrist6_geometry(chain: &ChainSpec) -> Result<Wrist6Geometry> {
    let unsupported = |reason: &str| {
        Error::AnalyticalUnsupported(chain.name().to_string(), reason.to_string())
    };
    if chain.dof() != 6 {
        return Err(unsupported("wrist closed form needs exactly 6 joints"));
    }
    let js = chain.joints();
    let axes = [
        Vector3::z(),
        Vector3::y(),
        Vector3::y(),
        Vector3::z(),
        Vector3::y(),
        Vector3::z(),
    ];
    for (j, want) in js.iter().zip(&axes) {
        if (j.axis - want).norm() > 1e-12 {
            return Err(unsupported("wrist closed form needs the z-y-y-z-y-z axis pattern"));
        }
        if j.pre_transform.rotation.angle() > 1e-12 {
            return Err(unsupported("wrist closed form needs unrotated joint mounts"));
        }
    }
    if chain.tool().rotation.angle() > 1e-12 {
        return Err(unsupported("wrist closed form needs an unrotated tool"));
    }
    let along_z = |t: &Vector3<f64>| t.x.abs() <= 1e-12 && t.y.abs() <= 1e-12;
    let ts: Vec<&Vector3<f64>> = js.iter().map(|j| &j.pre_transform.translation).collect();
    if ts[0].norm() > 1e-12
        || !along_z(ts[1])
        || !along_z(ts[2])
        || !along_z(ts[3])
        || ts[4].norm() > 1e-12
        || ts[5].norm() > 1e-12
        || !along_z(&chain.tool().translation)
    {
        return Err(unsupported(
            "wrist closed form needs +z offsets and concurrent wrist axes",
        ));
    }
    let geo = Wrist6Geometry {
        d1: ts[1].z,
        a2: ts[2].z,
        d4: ts[3].z,
        d6: chain.tool().translation.z,
    };
    if geo.d1 <= 0.0 || geo.a2 <= 0.0 || geo.d4 <= 0.0 || geo.d6 <= 0.0 {
        return Err(unsupported("wrist closed form needs positive link offsets"));
    }
    Ok(geo)
}

/// Closed-form IK for wrist-partitioned 6-joint chains.
///
/// The wrist centre (intersection of the last three axes) depends only on
/// the first three joints, so position and orientation decouple: joints 1-3
/// place the wrist centre (shoulder front/back and elbow sign branches),
/// then the remaining rotation is factored as z-y-z Euler angles (wrist
/// flip branch). Branch order is shoulder (front, back) x elbow (positive,
/// negative theta3) x wrist (non-negative, negative theta5); at a wrist
/// singularity (theta5 = 0) the representative with theta4 = 0 is returned.
pub fn solve_wrist6(chain: &ChainSpec, target: &Pose) -> Result<AnalyticalSolutionSet> {
    let geo = wrist6_geometry(chain)?;
    let r_target = target.orientation().to_rotation_matrix().into_inner();

    // Wrist centre: pull the tool offset back along the target approach.
    let centre = target.position - r_target * Vector3::new(0.0, 0.0, geo.d6);
    let rho = centre.x.hypot(centre.y);
    let v = centre.z - geo.d1;

    let mut set = AnalyticalSolutionSet { configs: Vec::new() };
    let c3 = (rho * rho + v * v - geo.a2 * geo.a2 - geo.d4 * geo.d4) / (2.0 * geo.a2 * geo.d4);
    if c3.abs() > 1.0 + COS_CLAMP_TOL {
        return Ok(set); // wrist centre out of reach
    }
    let c3 = c3.clamp(-1.0, 1.0);
    let s3 = (1.0 - c3 * c3).sqrt();

    let base_yaw = centre.y.atan2(centre.x);
    for (theta1, u) in [(base_yaw, rho), (wrap_angle(base_yaw + PI), -rho)] {
        for s3_signed in [s3, -s3] {
            let theta3 = s3_signed.atan2(c3);
            let theta2 =
                u.atan2(v) - (geo.d4 * s3_signed).atan2(geo.a2 + geo.d4 * c3);
            let theta2 = wrap_angle(theta2);

            // Remaining rotation for the wrist: M = R03^T R*, with
            // R03 = Rz(theta1) Ry(theta2 + theta3).
            let r03 = Matrix3::from(
                nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), theta1)
                    * nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), theta2 + theta3),
            );
            let m = r03.transpose() * r_target;

            // z-y-z factorisation: M = Rz(t4) Ry(t5) Rz(t6).
            let sin5 = m[(0, 2)].hypot(m[(1, 2)]);
            if sin5 <= WRIST_SINGULAR_TOL {
                // Singular wrist: only t4 + t6 (or t4 - t6) is determined;
                // return the t4 = 0 representative.
                let theta5 = sin5.atan2(m[(2, 2)]);
                let theta6 = if m[(2, 2)] > 0.0 {
                    m[(1, 0)].atan2(m[(0, 0)])
                } else {
                    m[(1, 0)].atan2(m[(1, 1)])
                };
                set.push_deduped(JointConfig::new(vec![
                    theta1, theta2, theta3, 0.0, theta5, theta6,
                ]));
            } else {
                for flip in [false, true] {
                    let (theta4, theta5, theta6) = if !flip {
                        (
                            m[(1, 2)].atan2(m[(0, 2)]),
                            sin5.atan2(m[(2, 2)]),
                            m[(2, 1)].atan2(-m[(2, 0)]),
                        )
                    } else {
                        (
                            wrap_angle(m[(1, 2)].atan2(m[(0, 2)]) + PI),
                            (-sin5).atan2(m[(2, 2)]),
                            wrap_angle(m[(2, 1)].atan2(-m[(2, 0)]) + PI),
                        )
                    };
                    set.push_deduped(JointConfig::new(vec![
                        theta1, theta2, theta3, theta4, theta5, theta6,
                    ]));
                }
            }
        }
    }
    Ok(set)
}

/// Dispatches to the matching closed-form solver by chain shape and applies
/// the options; errors with [`Error::AnalyticalUnsupported`] when neither
/// form fits (redundant chains such as chain15 have no general closed form).
pub fn solve(
    chain: &ChainSpec,
    target: &Pose,
    options: &AnalyticalOptions,
) -> Result<AnalyticalSolutionSet> {
    let set = if planar3_geometry(chain).is_ok() {
        solve_planar3(chain, target)?
    } else if wrist6_geometry(chain).is_ok() {
        solve_wrist6(chain, target)?
    } else {
        return Err(Error::AnalyticalUnsupported(
            chain.name().to_string(),
            "no closed form for this chain shape".to_string(),
        ));
    };
    if options.respect_limits {
        set.within_limits(chain)
    } else {
        Ok(set)
    }
}
