//! Dataset generation and persistence: uniform joint-space samples,
//! singular / nonsingular splits, unreachable pose sets and Cartesian line
//! trajectories, written to a small CSV schema
//! (`q1..qn, px, py, pz, qw, qx, qy, qz`; empty q-cells mean pose-only).
//!
//! Every generator is deterministic in its seed: sample `i` draws from a
//! dedicated stream of the counter-based generator, so generation can shard
//! across threads without changing the result.

use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chain::{builtin_names, ChainSpec, JointConfig};
use crate::error::Error;
use crate::transform::Pose;
use crate::Result;

/// One dataset entry: a pose, with the generating configuration attached
/// when one exists (absent for unreachable poses and trajectory waypoints).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSample {
    pub config: Option<JointConfig>,
    pub pose: Pose,
}

/// What a dataset contains; fixes the invariants its samples satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Uniform,
    Singular,
    Nonsingular,
    Unreachable,
    Trajectory,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Uniform => "uniform",
            DatasetKind::Singular => "singular",
            DatasetKind::Nonsingular => "nonsingular",
            DatasetKind::Unreachable => "unreachable",
            DatasetKind::Trajectory => "trajectory",
        })
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(DatasetKind::Uniform),
            "singular" => Ok(DatasetKind::Singular),
            "nonsingular" => Ok(DatasetKind::Nonsingular),
            "unreachable" => Ok(DatasetKind::Unreachable),
            "trajectory" => Ok(DatasetKind::Trajectory),
            other => Err(Error::InvalidOptions(format!("unknown dataset kind `{other}`"))),
        }
    }
}

/// An ordered set of pose samples for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub chain: String,
    pub kind: DatasetKind,
    pub seed: u64,
    pub samples: Vec<PoseSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Default sigma threshold below which a configuration counts as
/// near-singular.
pub const NEAR_SINGULAR_SIGMA: f64 = 0.01;
/// Default sigma threshold above which a configuration counts as cleanly
/// nonsingular (an order of magnitude above the near-singular band).
pub const NONSINGULAR_SIGMA: f64 = 0.1;

/// Attempt cap per sample for rejection-sampled singular sets.
const REJECTION_CAP: usize = 500_000;

/// RNG for sample `index` of a generation run: one counter stream per index
/// so parallel sharding cannot change the output.
fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn uniform_config(chain: &ChainSpec, rng: &mut ChaCha8Rng) -> JointConfig {
    JointConfig::new(
        chain
            .joints()
            .iter()
            .map(|j| rng.random_range(j.limit_lo..=j.limit_hi))
            .collect(),
    )
}

fn require_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidOptions("sample count must be at least 1".into()));
    }
    Ok(())
}

/// Uniform joint-space samples within the limits, with forward kinematics
/// attached. Deterministic in `seed`.
pub fn sample_uniform(chain: &ChainSpec, count: usize, seed: u64) -> Result<Dataset> {
    require_count(count)?;
    let samples = crate::thread_pool().install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(seed, i);
                let config = uniform_config(chain, &mut rng);
                let pose = chain.forward_kinematics(&config)?;
                Ok(PoseSample { config: Some(config), pose })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(Dataset {
        chain: chain.name().to_string(),
        kind: DatasetKind::Uniform,
        seed,
        samples,
    })
}

/// Samples on the known singular manifolds of the builtin chains: planar3
/// pins the elbow to 0 or pi, arm6 alternates between the elbow-stretch
/// (theta3 = 0) and wrist (theta5 = 0) manifolds, chain15 has no tractable
/// manifold description and uses rejection sampling against
/// `sigma_min < 0.01`. All other joints are uniform within limits.
pub fn make_singular_set(chain: &ChainSpec, count: usize, seed: u64) -> Result<Dataset> {
    require_count(count)?;
    if !builtin_names().contains(&chain.name()) {
        return Err(Error::UnknownChain(chain.name().to_string()));
    }
    let samples = crate::thread_pool().install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(seed, i);
                let config = match chain.name() {
                    "planar3" => {
                        let mut c = uniform_config(chain, &mut rng);
                        c.angles[1] = if rng.random_range(0..2u32) == 0 {
                            0.0
                        } else {
                            std::f64::consts::PI
                        };
                        c
                    }
                    "arm6" => {
                        let mut c = uniform_config(chain, &mut rng);
                        // Elbow stretch or aligned wrist, alternating at
                        // random.
                        if rng.random_range(0..2u32) == 0 {
                            c.angles[2] = 0.0;
                        } else {
                            c.angles[4] = 0.0;
                        }
                        c
                    }
                    _ => {
                        // chain15: rejection sampling. A plain uniform
                        // proposal never lands below 0.01 (the smallest
                        // sigma over 2e4 uniform draws is ~0.08), so the
                        // proposal shrinks a uniform draw toward the
                        // exactly singular stretched configuration by a
                        // random factor; sigma grows roughly linearly
                        // along that ray, giving ~8% acceptance. Scaling
                        // toward zero keeps the draw within the limits.
                        let mut attempts = 0usize;
                        loop {
                            let t: f64 = rng.random_range(0.0..0.15);
                            let mut c = uniform_config(chain, &mut rng);
                            for a in &mut c.angles {
                                *a *= t;
                            }
                            if chain.min_singular_value(&c)? < NEAR_SINGULAR_SIGMA {
                                break c;
                            }
                            attempts += 1;
                            if attempts >= REJECTION_CAP {
                                return Err(Error::RejectionBudget(attempts));
                            }
                        }
                    }
                };
                let pose = chain.forward_kinematics(&config)?;
                Ok(PoseSample { config: Some(config), pose })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(Dataset {
        chain: chain.name().to_string(),
        kind: DatasetKind::Singular,
        seed,
        samples,
    })
}

/// Keeps the samples whose smallest task-Jacobian singular value exceeds
/// `sigma_threshold` (use [`NONSINGULAR_SIGMA`] for the paper protocol).
/// Every sample must carry a configuration.
pub fn filter_nonsingular(
    chain: &ChainSpec,
    dataset: &Dataset,
    sigma_threshold: f64,
) -> Result<Dataset> {
    let mut samples = Vec::new();
    for s in &dataset.samples {
        let config = s.config.as_ref().ok_or_else(|| {
            Error::InvalidOptions("nonsingular filtering needs config-bearing samples".into())
        })?;
        if chain.min_singular_value(config)? > sigma_threshold {
            samples.push(s.clone());
        }
    }
    Ok(Dataset {
        chain: dataset.chain.clone(),
        kind: DatasetKind::Nonsingular,
        seed: dataset.seed,
        samples,
    })
}

/// Radius band, in multiples of total length, whose uniform mean matches
/// the reference mean distance for each builtin chain (3.25 m for planar3,
/// 1.95 m for arm6, 5.28 m for chain15).
pub fn default_unreachable_range(chain_name: &str) -> Option<(f64, f64)> {
    match chain_name {
        "planar3" => Some((1.5, 3.5)),
        "arm6" => Some((1.05, 2.4322)),
        "chain15" => Some((1.5, 3.0714)),
        _ => None,
    }
}

/// Poses strictly outside the reachable sphere: positions uniform in
/// direction and uniform in radius over `radius_range x total_length`,
/// orientations uniform (planar chains: in-plane directions and yaw-only
/// orientations). No configurations attached.
pub fn make_unreachable_set(
    chain: &ChainSpec,
    count: usize,
    radius_range: (f64, f64),
    seed: u64,
) -> Result<Dataset> {
    require_count(count)?;
    let (lo, hi) = radius_range;
    if lo <= 1.0 || hi < lo {
        return Err(Error::InvalidOptions(format!(
            "unreachable radius range must satisfy 1 < lo <= hi, got ({lo}, {hi})"
        )));
    }
    let planar = chain.is_planar_z();
    let samples: Vec<PoseSample> = crate::thread_pool().install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(seed, i);
                let radius = rng.random_range(lo..=hi) * chain.total_length();
                let (direction, orientation) = if planar {
                    let phi: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                    let yaw: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                    (
                        Vector3::new(phi.cos(), phi.sin(), 0.0),
                        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
                    )
                } else {
                    (sphere_direction(&mut rng), uniform_quaternion(&mut rng))
                };
                PoseSample {
                    config: None,
                    pose: Pose::new(direction * radius, orientation),
                }
            })
            .collect()
    });
    Ok(Dataset {
        chain: chain.name().to_string(),
        kind: DatasetKind::Unreachable,
        seed,
        samples,
    })
}

/// Uniform direction on the unit sphere (rejection from the cube).
fn sphere_direction(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        let n = v.norm();
        if n > 1e-6 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Uniform random rotation (uniform on the unit-quaternion 3-sphere).
fn uniform_quaternion(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    let u1: f64 = rng.random_range(0.0..1.0);
    let u2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let u3: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    UnitQuaternion::new_normalize(nalgebra::Quaternion::new(
        b * u3.cos(),
        a * u2.sin(),
        a * u2.cos(),
        b * u3.sin(),
    ))
}

/// Straight Cartesian line with constant-speed orientation interpolation
/// along the shorter arc; endpoints are exact. Errors when the endpoint
/// orientations are antipodal (the shorter arc is ambiguous).
pub fn make_line_trajectory(
    chain: &ChainSpec,
    start: &Pose,
    end: &Pose,
    waypoint_count: usize,
) -> Result<Dataset> {
    if waypoint_count < 2 {
        return Err(Error::InvalidOptions("a trajectory needs at least 2 waypoints".into()));
    }
    let qa = start.orientation();
    let mut qb = end.orientation().into_inner();
    let mut dot = qa.into_inner().dot(&qb);
    if dot < 0.0 {
        qb = -qb;
        dot = -dot;
    }
    if dot < 1e-9 {
        return Err(Error::AntipodalOrientations);
    }
    let qb = UnitQuaternion::new_unchecked(qb);

    let mut samples = Vec::with_capacity(waypoint_count);
    for k in 0..waypoint_count {
        let t = k as f64 / (waypoint_count - 1) as f64;
        let pose = if k == 0 {
            *start
        } else if k == waypoint_count - 1 {
            *end
        } else {
            let position = start.position * (1.0 - t) + end.position * t;
            let orientation = qa.slerp(&qb, t);
            Pose::new(position, orientation)
        };
        samples.push(PoseSample { config: None, pose });
    }
    Ok(Dataset {
        chain: chain.name().to_string(),
        kind: DatasetKind::Trajectory,
        seed: 0,
        samples,
    })
}

/// Renders the dataset in the CSV schema, with metadata as `#` comments
/// before the mandatory header. Floats use the shortest representation
/// that parses back to the same bits.
pub fn to_csv_string(dataset: &Dataset, dof: usize, extra_comments: &[String]) -> String {
    let mut out = String::new();
    out.push_str("# ikforge dataset\n");
    out.push_str(&format!("# chain {}\n", dataset.chain));
    out.push_str(&format!("# kind {}\n", dataset.kind));
    out.push_str(&format!("# seed {}\n", dataset.seed));
    for c in extra_comments {
        out.push_str(&format!("# {c}\n"));
    }
    for i in 1..=dof {
        out.push_str(&format!("q{i},"));
    }
    out.push_str("px,py,pz,qw,qx,qy,qz\n");
    for s in &dataset.samples {
        match &s.config {
            Some(c) => {
                for a in &c.angles {
                    out.push_str(&format!("{a:?},"));
                }
            }
            None => out.push_str(&",".repeat(dof)),
        }
        let p = s.pose.components();
        for (i, v) in p.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    out
}

/// Writes the dataset as CSV; see [`to_csv_string`].
pub fn write_csv(dataset: &Dataset, dof: usize, destination: &Path) -> Result<()> {
    write_csv_with_comments(dataset, dof, destination, &[])
}

/// As [`write_csv`] with extra `#` metadata lines (tool version, resolved
/// configuration, ...) embedded after the standard ones.
pub fn write_csv_with_comments(
    dataset: &Dataset,
    dof: usize,
    destination: &Path,
    extra_comments: &[String],
) -> Result<()> {
    fs::write(destination, to_csv_string(dataset, dof, extra_comments))?;
    Ok(())
}

/// Parses a dataset CSV against a chain, validating the column layout and
/// the chain name when the file declares one.
pub fn from_csv_str(text: &str, chain: &ChainSpec) -> Result<Dataset> {
    let dof = chain.dof();
    let mut kind = DatasetKind::Uniform;
    let mut seed = 0u64;
    let mut samples = Vec::new();
    let mut header_seen = false;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut it = comment.split_whitespace();
            match (it.next(), it.next()) {
                (Some("chain"), Some(name)) if name != chain.name() => {
                    return Err(Error::ChainMismatch {
                        expected: chain.name().to_string(),
                        found: name.to_string(),
                    });
                }
                (Some("kind"), Some(k)) => kind = k.parse()?,
                (Some("seed"), Some(s)) => {
                    seed = s.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        reason: format!("bad seed value `{s}`"),
                    })?;
                }
                _ => {}
            }
            continue;
        }
        if !header_seen {
            let expected: Vec<String> = (1..=dof)
                .map(|i| format!("q{i}"))
                .chain(["px", "py", "pz", "qw", "qx", "qy", "qz"].iter().map(|s| s.to_string()))
                .collect();
            let got: Vec<&str> = line.split(',').collect();
            if got.len() != expected.len() || got.iter().zip(&expected).any(|(g, e)| g != e) {
                return Err(Error::FileFormat {
                    kind: "dataset",
                    reason: format!(
                        "header does not match the {dof}-joint schema (line {line_no})"
                    ),
                });
            }
            header_seen = true;
            continue;
        }

        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != dof + 7 {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected {} cells, found {}", dof + 7, cells.len()),
            });
        }
        let q_cells = &cells[..dof];
        let config = if q_cells.iter().all(|c| c.is_empty()) {
            None
        } else if q_cells.iter().all(|c| !c.is_empty()) {
            let mut angles = Vec::with_capacity(dof);
            for c in q_cells {
                angles.push(parse_cell(line_no, c)?);
            }
            Some(JointConfig::new(angles))
        } else {
            return Err(Error::Parse {
                line: line_no,
                reason: "joint cells must be all present or all empty".into(),
            });
        };
        let mut pose_vals = [0.0; 7];
        for (v, c) in pose_vals.iter_mut().zip(&cells[dof..]) {
            *v = parse_cell(line_no, c)?;
        }
        let pose = Pose::from_components(
            [pose_vals[0], pose_vals[1], pose_vals[2]],
            [pose_vals[3], pose_vals[4], pose_vals[5], pose_vals[6]],
        )
        .map_err(|e| Error::Parse { line: line_no, reason: e.to_string() })?;
        samples.push(PoseSample { config, pose });
    }

    if !header_seen {
        return Err(Error::FileFormat { kind: "dataset", reason: "missing header row".into() });
    }
    Ok(Dataset { chain: chain.name().to_string(), kind, seed, samples })
}

/// Reads a dataset CSV from disk; see [`from_csv_str`].
pub fn read_csv(source: &Path, chain: &ChainSpec) -> Result<Dataset> {
    from_csv_str(&fs::read_to_string(source)?, chain)
}

fn parse_cell(line_no: usize, cell: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| Error::Parse {
        line: line_no,
        reason: format!("expected a number, found `{cell}`"),
    })
}
