//! Inverse kinematics for serial revolute chains.
//!
//! The crate models chains of revolute joints ([`chain`]), defines the pose
//! error metrics and joint-limit penalty shared by every solver ([`metrics`]),
//! and provides three ways to invert the forward map: closed-form solutions
//! for the shipped planar and wrist-partitioned arms ([`analytical`]), a
//! restarting first-order solver in the TRAC-IK mould ([`numerical`]), and a
//! distal-teaching multilayer perceptron trained against the forward model
//! ([`distal`]). [`datasets`] generates the reachable / singular /
//! unreachable target sets used to compare them and [`bench`] runs the
//! comparison and writes report tables.

pub mod analytical;
pub mod bench;
pub mod chain;
pub mod datasets;
pub mod distal;
pub mod error;
pub mod metrics;
pub mod numerical;
pub mod transform;

pub use chain::{builtin_chain, builtin_names, parse_chain_spec, ChainSpec, JointConfig, JointSpec};
pub use error::Error;
pub use transform::{Pose, Transform};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Number of worker threads to use for data-parallel work: the
/// `IKFORGE_THREADS` environment variable when set to a positive integer,
/// otherwise the number of available CPUs.
pub fn thread_count() -> usize {
    std::env::var("IKFORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
}

/// The shared rayon thread pool sized by [`thread_count`], built on first
/// use (so `IKFORGE_THREADS` is read once per process).
pub(crate) fn thread_pool() -> &'static rayon::ThreadPool {
    static POOL: std::sync::OnceLock<rayon::ThreadPool> = std::sync::OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(thread_count())
            .build()
            .expect("thread pool construction cannot fail with a positive thread count")
    })
}
