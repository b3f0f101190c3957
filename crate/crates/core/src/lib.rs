//! Worst-case traversal-time analysis for wormhole-switched,
//! priority-preemptive 2D-mesh networks-on-chip.
//!
//! The crate provides:
//! - the platform model with XY routing and contention-domain decomposition
//!   ([`platform`]),
//! - flows and flow-sets ([`flow`]),
//! - the classic and contention-domain-aware response-time analyses
//!   ([`analysis`], built on the scalar-generic formulas in [`timing`]),
//! - a cycle-accurate wormhole simulator used as a lower-bound witness
//!   ([`sim`]),
//! - randomized experiment generators and statistics ([`experiment`]),
//! - the line-oriented flow-set file format ([`format`]).

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod format;
pub mod platform;
pub mod scalar;
pub mod sim;
pub mod timing;

pub use analysis::{
    analyze_flowset, fixed_point_wctt, interference_term, AnalysisOptions, AnalysisResult,
    FlowReport, InterferenceTerm, JitterPolicy, JitterSource, Method, Wctt,
};
pub use error::{Error, Result};
pub use flow::{basic_latency, direct_interference_set, Flow, FlowId, FlowSet};
pub use platform::{decompose, xy_route, Link, Path, PathDecomposition, PlatformConfig, TileCoord};
pub use scalar::TimeScalar;
pub use timing::{solve_fixed_point, FixedPoint, Preemptor, TimingModel};

/// Durations in integer picoseconds, the unit of every analysis result.
pub type Picos = u64;

/// Timing model in integer picoseconds.
pub type PicosTiming = TimingModel<Picos>;
/// Timing model in floating-point nanoseconds.
pub type NanosTiming = TimingModel<f64>;
/// Timing model in exact rational nanoseconds.
pub type ExactTiming = TimingModel<num_rational::Ratio<i64>>;
