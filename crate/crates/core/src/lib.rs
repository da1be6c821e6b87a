//! Abelian sandpile stabilization on finite windows of Z^d: toppling
//! procedures, the one-sided zero dynamics in one dimension, and cluster
//! statistics of toppled and occupied sites.
//!
//! Heights, topple counts and ledgers are exact `u64` integers. The
//! real-valued parts (measure parameters, large-deviation functions, tail
//! fits) are generic over [`Real`]; the aliases below fix them to `f64` or
//! `f32`.

pub mod lattice;
pub mod measures;
pub mod onesided;
pub mod percolation;
pub mod scalar;
pub mod schedulers;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;

pub use lattice::{
    toppling_matrix_entry, verify_evolution, HeightConfig, LatticeError, Site, ToppleField, ToppleMode, Window,
};
pub use measures::{HeightSampler, Measure, MeasureError, Seed};
pub use onesided::{
    interval_stats, raster_export, replay_events, run_one_sided, two_sided, IntervalTracker, OneSidedState,
    OneSidedTrace, TwoSided, ZeroEvent, ZeroEventKind,
};
pub use percolation::{
    bond_bound_check, decompose, extract_sets, fit_exponential, origin_cluster_size, region_grain_check, survival_tail,
    ClusterDecomposition, FitResult, PercolationError, SiteSet, TailEstimate,
};
pub use scalar::Real;
pub use schedulers::{
    abelian_check, run_nested, stabilize, NestedStep, ScheduleError, Scheduler, SchedulerKind, StabilizeOutcome,
    Status, DEFAULT_BUDGET,
};

pub type MeasureSpec = Measure<f64>;
pub type MeasureSpec32 = Measure<f32>;
pub type TailEstimate64 = TailEstimate<f64>;
pub type TailEstimate32 = TailEstimate<f32>;
pub type FitResult64 = FitResult<f64>;
pub type FitResult32 = FitResult<f32>;
