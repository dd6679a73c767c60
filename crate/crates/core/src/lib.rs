//! Coincidence visibility, QBER and secret key rate of BBM92 key
//! distribution over a chain of entanglement-swapping stations fed by
//! parametric down-conversion sources.
//!
//! Every numerical routine is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases at the crate root fix the scalar to `f64`.

pub mod amplitude;
mod bfgs;
pub mod coincidence;
pub mod combinatorics;
pub mod error;
pub mod optimizer;
pub mod oracle;
pub mod rates;
pub mod resources;
pub mod scalar;

pub use amplitude::{amplitude, enumerate_patterns, omega, AnalyzerAngles, PhotonPattern};
pub use coincidence::{
    coincidence_prob, qber, visibility, ChainDetectors, ClickOutcome, CountingMode, VisibilityResult,
};
pub use error::{Error, Result};
pub use optimizer::{
    crossing_point, find_lmax, maximize_rate, scan_qber_vs_chi, scan_rate_vs_distance, DetectorPolicy, OptimizerConfig,
    OptimumRecord,
};
pub use rates::{
    ideal_rate, qber_cutoff, secret_key_rate, shannon_entropy, shor_preskill, sifted_rate, tgw_bound, RateBreakdown,
};
pub use resources::{dark_for_eta, effective_efficiency, DetectorModel, ResourceParams, Topology};
pub use scalar::Real;

pub type ResourceParams64 = ResourceParams<f64>;
pub type Topology64 = Topology<f64>;
pub type DetectorModel64 = DetectorModel<f64>;
pub type AnalyzerAngles64 = AnalyzerAngles<f64>;
pub type VisibilityResult64 = VisibilityResult<f64>;
pub type ChainDetectors64 = ChainDetectors<f64>;
pub type RateBreakdown64 = RateBreakdown<f64>;
