//! Side-by-side quantum and classical-field simulations of three energy-time
//! correlation experiments: nonlocal dispersion cancellation, nonlocal phase
//! modulation, and two-photon (unbalanced Mach-Zehnder pair) interferometry.
//!
//! Each experiment module pairs an entangled-pair calculation with its best
//! classical counterpart — anti-correlated pulse trains, chaotic (thermal)
//! light, or anti-correlated waves with random phases — so the two can be
//! compared metric by metric.
//!
//! # Units and conventions
//!
//! Everything is dimensionless with c = 1: angular frequency and time are
//! reciprocal, a dispersive medium's quadratic coefficient `beta` carries
//! units of time²/length, and lengths are whatever unit makes `beta * length`
//! the group-delay-dispersion you want. No physical constants appear anywhere.
//!
//! Gaussian width conventions (fixed here once; every closed form in the crate
//! is stated in these terms):
//!
//! * `sigma_f` — 1/e half-width of the *joint spectral amplitude*:
//!   psi(eps) ∝ exp(−eps²/sigma_f²). The single-photon marginal intensity
//!   spectrum then has std sigma_f/2, and the two-photon detection-time
//!   difference at zero dispersion has std 1/sigma_f.
//! * `sigma_p` — std of a classical pulse's *spectral amplitude*:
//!   e(eps) ∝ exp(−eps²/2·sigma_p²); its transform-limited temporal intensity
//!   std is 1/(√2·sigma_p).
//! * `sigma_d` — std of the classical source's center-frequency jitter.
//!
//! Fourier transforms use the symmetric-normalization physics convention
//! (time kernel e^{−iωt}); "power" (Σ|v|²·spacing) is conserved exactly by
//! construction. See [`field`].
//!
//! # Determinism
//!
//! Every Monte Carlo operation takes a [`rng::RandomStream`] and derives one
//! counter-based substream per trial, then reduces over an ordered buffer, so
//! results are bit-identical for a fixed seed regardless of thread count.

pub mod chaotic;
pub mod dispersion;
pub mod field;
pub mod grid;
pub mod interferometer;
pub mod modulation;
pub mod rng;
pub mod stats;

pub use field::{AlphaSign, ComplexField, DispersiveMedium, Domain};
pub use grid::FrequencyGrid;
pub use rng::RandomStream;
pub use stats::SummaryStats;

/// Relative amplitude above which a field is considered to touch its grid
/// boundary: operations on pulse-like fields fail loudly when the edge-bin
/// amplitude exceeds this fraction of the peak, since wrap-around would then
/// contaminate the statistics.
pub const ALIASING_EDGE_RATIO: f64 = 1e-6;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An operation got a field in the wrong domain (time vs frequency).
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    /// Two fields that must share a grid don't.
    #[error("mismatched grids: {0}")]
    MismatchedGrids(String),

    /// A weight vector was all zero (or summed to zero).
    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    /// Field amplitude at the grid edge exceeds `ALIASING_EDGE_RATIO` of the
    /// peak; results would be corrupted by wrap-around.
    #[error("aliasing guard tripped: {0}; increase the grid span/duration")]
    AliasingGuard(String),

    /// The grid cannot represent the requested configuration.
    #[error("grid too small: {0}; increase the grid span/duration or point count")]
    GridTooSmall(String),

    /// A parameter value is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The configuration is valid input but outside what the operation
    /// supports (e.g. closed forms that require equal medium lengths).
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    /// A truncated series did not reach the required tail bound.
    #[error("truncation error: {0}")]
    Truncation(String),

    /// An operation that needs data got an empty input.
    #[error("empty input: {0}")]
    EmptyInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
