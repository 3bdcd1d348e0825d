//! Complex field samples on a grid, the Fourier transforms between the two
//! domains, and quadratic-dispersion spectral phases.
//!
//! Transform convention: the symmetric-normalization physics pair
//!
//! ```text
//! f(t_j) = (dω/√2π) Σ_k F(ω_k) e^{−i ω_k t_j}
//! F(ω_k) = (dt/√2π) Σ_j f(t_j) e^{+i ω_k t_j}
//! ```
//!
//! so a spectral component evolves as e^{−iωt}, positive group delay moves a
//! pulse to later times, and Σ|v|²·spacing (the "power") is conserved exactly
//! between domains. Time-domain samples therefore carry the absolute carrier
//! phase e^{−i·center·t}; intensities never see it.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::grid::FrequencyGrid;
use crate::{Error, Result, ALIASING_EDGE_RATIO};

/// Which domain a [`ComplexField`]'s samples live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Frequency,
    Time,
}

/// Sign of the linear (group-delay) term in a dispersive phase.
///
/// A medium's phase on a beam at detuning ε from the carrier is
/// `(±α·ε + β·ε²)·L`; the sign selects which branch a given beam sees when
/// both beams of an anti-correlated pair are written in one beam's detuning
/// variable. In a beam's *own* detuning variable the sign is `Plus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlphaSign {
    Plus,
    Minus,
}

impl AlphaSign {
    fn factor(self) -> f64 {
        match self {
            AlphaSign::Plus => 1.0,
            AlphaSign::Minus => -1.0,
        }
    }
}

/// A transparent medium with phase `k(ε)·L = (α·ε + β·ε²)·L` at detuning ε.
///
/// `alpha` is the inverse group velocity (relative to the carrier), `beta`
/// the quadratic dispersion coefficient. A medium with `length == 0` is the
/// identity on any field, bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersiveMedium {
    pub alpha: f64,
    pub beta: f64,
    pub length: f64,
}

impl DispersiveMedium {
    pub fn new(alpha: f64, beta: f64, length: f64) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() || !length.is_finite() || length < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "medium parameters must be finite with length >= 0 \
                 (alpha={alpha}, beta={beta}, length={length})"
            )));
        }
        Ok(Self { alpha, beta, length })
    }

    /// A zero-length medium (identity).
    pub fn vacuum() -> Self {
        Self { alpha: 0.0, beta: 0.0, length: 0.0 }
    }

    /// Accumulated phase at detuning `eps`, with `sign` selecting ±α.
    pub fn phase(&self, eps: f64, sign: AlphaSign) -> f64 {
        (sign.factor() * self.alpha * eps + self.beta * eps * eps) * self.length
    }

    /// Group-delay dispersion `β·L`.
    pub fn gdd(&self) -> f64 {
        self.beta * self.length
    }
}

/// Complex field samples over a [`FrequencyGrid`], tagged with their domain.
/// Immutable after construction; operations return new fields.
#[derive(Debug, Clone)]
pub struct ComplexField {
    grid: FrequencyGrid,
    domain: Domain,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: FrequencyGrid, domain: Domain, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::MismatchedGrids(format!(
                "value count {} != grid points {}",
                values.len(),
                grid.n_points()
            )));
        }
        Ok(Self { grid, domain, values })
    }

    /// Build a frequency-domain field from a function of detuning from the
    /// grid center.
    pub fn from_detuning_fn(grid: FrequencyGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let values = (0..grid.n_points()).map(|i| f(grid.detuning(i))).collect();
        Self { grid, domain: Domain::Frequency, values }
    }

    /// Build a time-domain field from a function of time.
    pub fn from_time_fn(grid: FrequencyGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let values = (0..grid.n_points()).map(|i| f(grid.time(i))).collect();
        Self { grid, domain: Domain::Time, values }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// |v|² per bin.
    pub fn intensity(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// Σ|v|²·spacing, using the spacing of the current domain.
    pub fn power(&self) -> f64 {
        let spacing = match self.domain {
            Domain::Frequency => self.grid.spacing(),
            Domain::Time => self.grid.time_spacing(),
        };
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * spacing
    }

    /// Largest |v| over all bins.
    pub fn peak_amplitude(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// max(|v[0]|, |v[n−1]|) / max|v|; zero for an all-zero field.
    pub fn edge_amplitude_ratio(&self) -> f64 {
        let peak = self.peak_amplitude();
        if peak == 0.0 {
            return 0.0;
        }
        let n = self.values.len();
        self.values[0].norm().max(self.values[n - 1].norm()) / peak
    }

    /// Fail if the field touches its grid boundary (see [`ALIASING_EDGE_RATIO`]).
    pub fn check_edges(&self) -> Result<()> {
        let ratio = self.edge_amplitude_ratio();
        if ratio > ALIASING_EDGE_RATIO {
            return Err(Error::AliasingGuard(format!(
                "edge amplitude is {ratio:.2e} of peak (limit {ALIASING_EDGE_RATIO:.0e})"
            )));
        }
        Ok(())
    }

    /// Transform a frequency-domain field to the time domain.
    pub fn to_time_domain(&self) -> Result<ComplexField> {
        if self.domain != Domain::Frequency {
            return Err(Error::DomainMismatch(
                "to_time_domain needs a frequency-domain field".into(),
            ));
        }
        let mut values = self.values.clone();
        time_transform_in_place(&mut values, &self.grid);
        Ok(ComplexField { grid: self.grid, domain: Domain::Time, values })
    }

    /// Transform a time-domain field to the frequency domain.
    pub fn to_freq_domain(&self) -> Result<ComplexField> {
        if self.domain != Domain::Time {
            return Err(Error::DomainMismatch(
                "to_freq_domain needs a time-domain field".into(),
            ));
        }
        let mut values = self.values.clone();
        freq_transform_in_place(&mut values, &self.grid);
        Ok(ComplexField { grid: self.grid, domain: Domain::Frequency, values })
    }

    /// Multiply each frequency bin by `exp(i·(±α·ε + β·ε²)·L)` where ε is the
    /// detuning from the grid center.
    ///
    /// Phase-only: never changes any |value|. A zero-length medium returns the
    /// field unchanged, bit for bit.
    pub fn apply_spectral_phase(
        &self,
        medium: &DispersiveMedium,
        sign: AlphaSign,
    ) -> Result<ComplexField> {
        if self.domain != Domain::Frequency {
            return Err(Error::DomainMismatch(
                "apply_spectral_phase needs a frequency-domain field".into(),
            ));
        }
        if medium.length == 0.0 {
            return Ok(self.clone());
        }
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v * Complex64::cis(medium.phase(self.grid.detuning(i), sign)))
            .collect();
        Ok(ComplexField { grid: self.grid, domain: Domain::Frequency, values })
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Planned FFT for `n` points in `direction` (cached per thread).
pub(crate) fn plan_fft(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(n, direction))
}

/// In-place frequency → time transform of one row of samples on `grid`.
///
/// Implements `f_j = (dω/√2π) Σ_k F_k e^{−iω_k t_j}` via a radix FFT by
/// splitting the kernel into a carrier factor, alternating signs, and the
/// bare DFT (exact for n ≡ 0 mod 4, which the grid guarantees).
pub(crate) fn time_transform_in_place(values: &mut [Complex64], grid: &FrequencyGrid) {
    let n = grid.n_points();
    debug_assert_eq!(values.len(), n);
    debug_assert_eq!(n % 4, 0);
    for (k, v) in values.iter_mut().enumerate() {
        if k % 2 == 1 {
            *v = -*v;
        }
    }
    plan_fft(n, FftDirection::Forward).process(values);
    let scale = grid.spacing() / (std::f64::consts::TAU).sqrt();
    let center = grid.center();
    for (j, v) in values.iter_mut().enumerate() {
        let sign = if j % 2 == 1 { -scale } else { scale };
        *v *= sign * Complex64::cis(-center * grid.time(j));
    }
}

/// In-place time → frequency transform; exact inverse of
/// [`time_transform_in_place`] up to rounding.
pub(crate) fn freq_transform_in_place(values: &mut [Complex64], grid: &FrequencyGrid) {
    let n = grid.n_points();
    debug_assert_eq!(values.len(), n);
    debug_assert_eq!(n % 4, 0);
    let center = grid.center();
    for (j, v) in values.iter_mut().enumerate() {
        let sign = if j % 2 == 1 { -1.0 } else { 1.0 };
        *v *= sign * Complex64::cis(center * grid.time(j));
    }
    plan_fft(n, FftDirection::Inverse).process(values);
    let scale = grid.time_spacing() / (std::f64::consts::TAU).sqrt();
    for (k, v) in values.iter_mut().enumerate() {
        *v *= if k % 2 == 1 { -scale } else { scale };
    }
}
