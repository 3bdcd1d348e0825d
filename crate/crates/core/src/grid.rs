//! Uniform frequency grid and its conjugate time grid.
//!
//! A grid is defined by a point count (power of two), a center frequency, and
//! a span. The conjugate time grid is fixed by the discrete Fourier relations
//! `dt = 2π/span` and `duration = 2π/dω`, with both grids centered (frequency
//! on `center`, time on zero).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform frequency grid; carries its conjugate time grid implicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    n_points: usize,
    center: f64,
    span: f64,
}

impl FrequencyGrid {
    /// Minimum number of points a grid may have.
    pub const MIN_POINTS: usize = 64;

    /// A grid of `n_points` frequencies covering `center ± span/2`.
    ///
    /// `n_points` must be a power of two and at least [`Self::MIN_POINTS`];
    /// `span` must be positive and finite.
    pub fn new(n_points: usize, center: f64, span: f64) -> Result<Self> {
        if !n_points.is_power_of_two() || n_points < Self::MIN_POINTS {
            return Err(Error::InvalidParameter(format!(
                "grid n_points must be a power of two >= {}, got {n_points}",
                Self::MIN_POINTS
            )));
        }
        if span <= 0.0 || !span.is_finite() || !center.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid span must be positive and finite (span={span}, center={center})"
            )));
        }
        Ok(Self { n_points, center, span })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    /// Frequency-bin spacing.
    pub fn spacing(&self) -> f64 {
        self.span / self.n_points as f64
    }

    /// Conjugate time-bin spacing, `2π/span`.
    pub fn time_spacing(&self) -> f64 {
        std::f64::consts::TAU / self.span
    }

    /// Total duration of the conjugate time grid, `2π/dω`.
    pub fn duration(&self) -> f64 {
        self.n_points as f64 * self.time_spacing()
    }

    /// Frequency of bin `i` (bins run `center − span/2 .. center + span/2`).
    pub fn omega(&self, i: usize) -> f64 {
        self.center + self.detuning(i)
    }

    /// Frequency of bin `i` measured from the grid center.
    pub fn detuning(&self, i: usize) -> f64 {
        (i as f64 - (self.n_points / 2) as f64) * self.spacing()
    }

    /// Time of bin `i` on the conjugate grid (centered on zero).
    pub fn time(&self, i: usize) -> f64 {
        (i as f64 - (self.n_points / 2) as f64) * self.time_spacing()
    }

    /// All bin frequencies.
    pub fn omegas(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.omega(i)).collect()
    }

    /// All bin detunings from center.
    pub fn detunings(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.detuning(i)).collect()
    }

    /// All conjugate time-bin values.
    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.time(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_bad_point_counts() {
        assert!(FrequencyGrid::new(63, 0.0, 1.0).is_err());
        assert!(FrequencyGrid::new(100, 0.0, 1.0).is_err());
        assert!(FrequencyGrid::new(32, 0.0, 1.0).is_err());
        assert!(FrequencyGrid::new(64, 0.0, 1.0).is_ok());
    }

    #[test]
    fn rejects_bad_span() {
        assert!(FrequencyGrid::new(64, 0.0, 0.0).is_err());
        assert!(FrequencyGrid::new(64, 0.0, -1.0).is_err());
        assert!(FrequencyGrid::new(64, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn conjugate_relations() {
        let g = FrequencyGrid::new(256, 5.0, 16.0).unwrap();
        assert_relative_eq!(g.spacing(), 16.0 / 256.0);
        assert_relative_eq!(g.time_spacing(), std::f64::consts::TAU / 16.0);
        assert_relative_eq!(g.duration(), std::f64::consts::TAU / g.spacing());
        // Centered grids: bin n/2 sits exactly at the center / at t = 0.
        assert_eq!(g.omega(128), 5.0);
        assert_eq!(g.time(128), 0.0);
        assert_relative_eq!(g.omega(0), 5.0 - 8.0);
        assert_relative_eq!(g.detuning(255), 8.0 - g.spacing());
    }
}
