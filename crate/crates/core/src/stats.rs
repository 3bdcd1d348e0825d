//! Summary statistics, weighted moments, and intensity-weighted sampling.

use serde::{Deserialize, Serialize};

use crate::field::{ComplexField, Domain};
use crate::rng::RandomStream;
use crate::{Error, Result};

/// Mean/std/std-error summary of a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub std: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl SummaryStats {
    /// Summarize samples (sample std, n−1 denominator; std error of the mean).
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("no samples to summarize".into()));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let std = var.sqrt();
        Ok(Self { mean, std, std_error: std / n.sqrt(), n_samples: samples.len() })
    }

    /// Std error of the *std* estimate itself, ≈ std/√(2(n−1)); the right
    /// yardstick when the quantity under test is a width.
    pub fn std_error_of_std(&self) -> f64 {
        if self.n_samples < 2 {
            return f64::INFINITY;
        }
        self.std / (2.0 * (self.n_samples as f64 - 1.0)).sqrt()
    }
}

/// Weighted mean of `values` with nonnegative `weights`.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> Result<f64> {
    let (sum_w, sum_wv) = weighted_sums(values, weights)?;
    Ok(sum_wv / sum_w)
}

/// Weighted population std of `values` with nonnegative `weights`
/// (√(Σw(v−v̄)²/Σw)).
pub fn weighted_std(values: &[f64], weights: &[f64]) -> Result<f64> {
    let mean = weighted_mean(values, weights)?;
    let mut sum_w = 0.0;
    let mut sum_wd2 = 0.0;
    for (&v, &w) in values.iter().zip(weights) {
        let d = v - mean;
        sum_w += w;
        sum_wd2 += w * d * d;
    }
    Ok((sum_wd2 / sum_w).sqrt())
}

fn weighted_sums(values: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    if values.len() != weights.len() {
        return Err(Error::MismatchedGrids(format!(
            "{} values vs {} weights",
            values.len(),
            weights.len()
        )));
    }
    if values.is_empty() {
        return Err(Error::EmptyInput("weighted moment of empty input".into()));
    }
    let mut sum_w = 0.0;
    let mut sum_wv = 0.0;
    for (&v, &w) in values.iter().zip(weights) {
        if w < 0.0 || !w.is_finite() {
            return Err(Error::InvalidParameter(format!("weight {w} is not finite nonnegative")));
        }
        sum_w += w;
        sum_wv += w * v;
    }
    if sum_w <= 0.0 {
        return Err(Error::DegenerateWeights("all weights are zero".into()));
    }
    Ok((sum_w, sum_wv))
}

/// Draw `n` detection times from a time-domain field's intensity profile.
///
/// Samples land on bin centers (inverse-CDF over bin masses); the grid rule
/// (spacing ≪ feature width) makes the discretization bias negligible next to
/// Monte Carlo error. Fails on frequency-domain input or an all-zero field.
pub fn sample_from_intensity(
    field: &ComplexField,
    n: usize,
    stream: &RandomStream,
) -> Result<Vec<f64>> {
    if field.domain() != Domain::Time {
        return Err(Error::DomainMismatch("sample_from_intensity needs a time-domain field".into()));
    }
    let intensity = field.intensity();
    let total: f64 = intensity.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights("field has zero total intensity".into()));
    }
    let mut cdf = Vec::with_capacity(intensity.len());
    let mut acc = 0.0;
    for w in &intensity {
        acc += w;
        cdf.push(acc);
    }
    let mut rng = stream.rng();
    let grid = field.grid();
    Ok((0..n)
        .map(|_| {
            let u: f64 = rand::Rng::random::<f64>(&mut rng) * total;
            let idx = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
            grid.time(idx)
        })
        .collect())
}

/// Sample detection times from a raw intensity profile over given bin
/// coordinates (same sampling rule as [`sample_from_intensity`]).
pub fn sample_from_profile(
    coords: &[f64],
    intensity: &[f64],
    n: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<f64>> {
    if coords.len() != intensity.len() {
        return Err(Error::MismatchedGrids(format!(
            "{} coords vs {} intensities",
            coords.len(),
            intensity.len()
        )));
    }
    let total: f64 = intensity.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights("profile has zero total intensity".into()));
    }
    let mut cdf = Vec::with_capacity(intensity.len());
    let mut acc = 0.0;
    for w in intensity {
        acc += w;
        cdf.push(acc);
    }
    Ok((0..n)
        .map(|_| {
            let u: f64 = rand::Rng::random::<f64>(rng) * total;
            let idx = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
            coords[idx]
        })
        .collect())
}
