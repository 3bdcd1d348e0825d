//! Nonlocal dispersion cancellation: entangled photon pairs versus
//! anti-correlated classical pulse trains.
//!
//! An energy-time entangled pair produced by a narrow pump has joint spectral
//! amplitude concentrated on the anti-diagonal ω₁ + ω₂ = 2ω₀. Sending the
//! photons through remote media with quadratic dispersion β₁ and β₂ broadens
//! the detection-time difference to
//!
//! ```text
//! σ_T² = 1/σ_F² + (β₁+β₂)² L² σ_F²          (equal lengths L)
//! ```
//!
//! so media with β₂ = −β₁ cancel *nonlocally* and σ_T stays 1/σ_F. The best
//! classical imitation — pairs of transform-limited pulses at anti-correlated
//! center frequencies ω₀ ± δω — has a per-arm timing spread of
//!
//! ```text
//! σ_C² = 1/(2σ_p²) + (β₁²+β₂²) L² σ_p²
//! ```
//!
//! in which the dispersions add *in quadrature*: no choice of media cancels
//! it, and making the source broadband (large σ_d) does not help because each
//! pulse still carries σ_p. Width conventions are fixed in the crate docs:
//! σ_F is the 1/e half-width of the joint spectral amplitude, σ_p the std of
//! a single pulse's spectral amplitude, and σ_C is estimated from pulse pairs
//! as std((t₁−t₂)/√2), the per-arm-equivalent spread.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{self, AlphaSign, DispersiveMedium};
use crate::grid::FrequencyGrid;
use crate::rng::RandomStream;
use crate::stats::{self, SummaryStats};
use crate::{Error, Result, ALIASING_EDGE_RATIO};

/// Entangled-pair source description: degenerate center frequency, joint
/// amplitude 1/e half-width `sigma_f`, pump amplitude 1/e half-width
/// `sigma_pump` (0 = ideal CW pump), and the product grid for the two
/// photons' frequency axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiphotonState {
    pub omega0: f64,
    pub sigma_f: f64,
    pub sigma_pump: f64,
    pub grid1: FrequencyGrid,
    pub grid2: FrequencyGrid,
}

impl BiphotonState {
    pub fn new(
        omega0: f64,
        sigma_f: f64,
        sigma_pump: f64,
        grid1: FrequencyGrid,
        grid2: FrequencyGrid,
    ) -> Result<Self> {
        if sigma_f <= 0.0 || !sigma_f.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma_f must be > 0, got {sigma_f}")));
        }
        if sigma_pump < 0.0 || !sigma_pump.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma_pump must be >= 0, got {sigma_pump}"
            )));
        }
        if grid1 != grid2 || grid1.center() != omega0 {
            return Err(Error::MismatchedGrids(
                "biphoton grids must be identical and centered on omega0".into(),
            ));
        }
        Ok(Self { omega0, sigma_f, sigma_pump, grid1, grid2 })
    }

    /// True when the pump is too broad for the narrow-pump closed forms to be
    /// trustworthy (σ_pump > σ_F/10). Construction succeeds; callers should
    /// surface this.
    pub fn pump_bandwidth_warning(&self) -> bool {
        self.sigma_pump > self.sigma_f / 10.0
    }
}

/// Grid sized for a biphoton of bandwidth `sigma_f` traversing `media`:
/// span ≥ 16·σ_F, duration ≥ 32× the largest dispersed difference-time width
/// and long enough to hold the pump-sum envelope when `sigma_pump > 0`.
pub fn suggested_biphoton_grid(
    omega0: f64,
    sigma_f: f64,
    sigma_pump: f64,
    media: &[(DispersiveMedium, DispersiveMedium)],
) -> Result<FrequencyGrid> {
    let span = 16.0 * sigma_f;
    let mut max_width = 1.0 / sigma_f;
    for (m1, m2) in media {
        let b = m1.gdd() + m2.gdd();
        let w = (1.0 / (sigma_f * sigma_f) + b * b * sigma_f * sigma_f).sqrt();
        max_width = max_width.max(w);
    }
    let mut duration = 32.0 * max_width;
    if sigma_pump > 0.0 {
        duration = duration.max(PUMP_DURATION_FACTOR / sigma_pump);
    }
    let n = ((duration * span / std::f64::consts::TAU).ceil() as usize)
        .next_power_of_two()
        .max(512);
    if n > 8192 {
        return Err(Error::GridTooSmall(format!(
            "configuration needs {n} points per axis (> 8192): span {span:.3}, \
             duration {duration:.3}"
        )));
    }
    FrequencyGrid::new(n, omega0, span)
}

/// σ_pump·duration needed so the pump-sum time envelope decays to the edge
/// ratio at the window boundary: exp(−(σ_pump·D/2)²/4) ≤ 1e−6.
const PUMP_DURATION_FACTOR: f64 = 14.9;

/// Joint spectral amplitude of a photon pair on a product grid, row-major
/// over (ω₁ bin, ω₂ bin). Normalized to unit total probability.
#[derive(Debug, Clone)]
pub struct JointSpectralAmplitude {
    grid1: FrequencyGrid,
    grid2: FrequencyGrid,
    values: Vec<Complex64>,
}

impl JointSpectralAmplitude {
    pub fn grid1(&self) -> &FrequencyGrid {
        &self.grid1
    }

    pub fn grid2(&self) -> &FrequencyGrid {
        &self.grid2
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    fn value(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.grid2.n_points() + j]
    }

    /// Intensity marginal of photon 1 (summed over ω₂), one entry per ω₁ bin.
    pub fn marginal1(&self) -> Vec<f64> {
        let (n1, n2) = (self.grid1.n_points(), self.grid2.n_points());
        let mut out = vec![0.0; n1];
        for (i, o) in out.iter_mut().enumerate() {
            for j in 0..n2 {
                *o += self.value(i, j).norm_sqr();
            }
        }
        out
    }

    /// Total probability mass off the exact anti-diagonal (bins where
    /// ω₁ + ω₂ ≠ 2ω₀).
    pub fn off_antidiagonal_mass(&self) -> f64 {
        let (n1, n2) = (self.grid1.n_points(), self.grid2.n_points());
        let mut mass = 0.0;
        for i in 0..n1 {
            for j in 0..n2 {
                if i + j != n1 {
                    mass += self.value(i, j).norm_sqr();
                }
            }
        }
        mass
    }

    /// (Var ω₁, Var ω₂, Cov(ω₁, ω₂)) under the joint intensity |ψ|².
    pub fn frequency_covariance(&self) -> (f64, f64, f64) {
        let (n1, n2) = (self.grid1.n_points(), self.grid2.n_points());
        let (mut w, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for i in 0..n1 {
            for j in 0..n2 {
                let p = self.value(i, j).norm_sqr();
                w += p;
                s1 += p * self.grid1.omega(i);
                s2 += p * self.grid2.omega(j);
            }
        }
        let (m1, m2) = (s1 / w, s2 / w);
        let (mut v1, mut v2, mut cov) = (0.0, 0.0, 0.0);
        for i in 0..n1 {
            for j in 0..n2 {
                let p = self.value(i, j).norm_sqr();
                let d1 = self.grid1.omega(i) - m1;
                let d2 = self.grid2.omega(j) - m2;
                v1 += p * d1 * d1;
                v2 += p * d2 * d2;
                cov += p * d1 * d2;
            }
        }
        (v1 / w, v2 / w, cov / w)
    }

    fn check_frequency_edges(&self) -> Result<()> {
        let (n1, n2) = (self.grid1.n_points(), self.grid2.n_points());
        let peak = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            return Err(Error::DegenerateWeights("joint amplitude is identically zero".into()));
        }
        let mut edge = 0.0f64;
        for j in 0..n2 {
            edge = edge.max(self.value(0, j).norm()).max(self.value(n1 - 1, j).norm());
        }
        for i in 0..n1 {
            edge = edge.max(self.value(i, 0).norm()).max(self.value(i, n2 - 1).norm());
        }
        if edge / peak > ALIASING_EDGE_RATIO {
            return Err(Error::AliasingGuard(format!(
                "joint spectrum touches the grid boundary ({:.2e} of peak)",
                edge / peak
            )));
        }
        Ok(())
    }
}

/// Build the joint spectral amplitude
/// `ψ(ω₁,ω₂) ∝ exp(−(ω₁−ω₀)²/σ_F²)·exp(−(ω₁+ω₂−2ω₀)²/σ_pump²)`.
///
/// With `sigma_pump == 0` the support is exactly the anti-diagonal bins
/// (ω₁ + ω₂ = 2ω₀); the sum coordinate is then perfectly correlated and the
/// pair is stationary in the mean detection time.
pub fn make_biphoton(state: &BiphotonState) -> Result<JointSpectralAmplitude> {
    let grid = state.grid1;
    let n = grid.n_points();
    let mut values = vec![Complex64::ZERO; n * n];
    if state.sigma_pump == 0.0 {
        // Anti-diagonal bins: detuning of bin j is −detuning of bin n−j.
        for i in 1..n {
            let eps = grid.detuning(i);
            let amp = (-eps * eps / (state.sigma_f * state.sigma_f)).exp();
            values[i * n + (n - i)] = Complex64::new(amp, 0.0);
        }
    } else {
        if state.sigma_pump * grid.duration() < PUMP_DURATION_FACTOR {
            return Err(Error::GridTooSmall(format!(
                "pump width {} needs duration >= {:.1} (grid has {:.1})",
                state.sigma_pump,
                PUMP_DURATION_FACTOR / state.sigma_pump,
                grid.duration()
            )));
        }
        let sf2 = state.sigma_f * state.sigma_f;
        let sp2 = state.sigma_pump * state.sigma_pump;
        for i in 0..n {
            let e1 = grid.detuning(i);
            let filter = -e1 * e1 / sf2;
            for j in 0..n {
                let s = e1 + grid.detuning(j);
                let amp = (filter - s * s / sp2).exp();
                values[i * n + j] = Complex64::new(amp, 0.0);
            }
        }
    }
    let norm: f64 = values.iter().map(|v| v.norm_sqr()).sum();
    if norm <= 0.0 {
        return Err(Error::DegenerateWeights("joint amplitude is identically zero".into()));
    }
    let scale = 1.0 / norm.sqrt();
    for v in &mut values {
        *v *= scale;
    }
    let jsa = JointSpectralAmplitude { grid1: state.grid1, grid2: state.grid2, values };
    jsa.check_frequency_edges()?;
    Ok(jsa)
}

/// Apply each medium's spectral phase to its photon, in that photon's own
/// detuning variable (both arms see `+α·ε + β·ε²` in their own ε; writing
/// arm 2 in arm 1's detuning flips its α sign). Phase-only: |ψ|² per bin is
/// unchanged. Zero-length media leave bits untouched.
pub fn propagate_biphoton(
    jsa: &JointSpectralAmplitude,
    m1: &DispersiveMedium,
    m2: &DispersiveMedium,
) -> Result<JointSpectralAmplitude> {
    let (n1, n2) = (jsa.grid1.n_points(), jsa.grid2.n_points());
    let phase1: Vec<Complex64> = (0..n1)
        .map(|i| {
            if m1.length == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::cis(m1.phase(jsa.grid1.detuning(i), AlphaSign::Plus))
            }
        })
        .collect();
    let phase2: Vec<Complex64> = (0..n2)
        .map(|j| {
            if m2.length == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::cis(m2.phase(jsa.grid2.detuning(j), AlphaSign::Plus))
            }
        })
        .collect();
    if m1.length == 0.0 && m2.length == 0.0 {
        return Ok(jsa.clone());
    }
    let mut values = jsa.values.clone();
    for i in 0..n1 {
        let p1 = phase1[i];
        for j in 0..n2 {
            values[i * n2 + j] *= p1 * phase2[j];
        }
    }
    Ok(JointSpectralAmplitude { grid1: jsa.grid1, grid2: jsa.grid2, values })
}

/// Detection-time-difference statistics of a photon pair.
///
/// Transforms the joint amplitude to the two-photon time domain, folds the
/// |A(t₁,t₂)|² weights onto the periodic difference coordinate τ = t₁ − t₂,
/// and returns the intensity-weighted mean and std of τ. `std_error` is 0
/// (deterministic integral); `n_samples` counts grid bins.
///
/// Fails with an aliasing guard if weight at the fold boundary |τ| ≈
/// duration/2 exceeds the edge ratio (the dispersed correlation no longer
/// fits the window).
pub fn timing_difference_quantum(jsa: &JointSpectralAmplitude) -> Result<SummaryStats> {
    Ok(timing_difference_distribution(jsa)?.stats)
}

/// Distribution of the detection-time difference t₁ − t₂ on the folded
/// periodic axis: the full weight profile behind
/// [`timing_difference_quantum`], normalized to unit sum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingDistribution {
    pub taus: Vec<f64>,
    pub weights: Vec<f64>,
    pub stats: SummaryStats,
}

/// Transform the joint spectral amplitude to the time domain and fold |A|²
/// onto the difference coordinate, keeping the whole profile.
pub fn timing_difference_distribution(jsa: &JointSpectralAmplitude) -> Result<TimingDistribution> {
    let n = jsa.grid1.n_points();
    let n2 = jsa.grid2.n_points();
    let mut values = jsa.values.clone();

    // Rows: ω₂ → t₂ for each fixed ω₁ bin.
    for row in values.chunks_exact_mut(n2) {
        field::time_transform_in_place(row, &jsa.grid2);
    }
    // Columns: ω₁ → t₁ for each fixed t₂ bin.
    let mut col = vec![Complex64::ZERO; n];
    for j in 0..n2 {
        for i in 0..n {
            col[i] = values[i * n2 + j];
        }
        field::time_transform_in_place(&mut col, &jsa.grid1);
        for i in 0..n {
            values[i * n2 + j] = col[i];
        }
    }

    // Fold |A|² onto the periodic difference coordinate. Bin (i, j) has
    // τ = (i−j)·dt; diagonals d and d∓n describe the same physical τ and
    // together always contain n bins, so the folded marginal needs no
    // per-diagonal renormalization (for a CW pair it is exactly uniform in
    // the sum time; for a pulsed pump the envelope is localized anyway).
    let dt = jsa.grid1.time_spacing();
    let half = n as i64 / 2;
    let mut weight = vec![0.0f64; n];
    let mut peak_bin = vec![0.0f64; n];
    for i in 0..n {
        for j in 0..n2 {
            let mut d = i as i64 - j as i64;
            if d < -half {
                d += n as i64;
            } else if d >= half {
                d -= n as i64;
            }
            let idx = (d + half) as usize;
            let w = values[i * n2 + j].norm_sqr();
            weight[idx] += w;
            if w > peak_bin[idx] {
                peak_bin[idx] = w;
            }
        }
    }

    let global_peak = peak_bin.iter().cloned().fold(0.0, f64::max);
    let edge = peak_bin[0].max(peak_bin[1]).max(peak_bin[n - 1]);
    if global_peak <= 0.0 {
        return Err(Error::DegenerateWeights("two-photon amplitude is zero".into()));
    }
    if (edge / global_peak).sqrt() > ALIASING_EDGE_RATIO {
        return Err(Error::AliasingGuard(format!(
            "difference-time weight at the window boundary is {:.2e} of peak",
            (edge / global_peak).sqrt()
        )));
    }

    let taus: Vec<f64> = (0..n).map(|idx| (idx as i64 - half) as f64 * dt).collect();
    let mean = stats::weighted_mean(&taus, &weight)?;
    let std = stats::weighted_std(&taus, &weight)?;
    let total: f64 = weight.iter().sum();
    for w in &mut weight {
        *w /= total;
    }
    Ok(TimingDistribution {
        taus,
        weights: weight,
        stats: SummaryStats { mean, std, std_error: 0.0, n_samples: n * n2 },
    })
}

fn require_equal_lengths(m1: &DispersiveMedium, m2: &DispersiveMedium) -> Result<f64> {
    if m1.length != m2.length {
        return Err(Error::UnsupportedConfiguration(format!(
            "closed forms assume equal traversal lengths (got {} and {})",
            m1.length, m2.length
        )));
    }
    Ok(m1.length)
}

/// Closed-form entangled-pair timing spread
/// `σ_T = √(1/σ_F² + (β₁+β₂)²L²σ_F²)`; equal lengths only.
pub fn sigma_t_closed_form(
    sigma_f: f64,
    m1: &DispersiveMedium,
    m2: &DispersiveMedium,
) -> Result<f64> {
    if !sigma_f.is_finite() || sigma_f <= 0.0 {
        return Err(Error::InvalidParameter(format!("sigma_f must be > 0, got {sigma_f}")));
    }
    let length = require_equal_lengths(m1, m2)?;
    let b = (m1.beta + m2.beta) * length;
    Ok((1.0 / (sigma_f * sigma_f) + b * b * sigma_f * sigma_f).sqrt())
}

/// Closed-form classical pulse-pair timing spread
/// `σ_C = √(1/(2σ_p²) + (β₁²+β₂²)L²σ_p²)`; equal lengths only.
pub fn sigma_c_closed_form(
    sigma_p: f64,
    m1: &DispersiveMedium,
    m2: &DispersiveMedium,
) -> Result<f64> {
    if !sigma_p.is_finite() || sigma_p <= 0.0 {
        return Err(Error::InvalidParameter(format!("sigma_p must be > 0, got {sigma_p}")));
    }
    let length = require_equal_lengths(m1, m2)?;
    let l2 = length * length;
    let sp2 = sigma_p * sigma_p;
    Ok((0.5 / sp2 + (m1.beta * m1.beta + m2.beta * m2.beta) * l2 * sp2).sqrt())
}

/// Anti-correlated classical pulse-train source: per-pulse spectral-amplitude
/// std `sigma_p`, center-frequency jitter std `sigma_d` (pulse i is a pair at
/// ω₀ ± δωᵢ), `n_pulses` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseTrainModel {
    pub omega0: f64,
    pub sigma_p: f64,
    pub sigma_d: f64,
    pub n_pulses: usize,
}

impl PulseTrainModel {
    pub fn new(omega0: f64, sigma_p: f64, sigma_d: f64, n_pulses: usize) -> Result<Self> {
        if sigma_p <= 0.0 || !sigma_p.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma_p must be > 0, got {sigma_p}")));
        }
        if sigma_d < 0.0 || !sigma_d.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma_d must be >= 0, got {sigma_d}")));
        }
        if n_pulses == 0 {
            return Err(Error::InvalidParameter("n_pulses must be >= 1".into()));
        }
        Ok(Self { omega0, sigma_p, sigma_d, n_pulses })
    }

    /// Std of the source's time-averaged amplitude spectrum,
    /// √(σ_d² + σ_p²/2) (intensity-spectrum convolution).
    pub fn effective_bandwidth(&self) -> f64 {
        (self.sigma_d * self.sigma_d + self.sigma_p * self.sigma_p / 2.0).sqrt()
    }
}

/// Grid sized for [`simulate_pulse_train`]: span covers the frequency jitter
/// plus per-pulse bandwidth, duration covers the recentered dispersed
/// envelope.
pub fn suggested_pulse_train_grid(
    model: &PulseTrainModel,
    m1: &DispersiveMedium,
    m2: &DispersiveMedium,
) -> Result<FrequencyGrid> {
    let span = 16.0 * model.sigma_p + 14.0 * model.sigma_d;
    let sp2 = model.sigma_p * model.sigma_p;
    let width = |m: &DispersiveMedium| {
        let b = m.gdd();
        (0.5 / sp2 + 2.0 * b * b * sp2).sqrt()
    };
    let duration = 16.0 * width(m1).max(width(m2));
    let n = ((duration * span / std::f64::consts::TAU).ceil() as usize)
        .next_power_of_two()
        .clamp(256, 1 << 14);
    FrequencyGrid::new(n, model.omega0, span)
}

/// One arm's dispersed envelope: spectrum at center detuning `delta`, medium
/// phase, minus the analytic group delay `t_shift` (re-centering the envelope
/// at t = 0 exactly), transformed to time. Returns the intensity profile and
/// the removed shift; sampled times are bin + shift.
fn dispersed_arm_intensity(
    grid: &FrequencyGrid,
    sigma_p: f64,
    delta: f64,
    medium: &DispersiveMedium,
) -> Result<(Vec<f64>, f64)> {
    let n = grid.n_points();
    let t_shift = (medium.alpha + 2.0 * medium.beta * delta) * medium.length;
    let two_sp2 = 2.0 * sigma_p * sigma_p;
    let reach = 8.0 * sigma_p;
    let mut values = vec![Complex64::ZERO; n];
    for (i, v) in values.iter_mut().enumerate() {
        let eps = grid.detuning(i);
        if (eps - delta).abs() > reach {
            continue;
        }
        let amp = (-(eps - delta) * (eps - delta) / two_sp2).exp();
        let phase = medium.phase(eps, AlphaSign::Plus) - t_shift * eps;
        *v = amp * Complex64::cis(phase);
    }
    // Peak spectral amplitude is ~1 (the bin nearest `delta`).
    if values[0].norm().max(values[n - 1].norm()) > ALIASING_EDGE_RATIO {
        return Err(Error::AliasingGuard(format!(
            "pulse at detuning {delta:.3} touches the grid span boundary"
        )));
    }
    field::time_transform_in_place(&mut values, grid);
    let intensity: Vec<f64> = values.iter().map(|v| v.norm_sqr()).collect();
    let peak = intensity.iter().cloned().fold(0.0, f64::max);
    if intensity[0].max(intensity[n - 1]) > peak * ALIASING_EDGE_RATIO * ALIASING_EDGE_RATIO {
        return Err(Error::AliasingGuard(
            "dispersed envelope touches the time window boundary".into(),
        ));
    }
    Ok((intensity, t_shift))
}

/// Pulse-train Monte Carlo results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PulseTrainReport {
    /// Summary of (t₁ − t₂)/√2 pooled over all pulse pairs — the per-arm
    /// -equivalent timing spread that [`sigma_c_closed_form`] predicts.
    pub pooled: SummaryStats,
    /// Closed-form σ_C for these media (equal lengths only).
    pub sigma_c_theory: Option<f64>,
    /// Measured per-arm dispersed envelope widths (std of detection times
    /// about each pulse's analytic group delay).
    pub arm_widths: (f64, f64),
    /// Fitted d⟨t₁−t₂⟩/dδω and its std error (None when σ_d = 0).
    pub slope: Option<(f64, f64)>,
    /// Analytic slope 2(β₁L₁ + β₂L₂): zero exactly when the two media have
    /// equal and opposite group-delay dispersion.
    pub expected_slope: f64,
    pub n_pulses: usize,
    pub detections_per_pulse: usize,
}

/// Simulate an anti-correlated pulse train through two dispersive media.
///
/// Per pulse i (one counter-based substream each): draw δωᵢ ~ N(0, σ_d²),
/// build transform-limited Gaussian pulses at ω₀ ± δωᵢ, apply each medium's
/// spectral phase, and draw `detections_per_pulse` detection times from each
/// arm's temporal intensity. Envelope shapes are δω-independent (quadratic
/// media shift a Gaussian pulse rigidly by its group delay), so each arm's
/// envelope is computed once per distinct δω and recentered exactly — the
/// group delay is added back to the sampled times.
pub fn simulate_pulse_train(
    model: &PulseTrainModel,
    m1: &DispersiveMedium,
    m2: &DispersiveMedium,
    detections_per_pulse: usize,
    grid: Option<FrequencyGrid>,
    base: &RandomStream,
) -> Result<PulseTrainReport> {
    if detections_per_pulse == 0 {
        return Err(Error::InvalidParameter("detections_per_pulse must be >= 1".into()));
    }
    let grid = match grid {
        Some(g) => g,
        None => suggested_pulse_train_grid(model, m1, m2)?,
    };

    // σ_d = 0 ⇒ every pulse pair is identical; hoist the envelope build.
    let shared: Option<(Vec<f64>, f64, Vec<f64>, f64)> = if model.sigma_d == 0.0 {
        let (i1, s1) = dispersed_arm_intensity(&grid, model.sigma_p, 0.0, m1)?;
        let (i2, s2) = dispersed_arm_intensity(&grid, model.sigma_p, 0.0, m2)?;
        Some((i1, s1, i2, s2))
    } else {
        None
    };

    let times = grid.times();
    struct PulseOutcome {
        delta: f64,
        diffs: Vec<f64>,
        resid1: Vec<f64>,
        resid2: Vec<f64>,
    }

    let outcomes: Vec<Result<PulseOutcome>> = (0..model.n_pulses)
        .into_par_iter()
        .map(|pulse| {
            let mut rng = base.substream(pulse as u64).rng();
            let delta = model.sigma_d * crate::rng::standard_normal(&mut rng);
            let (t1, s1, t2, s2) = match &shared {
                Some((i1, sh1, i2, sh2)) => (
                    stats::sample_from_profile(&times, i1, detections_per_pulse, &mut rng)?,
                    *sh1,
                    stats::sample_from_profile(&times, i2, detections_per_pulse, &mut rng)?,
                    *sh2,
                ),
                None => {
                    let (i1, sh1) = dispersed_arm_intensity(&grid, model.sigma_p, delta, m1)?;
                    let (i2, sh2) = dispersed_arm_intensity(&grid, model.sigma_p, -delta, m2)?;
                    (
                        stats::sample_from_profile(&times, &i1, detections_per_pulse, &mut rng)?,
                        sh1,
                        stats::sample_from_profile(&times, &i2, detections_per_pulse, &mut rng)?,
                        sh2,
                    )
                }
            };
            let diffs: Vec<f64> =
                t1.iter().zip(&t2).map(|(a, b)| (a + s1) - (b + s2)).collect();
            Ok(PulseOutcome { delta, diffs, resid1: t1, resid2: t2 })
        })
        .collect();

    let mut normalized_diffs = Vec::with_capacity(model.n_pulses * detections_per_pulse);
    let mut resid1 = Vec::with_capacity(model.n_pulses * detections_per_pulse);
    let mut resid2 = Vec::with_capacity(model.n_pulses * detections_per_pulse);
    let mut per_pulse: Vec<(f64, f64)> = Vec::with_capacity(model.n_pulses);
    for outcome in outcomes {
        let o = outcome?;
        let mean_diff = o.diffs.iter().sum::<f64>() / o.diffs.len() as f64;
        per_pulse.push((o.delta, mean_diff));
        normalized_diffs.extend(o.diffs.iter().map(|d| d / std::f64::consts::SQRT_2));
        resid1.extend(o.resid1);
        resid2.extend(o.resid2);
    }

    let pooled = SummaryStats::from_samples(&normalized_diffs)?;
    let arm1 = SummaryStats::from_samples(&resid1)?.std;
    let arm2 = SummaryStats::from_samples(&resid2)?.std;
    let slope = if model.sigma_d > 0.0 { fit_slope(&per_pulse) } else { None };
    let sigma_c_theory = sigma_c_closed_form(model.sigma_p, m1, m2).ok();

    Ok(PulseTrainReport {
        pooled,
        sigma_c_theory,
        arm_widths: (arm1, arm2),
        slope,
        expected_slope: 2.0 * (m1.gdd() + m2.gdd()),
        n_pulses: model.n_pulses,
        detections_per_pulse,
    })
}

/// OLS slope of per-pulse mean time difference against δω, with std error.
fn fit_slope(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 3 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ss_resid: f64 = points
        .iter()
        .map(|p| {
            let r = (p.1 - my) - slope * (p.0 - mx);
            r * r
        })
        .sum();
    let err = (ss_resid / (n - 2.0) / sxx).sqrt();
    Some((slope, err))
}

/// Quantum-vs-classical correlation width comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WidthComparison {
    pub quantum_width: f64,
    pub classical_width: f64,
    pub classical_width_err: f64,
    /// classical_width / quantum_width.
    pub ratio: f64,
    pub sigma_t_theory: Option<f64>,
    pub sigma_c_theory: Option<f64>,
    /// classical effective bandwidth / σ_F (should be ~1 for a fair match).
    pub bandwidth_ratio: f64,
}

/// Compare the entangled pair and the matched-bandwidth classical pulse
/// train through the same pair of media.
///
/// Precondition: the classical source's time-averaged bandwidth must be
/// within a factor of two of σ_F, otherwise the comparison is apples to
/// oranges and an unsupported-configuration error is returned.
pub fn correlation_width_comparison(
    state: &BiphotonState,
    model: &PulseTrainModel,
    m1: &DispersiveMedium,
    m2: &DispersiveMedium,
    base: &RandomStream,
) -> Result<WidthComparison> {
    let bandwidth_ratio = model.effective_bandwidth() / state.sigma_f;
    if !(0.5..=2.0).contains(&bandwidth_ratio) {
        return Err(Error::UnsupportedConfiguration(format!(
            "classical effective bandwidth is {bandwidth_ratio:.2}x the pair bandwidth; \
             match them within a factor of two"
        )));
    }
    let jsa = propagate_biphoton(&make_biphoton(state)?, m1, m2)?;
    let quantum = timing_difference_quantum(&jsa)?;
    let classical = simulate_pulse_train(model, m1, m2, 1, None, base)?;
    Ok(WidthComparison {
        quantum_width: quantum.std,
        classical_width: classical.pooled.std,
        classical_width_err: classical.pooled.std_error_of_std(),
        ratio: classical.pooled.std / quantum.std,
        sigma_t_theory: sigma_t_closed_form(state.sigma_f, m1, m2).ok(),
        sigma_c_theory: classical.sigma_c_theory,
        bandwidth_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn medium(beta: f64, length: f64) -> DispersiveMedium {
        DispersiveMedium::new(0.0, beta, length).unwrap()
    }

    fn cw_state(sigma_f: f64, n: usize, span: f64) -> BiphotonState {
        let grid = FrequencyGrid::new(n, 0.0, span).unwrap();
        BiphotonState::new(0.0, sigma_f, 0.0, grid, grid).unwrap()
    }

    #[test]
    fn sigma_t_worked_values() {
        // No dispersion: transform-limited pair width 1/σ_F.
        assert_relative_eq!(
            sigma_t_closed_form(2.0, &medium(0.0, 0.0), &medium(0.0, 0.0)).unwrap(),
            0.5,
            max_relative = 1e-14
        );
        // Equal media add coherently: √(1 + 4) = √5.
        assert_relative_eq!(
            sigma_t_closed_form(1.0, &medium(1.0, 1.0), &medium(1.0, 1.0)).unwrap(),
            5.0f64.sqrt(),
            max_relative = 1e-14
        );
        // Opposite media cancel at any length.
        for length in [0.5, 2.0, 7.0] {
            assert_relative_eq!(
                sigma_t_closed_form(1.0, &medium(2.0, length), &medium(-2.0, length)).unwrap(),
                1.0,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn sigma_c_worked_values() {
        assert_relative_eq!(
            sigma_c_closed_form(1.0, &medium(0.0, 0.0), &medium(0.0, 0.0)).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            sigma_c_closed_form(1.0, &medium(1.0, 1.0), &medium(-1.0, 1.0)).unwrap(),
            2.5f64.sqrt(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn closed_forms_reject_unequal_lengths() {
        assert!(matches!(
            sigma_t_closed_form(1.0, &medium(1.0, 1.0), &medium(1.0, 2.0)),
            Err(Error::UnsupportedConfiguration(_))
        ));
        assert!(matches!(
            sigma_c_closed_form(1.0, &medium(1.0, 1.0), &medium(1.0, 2.0)),
            Err(Error::UnsupportedConfiguration(_))
        ));
    }

    #[test]
    fn classical_never_cancels() {
        // σ_C² − σ_T² = −1/(2σ_F²) − 2β₁β₂L²σ_F² for all parameters, and
        // opposite-dispersion media leave the classical width strictly larger.
        let mut rng = RandomStream::new(21, 0).rng();
        for _ in 0..200 {
            let sf = 0.3 + 2.0 * rand::Rng::random::<f64>(&mut rng);
            let b1 = 4.0 * (rand::Rng::random::<f64>(&mut rng) - 0.5);
            let b2 = 4.0 * (rand::Rng::random::<f64>(&mut rng) - 0.5);
            let l = 3.0 * rand::Rng::random::<f64>(&mut rng);
            let st = sigma_t_closed_form(sf, &medium(b1, l), &medium(b2, l)).unwrap();
            let sc = sigma_c_closed_form(sf, &medium(b1, l), &medium(b2, l)).unwrap();
            let expected = -0.5 / (sf * sf) - 2.0 * b1 * b2 * l * l * sf * sf;
            assert_relative_eq!(
                sc * sc - st * st,
                expected,
                max_relative = 1e-11,
                epsilon = 1e-12
            );
        }
        let st = sigma_t_closed_form(1.0, &medium(1.5, 2.0), &medium(-1.5, 2.0)).unwrap();
        let sc = sigma_c_closed_form(1.0, &medium(1.5, 2.0), &medium(-1.5, 2.0)).unwrap();
        assert!(sc > st);
    }

    #[test]
    fn biphoton_marginal_and_covariance_cw() {
        let state = cw_state(1.0, 512, 16.0);
        let jsa = make_biphoton(&state).unwrap();
        assert_eq!(jsa.off_antidiagonal_mass(), 0.0);
        // Marginal intensity std is σ_F/2 (σ_F = 1/e half-width of the
        // amplitude); perfect anti-correlation gives cov = −σ_F²/4.
        let marginal = jsa.marginal1();
        let omegas = state.grid1.omegas();
        let m_std = stats::weighted_std(&omegas, &marginal).unwrap();
        assert_relative_eq!(m_std, 0.5, max_relative = 1e-2);
        let (v1, v2, cov) = jsa.frequency_covariance();
        assert_relative_eq!(cov, -0.25, max_relative = 1e-3);
        assert_relative_eq!(cov / (v1 * v2).sqrt(), -1.0, max_relative = 1e-12);
        // Amplitude at detuning σ_F is 1/e of peak (the width convention).
        let grid = state.grid1;
        let bin = (0..512).min_by(|&a, &b| {
            (grid.detuning(a) - 1.0)
                .abs()
                .partial_cmp(&(grid.detuning(b) - 1.0).abs())
                .unwrap()
        });
        let i = bin.unwrap();
        assert!((grid.detuning(i) - 1.0).abs() < grid.spacing());
        let peak = jsa.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        let ratio = jsa.value(i, 512 - i).norm() / peak;
        let expected = (-grid.detuning(i) * grid.detuning(i)).exp();
        assert_relative_eq!(ratio, expected, max_relative = 1e-10);
    }

    #[test]
    fn biphoton_small_pump_covariance() {
        let grid = FrequencyGrid::new(2048, 0.0, 16.0).unwrap();
        let state = BiphotonState::new(0.0, 1.0, 0.02, grid, grid).unwrap();
        assert!(!state.pump_bandwidth_warning());
        let jsa = make_biphoton(&state).unwrap();
        let (_, _, cov) = jsa.frequency_covariance();
        assert_abs_diff_eq!(cov, -0.25, epsilon = 2.0 * 0.02 * 0.02);
    }

    #[test]
    fn pump_warning_flag() {
        let grid = FrequencyGrid::new(512, 0.0, 16.0).unwrap();
        let state = BiphotonState::new(0.0, 1.0, 0.5, grid, grid).unwrap();
        assert!(state.pump_bandwidth_warning());
    }

    #[test]
    fn biphoton_grid_too_narrow_errors() {
        // 1/e half-width a quarter of the span: edge amplitude e⁻⁴ ≫ 1e−6.
        let state = cw_state(4.0, 64, 16.0);
        assert!(matches!(make_biphoton(&state), Err(Error::AliasingGuard(_))));
    }

    #[test]
    fn propagate_zero_length_is_bitwise_identity() {
        let jsa = make_biphoton(&cw_state(1.0, 64, 16.0)).unwrap();
        let out = propagate_biphoton(&jsa, &medium(3.0, 0.0), &medium(-2.0, 0.0)).unwrap();
        for (a, b) in out.values().iter().zip(jsa.values()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn propagate_preserves_joint_intensity() {
        let jsa = make_biphoton(&cw_state(1.0, 128, 16.0)).unwrap();
        let out = propagate_biphoton(&jsa, &medium(1.3, 2.0), &medium(0.4, 2.0)).unwrap();
        for (a, b) in out.values().iter().zip(jsa.values()) {
            assert_abs_diff_eq!(a.norm_sqr(), b.norm_sqr(), epsilon = 1e-15);
        }
    }

    #[test]
    fn quantum_timing_matches_closed_forms() {
        // Transform-limited: σ_T = 1/σ_F.
        let jsa = make_biphoton(&cw_state(1.0, 512, 16.0)).unwrap();
        let stats = timing_difference_quantum(&jsa).unwrap();
        assert_relative_eq!(stats.std, 1.0, max_relative = 0.02);
        assert_abs_diff_eq!(stats.mean, 0.0, epsilon = 1e-9);

        // Equal media: √5.
        let m = medium(1.0, 1.0);
        let jsa = propagate_biphoton(&jsa, &m, &m).unwrap();
        let stats = timing_difference_quantum(&jsa).unwrap();
        assert_relative_eq!(stats.std, 5.0f64.sqrt(), max_relative = 0.02);
    }

    #[test]
    fn quantum_timing_opposite_media_cancel() {
        let state = cw_state(1.0, 512, 16.0);
        let jsa = make_biphoton(&state).unwrap();
        let base = timing_difference_quantum(&jsa).unwrap();
        let dispersed =
            propagate_biphoton(&jsa, &medium(3.0, 2.0), &medium(-3.0, 2.0)).unwrap();
        let cancelled = timing_difference_quantum(&dispersed).unwrap();
        assert_relative_eq!(cancelled.std, 1.0, max_relative = 0.02);
        assert_relative_eq!(cancelled.std, base.std, max_relative = 1e-6);
    }

    #[test]
    fn quantum_timing_small_pump_matches_cw() {
        let grid = FrequencyGrid::new(2048, 0.0, 16.0).unwrap();
        let state = BiphotonState::new(0.0, 1.0, 0.02, grid, grid).unwrap();
        let jsa = make_biphoton(&state).unwrap();
        let stats = timing_difference_quantum(&jsa).unwrap();
        assert_relative_eq!(stats.std, 1.0, max_relative = 0.02);
    }

    #[test]
    fn quantum_timing_guard_trips_when_window_too_short() {
        // Huge dispersion on a short window: τ spread ~ √(1+64²) ≈ 64 versus
        // window half-duration 100 — 16× rule badly violated, guard must trip.
        let state = cw_state(1.0, 512, 16.0);
        let jsa = make_biphoton(&state).unwrap();
        let big = propagate_biphoton(&jsa, &medium(16.0, 2.0), &medium(16.0, 2.0)).unwrap();
        assert!(matches!(timing_difference_quantum(&big), Err(Error::AliasingGuard(_))));
    }

    #[test]
    fn pulse_train_transform_limited_width() {
        let model = PulseTrainModel::new(0.0, 1.0, 0.0, 20_000).unwrap();
        let report = simulate_pulse_train(
            &model,
            &medium(0.0, 0.0),
            &medium(0.0, 0.0),
            1,
            None,
            &RandomStream::new(11, 1),
        )
        .unwrap();
        let expected = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(
            report.pooled.std,
            expected,
            epsilon = 3.0 * report.pooled.std_error_of_std()
        );
        assert_eq!(report.sigma_c_theory, Some(expected));
        assert!(report.slope.is_none());
    }

    #[test]
    fn pulse_train_opposite_media_insensitive_to_jitter() {
        let m1 = medium(1.0, 1.0);
        let m2 = medium(-1.0, 1.0);
        let expected = 2.5f64.sqrt();
        for sigma_d in [0.0, 5.0] {
            let model = PulseTrainModel::new(0.0, 1.0, sigma_d, 20_000).unwrap();
            let report =
                simulate_pulse_train(&model, &m1, &m2, 1, None, &RandomStream::new(4, 2))
                    .unwrap();
            assert_abs_diff_eq!(
                report.pooled.std,
                expected,
                epsilon = 3.0 * report.pooled.std_error_of_std()
            );
            if sigma_d > 0.0 {
                let (slope, err) = report.slope.unwrap();
                assert_eq!(report.expected_slope, 0.0);
                assert_abs_diff_eq!(slope, 0.0, epsilon = 3.0 * err);
            }
        }
    }

    #[test]
    fn pulse_train_generic_media_slope_and_growth() {
        // β₁ + β₂ ≠ 0: per-pulse mean difference scales as 2(β₁+β₂)L·δω and
        // the pooled spread gains 2L²(β₁+β₂)²σ_d² over σ_C².
        let m1 = medium(1.0, 1.0);
        let m2 = medium(1.0, 1.0);
        let sigma_d = 0.5;
        let model = PulseTrainModel::new(0.0, 1.0, sigma_d, 20_000).unwrap();
        let report =
            simulate_pulse_train(&model, &m1, &m2, 1, None, &RandomStream::new(4, 3)).unwrap();
        let (slope, err) = report.slope.unwrap();
        assert_eq!(report.expected_slope, 4.0);
        assert_abs_diff_eq!(slope, 4.0, epsilon = 3.0 * err);
        let sc = report.sigma_c_theory.unwrap();
        let expected = (sc * sc + 2.0 * report.expected_slope * report.expected_slope / 4.0
            * sigma_d
            * sigma_d)
            .sqrt();
        assert_abs_diff_eq!(
            report.pooled.std,
            expected,
            epsilon = 4.0 * report.pooled.std_error_of_std()
        );
        assert!(report.pooled.std > sc - 3.0 * report.pooled.std_error_of_std());
    }

    #[test]
    fn width_comparison_broadband_classical_loses() {
        let media = (medium(1.0, 1.0), medium(-1.0, 1.0));
        let grid = FrequencyGrid::new(512, 0.0, 160.0).unwrap();
        let state = BiphotonState::new(0.0, 10.0, 0.0, grid, grid).unwrap();
        let model = PulseTrainModel::new(0.0, 1.0, 10.0, 20_000).unwrap();
        let cmp = correlation_width_comparison(
            &state,
            &model,
            &media.0,
            &media.1,
            &RandomStream::new(8, 4),
        )
        .unwrap();
        assert_relative_eq!(cmp.quantum_width, 0.1, max_relative = 0.02);
        assert!(cmp.classical_width >= 0.5);
        assert!(cmp.ratio >= 5.0);
    }

    #[test]
    fn width_comparison_narrowband_classical_is_comparable() {
        // σ_d = 0: the classical source is as narrow as the pair; widths are
        // within a factor of √2 (classical/quantum = 1/√2 exactly, both
        // transform-limited).
        let grid = FrequencyGrid::new(512, 0.0, 16.0).unwrap();
        let state = BiphotonState::new(0.0, 1.0, 0.0, grid, grid).unwrap();
        let model = PulseTrainModel::new(0.0, 1.0, 0.0, 20_000).unwrap();
        let cmp = correlation_width_comparison(
            &state,
            &model,
            &DispersiveMedium::vacuum(),
            &DispersiveMedium::vacuum(),
            &RandomStream::new(8, 5),
        )
        .unwrap();
        assert_abs_diff_eq!(cmp.ratio, std::f64::consts::FRAC_1_SQRT_2, epsilon = 0.02);
        assert!(cmp.ratio > 0.6 && cmp.ratio < 1.5);
    }

    #[test]
    fn width_comparison_rejects_mismatched_bandwidths() {
        let grid = FrequencyGrid::new(512, 0.0, 160.0).unwrap();
        let state = BiphotonState::new(0.0, 10.0, 0.0, grid, grid).unwrap();
        let model = PulseTrainModel::new(0.0, 1.0, 0.0, 100).unwrap();
        assert!(matches!(
            correlation_width_comparison(
                &state,
                &model,
                &DispersiveMedium::vacuum(),
                &DispersiveMedium::vacuum(),
                &RandomStream::new(8, 6),
            ),
            Err(Error::UnsupportedConfiguration(_))
        ));
    }

    #[test]
    fn pulse_train_is_bit_reproducible() {
        let model = PulseTrainModel::new(0.0, 1.0, 2.0, 500).unwrap();
        let m1 = medium(1.0, 1.0);
        let m2 = medium(-0.5, 1.0);
        let run = || {
            simulate_pulse_train(&model, &m1, &m2, 2, None, &RandomStream::new(77, 7)).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.pooled.std.to_bits(), b.pooled.std.to_bits());
        assert_eq!(a.pooled.mean.to_bits(), b.pooled.mean.to_bits());
    }
}
