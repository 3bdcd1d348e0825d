//! Nonlocal phase modulation: sideband combinatorics for classical
//! anti-correlated sources, and the quantum cancellation that beats them.
//!
//! A sinusoidal phase modulator of depth m scatters a line into sidebands at
//! n·Ω with weights f_n = J_n(m)². For any classical source built from
//! anti-correlated frequency pairs, two remote modulators *add* their
//! sideband variances to the summed frequency:
//!
//! ```text
//! Δ²  =  Ω₁²·Σ n²f_n(m₁) + Ω₂²·Σ n²f_n(m₂) + 2δω²  =  Ω²(m₁²+m₂²)/2 + 2δω²
//! ```
//!
//! independent of the modulator phases and signs — no classical choice
//! cancels it. An energy-time entangled pair with correlation time ≪ 1/Ω
//! instead sees the *sum* of the instantaneous phases: equal-and-opposite
//! modulators cancel exactly and the summed-frequency variance stays at the
//! pump baseline σ_pump²/4. The classical workaround — pre-modulating inside
//! the source by −φ₁, −φ₂ — restores anti-correlation only while the remote
//! modulators stay on; switching them off exposes the internal modulators.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::BiphotonState;
use crate::field;
use crate::grid::FrequencyGrid;
use crate::rng::RandomStream;
use crate::stats::{self, SummaryStats};
use crate::{Error, Result, ALIASING_EDGE_RATIO};

/// Direction of the applied phase: φ(t) = ±m·sin(Ωt + θ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModulationSign {
    Plus,
    Minus,
}

impl ModulationSign {
    pub fn factor(self) -> f64 {
        match self {
            ModulationSign::Plus => 1.0,
            ModulationSign::Minus => -1.0,
        }
    }
}

/// Sinusoidal phase modulator applying φ(t) = sign·depth·sin(Ωt + θ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseModulator {
    pub omega_mod: f64,
    pub depth: f64,
    pub phase_offset: f64,
    pub sign: ModulationSign,
}

impl PhaseModulator {
    pub fn new(omega_mod: f64, depth: f64, phase_offset: f64, sign: ModulationSign) -> Result<Self> {
        if omega_mod <= 0.0 || !omega_mod.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "omega_mod must be > 0, got {omega_mod}"
            )));
        }
        if !(0.0..=50.0).contains(&depth) {
            return Err(Error::InvalidParameter(format!(
                "depth must be in [0, 50], got {depth}"
            )));
        }
        if !phase_offset.is_finite() {
            return Err(Error::InvalidParameter("phase_offset must be finite".into()));
        }
        Ok(Self { omega_mod, depth, phase_offset, sign })
    }

    /// Modulator switched off (depth 0) at frequency Ω.
    pub fn off(omega_mod: f64) -> Result<Self> {
        Self::new(omega_mod, 0.0, 0.0, ModulationSign::Plus)
    }

    /// Instantaneous phase φ(t).
    pub fn phase_at(&self, t: f64) -> f64 {
        self.sign.factor() * self.depth * (self.omega_mod * t + self.phase_offset).sin()
    }

    /// Same modulator with the sign flipped (equal-but-opposite phase).
    pub fn opposite(&self) -> Self {
        let sign = match self.sign {
            ModulationSign::Plus => ModulationSign::Minus,
            ModulationSign::Minus => ModulationSign::Plus,
        };
        Self { sign, ..*self }
    }

    /// Complex representation c with φ(t) = Im(c·e^{iΩt}); |c| is the
    /// effective depth, arg(c) the effective phase offset.
    fn phasor(&self) -> Complex64 {
        self.sign.factor() * self.depth * Complex64::cis(self.phase_offset)
    }

    /// Single modulator equivalent to applying `self` then `other`
    /// (same frequency required): phasors add.
    pub fn combine(&self, other: &Self) -> Result<Self> {
        if self.omega_mod != other.omega_mod {
            return Err(Error::UnsupportedConfiguration(format!(
                "cannot combine modulators at different frequencies ({} vs {})",
                self.omega_mod, other.omega_mod
            )));
        }
        let c = self.phasor() + other.phasor();
        let depth = c.norm();
        let phase_offset = if depth == 0.0 { 0.0 } else { c.arg() };
        Ok(Self { omega_mod: self.omega_mod, depth, phase_offset, sign: ModulationSign::Plus })
    }
}

/// Bessel functions J₀(x)..J_max(x) for x ≥ 0 by Miller's backward
/// recurrence, normalized with J₀ + 2·Σ J_{2k} = 1.
pub fn bessel_j_all(max_order: usize, x: f64) -> Result<Vec<f64>> {
    if !(0.0..=1e4).contains(&x) {
        return Err(Error::InvalidParameter(format!(
            "argument must be in [0, 1e4], got {x}"
        )));
    }
    if x == 0.0 {
        let mut out = vec![0.0; max_order + 1];
        out[0] = 1.0;
        return Ok(out);
    }
    // Start the downward recurrence well above both the order and the
    // argument, where J is deep in its superexponential tail.
    let start = (max_order + x as usize + 32) & !1;
    let mut out = vec![0.0; max_order + 1];
    let mut above = 0.0f64; // J_{k+1}
    let mut here = 1e-30f64; // J_k (arbitrary seed; normalized away)
    let mut norm = 0.0f64; // accumulates J_0 + 2·Σ J_{2k}
    for k in (0..=start).rev() {
        let below = 2.0 * (k as f64 + 1.0) / x * here - above;
        above = here;
        here = below;
        // `here` now holds J_k.
        if k % 2 == 0 {
            norm += if k == 0 { here } else { 2.0 * here };
        }
        if k <= max_order {
            out[k] = here;
        }
        if here.abs() > 1e250 {
            // Rescale mid-recurrence to avoid overflow for large x.
            let scale = 1e-250;
            here *= scale;
            above *= scale;
            norm *= scale;
            for v in &mut out {
                *v *= scale;
            }
        }
    }
    for v in &mut out {
        *v /= norm;
    }
    Ok(out)
}

/// Symmetric sideband weight spectrum f_n, n ∈ [−n_max, n_max].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SidebandSpectrum {
    /// Weights indexed by n + n_max (so index n_max is the carrier n = 0).
    pub f: Vec<f64>,
    pub omega_mod: f64,
}

impl SidebandSpectrum {
    pub fn n_max(&self) -> usize {
        self.f.len() / 2
    }

    /// Weight of sideband n.
    pub fn weight(&self, n: i64) -> f64 {
        self.f[(n + self.n_max() as i64) as usize]
    }

    /// Σ n²·f_n — the sideband contribution to the frequency variance in
    /// units of Ω².
    pub fn variance_n(&self) -> f64 {
        let n_max = self.n_max() as i64;
        self.f
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let n = (i as i64 - n_max) as f64;
                n * n * w
            })
            .sum()
    }

    /// Draw a sideband index n from the weights.
    pub fn sample_n(&self, rng: &mut ChaCha8Rng) -> i64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in self.f.iter().enumerate() {
            acc += w;
            if u < acc {
                return i as i64 - self.n_max() as i64;
            }
        }
        self.f.len() as i64 - 1 - self.n_max() as i64
    }
}

/// Sideband weights f_n = J_n(m)² for |n| ≤ n_max, normalized.
///
/// Errors if the truncated tail exceeds 1e−10 (n_max ≥ m + 20 always
/// suffices).
pub fn sideband_coefficients(depth: f64, n_max: usize) -> Result<SidebandSpectrum> {
    sideband_coefficients_at(depth, n_max, 1.0)
}

fn sideband_coefficients_at(depth: f64, n_max: usize, omega_mod: f64) -> Result<SidebandSpectrum> {
    if depth < 0.0 || !depth.is_finite() {
        return Err(Error::InvalidParameter(format!("depth must be >= 0, got {depth}")));
    }
    let j = bessel_j_all(n_max, depth)?;
    let mut f = vec![0.0; 2 * n_max + 1];
    let mut total = 0.0;
    for n in 0..=n_max {
        let w = j[n] * j[n];
        f[n_max + n] = w;
        f[n_max - n] = w;
        total += if n == 0 { w } else { 2.0 * w };
    }
    // Σ over all n of J_n(m)² = 1; the shortfall is the truncated tail.
    if 1.0 - total > 1e-10 {
        return Err(Error::Truncation(format!(
            "sideband tail beyond n = {n_max} holds {:.2e} of the weight (limit 1e-10); \
             increase n_max to at least depth + 20",
            1.0 - total
        )));
    }
    for w in &mut f {
        *w /= total;
    }
    Ok(SidebandSpectrum { f, omega_mod })
}

/// Sideband order beyond which the J_n(m)² tail is below 1e−10.
fn default_n_max(depth: f64) -> usize {
    depth.ceil() as usize + 20
}

fn sidebands_for(modulator: &PhaseModulator) -> Result<SidebandSpectrum> {
    // Weights depend only on |depth|: J_n(m)² is insensitive to the sign
    // convention and to the phase offset.
    sideband_coefficients_at(modulator.depth, default_n_max(modulator.depth), modulator.omega_mod)
}

/// One spectral line pair of the anti-correlated source: beam 1 carries
/// ω_i with amplitude weight a_i, beam 2 carries 2ω̄ − ω_i with weight b_i,
/// and the pulse occurs with probability P_i.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseLine {
    pub a: f64,
    pub b: f64,
    pub omega: f64,
    pub probability: f64,
}

/// Classical source emitting anti-correlated frequency pairs
/// (ω_i, 2ω̄ − ω_i), optionally Gaussian-smeared by `linewidth` per beam,
/// optionally carrying internal pre-modulators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassicalAnticorrelatedSource {
    pub omega_bar: f64,
    pub pulses: Vec<PulseLine>,
    /// Gaussian smearing std δω of each beam's lines (0 = exact deltas).
    pub linewidth: f64,
    /// Internal modulators applied to (beam 1, beam 2) inside the source.
    pub precompensation: Option<(PhaseModulator, PhaseModulator)>,
}

impl ClassicalAnticorrelatedSource {
    pub fn new(omega_bar: f64, pulses: Vec<PulseLine>, linewidth: f64) -> Result<Self> {
        if pulses.is_empty() {
            return Err(Error::EmptyInput("source needs at least one pulse line".into()));
        }
        let mut total = 0.0;
        for p in &pulses {
            if p.a <= 0.0 || !p.a.is_finite() || p.b <= 0.0 || !p.b.is_finite() {
                return Err(Error::InvalidParameter(
                    "pulse amplitude weights must be > 0".into(),
                ));
            }
            if p.probability < 0.0 || !p.probability.is_finite() {
                return Err(Error::InvalidParameter("pulse probabilities must be >= 0".into()));
            }
            total += p.probability;
        }
        if total <= 0.0 {
            return Err(Error::DegenerateWeights("pulse probabilities sum to zero".into()));
        }
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "pulse probabilities must sum to 1 (got {total})"
            )));
        }
        if linewidth < 0.0 || !linewidth.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "linewidth must be >= 0, got {linewidth}"
            )));
        }
        Ok(Self { omega_bar, pulses, linewidth, precompensation: None })
    }

    /// Single-line source at the mean frequency.
    pub fn monochromatic(omega_bar: f64) -> Self {
        Self {
            omega_bar,
            pulses: vec![PulseLine { a: 1.0, b: 1.0, omega: omega_bar, probability: 1.0 }],
            linewidth: 0.0,
            precompensation: None,
        }
    }

    /// The same source with internal modulators that exactly negate the
    /// given external pair (−φ₁ on beam 1, −φ₂ on beam 2).
    pub fn with_precompensation_for(
        mut self,
        external1: &PhaseModulator,
        external2: &PhaseModulator,
    ) -> Self {
        self.precompensation = Some((external1.opposite(), external2.opposite()));
        self
    }

    /// True when the linewidth is large enough for adjacent sidebands to
    /// overlap appreciably (δω ≥ Ω/4).
    pub fn overlapping_sidebands(&self, omega_mod: f64) -> bool {
        self.linewidth >= omega_mod / 4.0
    }

    fn require_bare(&self) -> Result<()> {
        if self.precompensation.is_some() {
            return Err(Error::UnsupportedConfiguration(
                "this computation assumes a source without internal pre-modulators; \
                 use compensated_source_demo for pre-compensated sources"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Closed-form Δ² with a sideband-overlap flag.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DeltaSquaredReport {
    /// Variance of ω₁ + ω₂ − 2ω̄ (angular frequency squared).
    pub value: f64,
    /// Set when the source linewidth ≥ Ω/4, where the discrete-sideband
    /// picture starts to blur (the variance itself stays exact).
    pub overlap_warning: bool,
}

/// Variance of the summed frequency for a classical anti-correlated source
/// behind two remote modulators: Ω₁²Σn²f_n(m₁) + Ω₂²Σn²f_n(m₂) + 2δω².
///
/// Exactly independent of both phase offsets and both signs — only the
/// depths (and the linewidth) enter.
pub fn delta_squared_classical(
    mod1: &PhaseModulator,
    mod2: &PhaseModulator,
    source: &ClassicalAnticorrelatedSource,
) -> Result<DeltaSquaredReport> {
    source.require_bare()?;
    let s1 = sidebands_for(mod1)?;
    let s2 = sidebands_for(mod2)?;
    let value = mod1.omega_mod * mod1.omega_mod * s1.variance_n()
        + mod2.omega_mod * mod2.omega_mod * s2.variance_n()
        + 2.0 * source.linewidth * source.linewidth;
    let overlap_warning = source.overlapping_sidebands(mod1.omega_mod.min(mod2.omega_mod));
    Ok(DeltaSquaredReport { value, overlap_warning })
}

/// Trials per random substream in Monte Carlo loops.
const TRIAL_BLOCK: usize = 4096;

/// Draw per-trial summed-frequency offsets s = ω₁+ω₂−2ω̄ for a classical
/// source behind per-beam sideband spectra, returning the per-trial s².
///
/// Block b draws from `base.substream(b·stride + offset)`; callers running
/// several sampling passes off one stream keep them disjoint via
/// stride/offset rather than nested substreams.
fn classical_sum_square_samples(
    s1: &SidebandSpectrum,
    s2: &SidebandSpectrum,
    source: &ClassicalAnticorrelatedSource,
    trials: usize,
    base: &RandomStream,
    stride: u64,
    offset: u64,
) -> Vec<f64> {
    let pulse_cdf: Vec<f64> = {
        // Coincidence detection weighs each pulse by both beams' amplitudes.
        let weights: Vec<f64> =
            source.pulses.iter().map(|p| p.probability * p.a * p.b).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect()
    };
    let n_blocks = trials.div_ceil(TRIAL_BLOCK);
    (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = base.substream(b as u64 * stride + offset).rng();
            let len = TRIAL_BLOCK.min(trials - b * TRIAL_BLOCK);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let u: f64 = rng.random();
                let _pulse = pulse_cdf.partition_point(|&c| c < u).min(pulse_cdf.len() - 1);
                let n1 = s1.sample_n(&mut rng);
                let n2 = s2.sample_n(&mut rng);
                let xi1 = source.linewidth * crate::rng::standard_normal(&mut rng);
                let xi2 = source.linewidth * crate::rng::standard_normal(&mut rng);
                let s = n1 as f64 * s1.omega_mod + n2 as f64 * s2.omega_mod + xi1 + xi2;
                out.push(s * s);
            }
            out
        })
        .collect::<Vec<Vec<f64>>>()
        .concat()
}

/// Monte Carlo estimate of the classical Δ²: per trial, draw each beam's
/// sideband (and linewidth smear) independently and accumulate
/// (ω₁+ω₂−2ω̄)². `mean` estimates Δ², `std_error` its uncertainty.
pub fn delta_squared_monte_carlo(
    mod1: &PhaseModulator,
    mod2: &PhaseModulator,
    source: &ClassicalAnticorrelatedSource,
    trials: usize,
    base: &RandomStream,
) -> Result<SummaryStats> {
    source.require_bare()?;
    if trials < 2 {
        return Err(Error::InvalidParameter("trials must be >= 2".into()));
    }
    let s1 = sidebands_for(mod1)?;
    let s2 = sidebands_for(mod2)?;
    let samples = classical_sum_square_samples(&s1, &s2, source, trials, base, 1, 0);
    SummaryStats::from_samples(&samples)
}

/// Quantum nonlocal modulation results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantumModulationReport {
    /// Variance of ω₁+ω₂−2ω₀ with the modulators applied.
    pub delta2: f64,
    /// Same pipeline with both modulators off (pump-bandwidth baseline,
    /// σ_pump²/4 for a Gaussian pump).
    pub delta2_baseline: f64,
    /// delta2 / delta2_baseline.
    pub ratio: f64,
    /// Sum-frequency detunings s and the normalized joint spectral intensity
    /// marginal P(s), modulated and baseline.
    pub sum_detunings: Vec<f64>,
    pub sum_spectrum: Vec<f64>,
    pub baseline_spectrum: Vec<f64>,
}

/// Internal grids for the rotated-coordinate quantum pipeline: mean time
/// χ = (t₁+t₂)/2 (conjugate to the summed detuning s) on an FFT grid, and a
/// plain difference-time axis τ that is integrated over.
struct RotatedGrids {
    s_grid: FrequencyGrid,
    taus: Vec<f64>,
}

fn rotated_grids(state: &BiphotonState, mod1: &PhaseModulator, mod2: &PhaseModulator) -> Result<RotatedGrids> {
    let reach = |m: &PhaseModulator| default_n_max(m.depth) as f64 * m.omega_mod;
    let s_reach = reach(mod1) + reach(mod2) + 8.0 * state.sigma_pump;
    let span = 2.2 * s_reach;
    let omega_min = mod1.omega_mod.min(mod2.omega_mod);
    // ≥ 32 modulation periods so the sidebands are sharply resolved.
    let duration = 32.0 * std::f64::consts::TAU / omega_min;
    let n = ((duration * span / std::f64::consts::TAU).ceil() as usize)
        .next_power_of_two()
        .clamp(1024, 1 << 13);
    let s_grid = FrequencyGrid::new(n, 0.0, span)?;
    if s_grid.duration() < duration {
        return Err(Error::GridTooSmall(format!(
            "cannot cover {duration:.0} time units and a ±{s_reach:.0} sideband span \
             with {} points",
            1 << 13
        )));
    }
    // Difference-time axis: covers the pair correlation amplitude down to
    // e^{−25} of peak.
    let n_tau = 256;
    let tau_span = 20.0 / state.sigma_f;
    let d_tau = tau_span / n_tau as f64;
    let taus = (0..n_tau).map(|j| (j as f64 - n_tau as f64 / 2.0) * d_tau).collect();
    Ok(RotatedGrids { s_grid, taus })
}

/// P(s): transform the joint temporal amplitude over χ for each τ slice and
/// pool the intensities (Parseval over the untransformed τ↔d axis).
fn sum_frequency_spectrum(
    state: &BiphotonState,
    grids: &RotatedGrids,
    mods: Option<(&PhaseModulator, &PhaseModulator)>,
) -> Result<Vec<f64>> {
    let n_s = grids.s_grid.n_points();
    let chis = grids.s_grid.times();
    let sp2_4 = state.sigma_pump * state.sigma_pump / 4.0;
    let sf2_4 = state.sigma_f * state.sigma_f / 4.0;

    let rows: Vec<Vec<Complex64>> = grids
        .taus
        .par_iter()
        .map(|&tau| {
            // Exact joint temporal amplitude of the Gaussian biphoton in
            // rotated coordinates: A(χ, τ) = exp(−σ_p²(χ−τ/2)²/4)·
            // exp(−σ_F²τ²/4); the pump envelope rides on t₂ = χ − τ/2.
            let q = (-sf2_4 * tau * tau).exp();
            let mut row: Vec<Complex64> = chis
                .iter()
                .map(|&chi| {
                    let centered = chi - tau / 2.0;
                    let amp = q * (-sp2_4 * centered * centered).exp();
                    match mods {
                        Some((m1, m2)) => {
                            let phase =
                                m1.phase_at(chi + tau / 2.0) + m2.phase_at(chi - tau / 2.0);
                            amp * Complex64::cis(phase)
                        }
                        None => Complex64::new(amp, 0.0),
                    }
                })
                .collect();
            field::freq_transform_in_place(&mut row, &grids.s_grid);
            row
        })
        .collect();

    let mut spectrum = vec![0.0; n_s];
    for row in &rows {
        for (p, v) in spectrum.iter_mut().zip(row) {
            *p += v.norm_sqr();
        }
    }
    let total: f64 = spectrum.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights("summed-frequency spectrum is zero".into()));
    }
    for p in &mut spectrum {
        *p /= total;
    }
    let peak = spectrum.iter().cloned().fold(0.0, f64::max);
    let edge = spectrum[0].max(spectrum[n_s - 1]);
    if (edge / peak).sqrt() > ALIASING_EDGE_RATIO {
        return Err(Error::AliasingGuard(format!(
            "summed-frequency spectrum touches the grid boundary ({:.2e} of peak amplitude)",
            (edge / peak).sqrt()
        )));
    }
    Ok(spectrum)
}

/// Variance of s over a normalized spectrum on the grid's detunings.
fn spectrum_variance(grid: &FrequencyGrid, spectrum: &[f64]) -> Result<f64> {
    let s = grid.detunings();
    let std = stats::weighted_std(&s, spectrum)?;
    Ok(std * std)
}

/// Quantum nonlocal phase modulation: apply exp(iφ₁(t₁))·exp(iφ₂(t₂)) to the
/// joint temporal amplitude and measure the variance of ω₁+ω₂−2ω₀.
///
/// Requires the clean-separation regime σ_F ≥ 4Ω ≥ 16σ_pump > 0 (pair
/// correlation time ≪ modulation period ≪ pump coherence time). Equal and
/// opposite modulators cancel (Δ² stays at the σ_pump²/4 baseline);
/// same-sign modulators act like one modulator of twice the depth on the sum
/// coordinate.
pub fn quantum_modulation(
    state: &BiphotonState,
    mod1: &PhaseModulator,
    mod2: &PhaseModulator,
) -> Result<QuantumModulationReport> {
    if state.sigma_pump <= 0.0 {
        return Err(Error::UnsupportedConfiguration(
            "quantum_modulation needs a pulsed pump (sigma_pump > 0) so the baseline \
             variance is finite"
                .into(),
        ));
    }
    let omega_max = mod1.omega_mod.max(mod2.omega_mod);
    let omega_min = mod1.omega_mod.min(mod2.omega_mod);
    if state.sigma_f < 4.0 * omega_max {
        return Err(Error::UnsupportedConfiguration(format!(
            "pair correlation time 1/{} is not << the modulation period 1/{omega_max}; \
             need sigma_f >= 4*omega_mod",
            state.sigma_f
        )));
    }
    if state.sigma_pump > omega_min / 4.0 {
        return Err(Error::UnsupportedConfiguration(format!(
            "pump bandwidth {} is not << the modulation frequency {omega_min}; \
             need sigma_pump <= omega_mod/4",
            state.sigma_pump
        )));
    }
    let grids = rotated_grids(state, mod1, mod2)?;
    let baseline_spectrum = sum_frequency_spectrum(state, &grids, None)?;
    let mods_active = mod1.depth != 0.0 || mod2.depth != 0.0;
    let sum_spectrum = if mods_active {
        sum_frequency_spectrum(state, &grids, Some((mod1, mod2)))?
    } else {
        baseline_spectrum.clone()
    };
    let delta2_baseline = spectrum_variance(&grids.s_grid, &baseline_spectrum)?;
    let delta2 = if mods_active {
        spectrum_variance(&grids.s_grid, &sum_spectrum)?
    } else {
        delta2_baseline
    };
    Ok(QuantumModulationReport {
        delta2,
        delta2_baseline,
        ratio: delta2 / delta2_baseline,
        sum_detunings: grids.s_grid.detunings(),
        sum_spectrum,
        baseline_spectrum,
    })
}

/// Compensated-source on/off comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompensatedSourceReport {
    /// Δ² estimate with the external modulators on (net modulation zero).
    pub on: SummaryStats,
    /// Δ² estimate with the external modulators off (internal ones exposed).
    pub off: SummaryStats,
    /// Closed-form Δ² for the exposed internal modulators.
    pub off_theory: f64,
    /// Quantum reference Δ² with the same external modulators on/off, when a
    /// pair source is supplied (both stay at the pump baseline for an
    /// equal-and-opposite external pair).
    pub quantum_on: Option<f64>,
    pub quantum_off: Option<f64>,
    pub quantum_baseline: Option<f64>,
}

/// The classical counter-example and its failure mode: a source carrying
/// internal modulators −φ₁, −φ₂ restores perfect anti-correlation while the
/// external modulators run, but turning the external pair *off* exposes the
/// internal modulation and Δ² jumps to the closed-form sideband variance.
///
/// The source must have been pre-compensated for exactly this external pair
/// (see [`ClassicalAnticorrelatedSource::with_precompensation_for`]).
pub fn compensated_source_demo(
    mod1: &PhaseModulator,
    mod2: &PhaseModulator,
    source: &ClassicalAnticorrelatedSource,
    trials: usize,
    base: &RandomStream,
    quantum_state: Option<&BiphotonState>,
) -> Result<CompensatedSourceReport> {
    let Some((int1, int2)) = &source.precompensation else {
        return Err(Error::UnsupportedConfiguration(
            "compensated_source_demo needs a source with internal pre-modulators".into(),
        ));
    };
    let net1 = mod1.combine(int1)?;
    let net2 = mod2.combine(int2)?;
    if net1.depth != 0.0 || net2.depth != 0.0 {
        return Err(Error::UnsupportedConfiguration(
            "internal pre-modulators must exactly negate the external pair".into(),
        ));
    }
    if trials < 2 {
        return Err(Error::InvalidParameter("trials must be >= 2".into()));
    }
    let bare = ClassicalAnticorrelatedSource {
        omega_bar: source.omega_bar,
        pulses: source.pulses.clone(),
        linewidth: source.linewidth,
        precompensation: None,
    };

    // ON: external + internal collapse to zero-depth net modulators.
    let on_s1 = sidebands_for(&net1)?;
    let on_s2 = sidebands_for(&net2)?;
    let on_samples = classical_sum_square_samples(&on_s1, &on_s2, &bare, trials, base, 2, 0);
    // OFF: only the internal modulators act.
    let off_s1 = sidebands_for(int1)?;
    let off_s2 = sidebands_for(int2)?;
    let off_samples = classical_sum_square_samples(&off_s1, &off_s2, &bare, trials, base, 2, 1);

    let off_theory = delta_squared_classical(int1, int2, &bare)?.value;

    let (mut quantum_on, mut quantum_off, mut quantum_baseline) = (None, None, None);
    if let Some(state) = quantum_state {
        let on = quantum_modulation(state, mod1, mod2)?;
        let off =
            quantum_modulation(state, &PhaseModulator::off(mod1.omega_mod)?, &PhaseModulator::off(mod2.omega_mod)?)?;
        quantum_on = Some(on.delta2);
        quantum_off = Some(off.delta2);
        quantum_baseline = Some(on.delta2_baseline);
    }

    Ok(CompensatedSourceReport {
        on: SummaryStats::from_samples(&on_samples)?,
        off: SummaryStats::from_samples(&off_samples)?,
        off_theory,
        quantum_on,
        quantum_off,
        quantum_baseline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// Power-series J_n(x) = Σ_k (−1)^k (x/2)^{n+2k} / (k!(n+k)!) — the
    /// independent oracle for the recurrence (adequate for small x).
    fn bessel_series(n: usize, x: f64) -> f64 {
        let half = x / 2.0;
        let mut term = half.powi(n as i32);
        for k in 1..=n {
            term /= k as f64;
        }
        let mut sum = 0.0;
        for k in 0..40 {
            sum += term;
            let kf = (k + 1) as f64;
            term *= -half * half / (kf * (n as f64 + kf));
        }
        sum
    }

    fn modulator(depth: f64) -> PhaseModulator {
        PhaseModulator::new(1.0, depth, 0.0, ModulationSign::Plus).unwrap()
    }

    #[test]
    fn bessel_recurrence_matches_series() {
        for &x in &[0.3, 1.0, 2.5, 7.0] {
            let j = bessel_j_all(12, x).unwrap();
            for (n, &jn) in j.iter().enumerate() {
                assert_relative_eq!(
                    jn,
                    bessel_series(n, x),
                    max_relative = 1e-11,
                    epsilon = 1e-13
                );
            }
        }
    }

    #[test]
    fn sideband_worked_values() {
        let s = sideband_coefficients(1.0, 21).unwrap();
        assert_abs_diff_eq!(s.weight(0), 0.5855, epsilon = 1e-4);
        assert_abs_diff_eq!(s.weight(1), 0.1937, epsilon = 1e-4);
        assert_eq!(s.weight(1), s.weight(-1));
        let total: f64 = s.f.iter().sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn sideband_off_is_carrier_only() {
        let s = sideband_coefficients(0.0, 5).unwrap();
        assert_eq!(s.weight(0), 1.0);
        assert_eq!(s.weight(1), 0.0);
        assert_eq!(s.weight(-3), 0.0);
    }

    #[test]
    fn sideband_variance_identity() {
        // Σ n² J_n(m)² = m²/2.
        for &m in &[0.5, 1.0, 2.0, 5.0] {
            let s = sideband_coefficients(m, default_n_max(m)).unwrap();
            assert_relative_eq!(s.variance_n(), m * m / 2.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn sideband_truncation_error() {
        assert!(matches!(sideband_coefficients(5.0, 3), Err(Error::Truncation(_))));
    }

    #[test]
    fn classical_delta_squared_worked_values() {
        let source = ClassicalAnticorrelatedSource::monochromatic(100.0);
        let off = delta_squared_classical(&modulator(0.0), &modulator(0.0), &source).unwrap();
        assert_eq!(off.value, 0.0);
        let on = delta_squared_classical(&modulator(1.0), &modulator(1.0), &source).unwrap();
        assert_abs_diff_eq!(on.value, 1.0, epsilon = 1e-6);
        assert!(!on.overlap_warning);
    }

    #[test]
    fn classical_delta_squared_phase_invariance_is_exact() {
        let source = ClassicalAnticorrelatedSource::monochromatic(0.0);
        let reference =
            delta_squared_classical(&modulator(0.7), &modulator(1.3), &source).unwrap().value;
        for (theta1, theta2) in [(0.4, 1.9), (3.0, -2.0), (0.0, std::f64::consts::PI)] {
            for sign in [ModulationSign::Plus, ModulationSign::Minus] {
                let m1 = PhaseModulator::new(1.0, 0.7, theta1, sign).unwrap();
                let m2 = PhaseModulator::new(1.0, 1.3, theta2, ModulationSign::Minus).unwrap();
                let v = delta_squared_classical(&m1, &m2, &source).unwrap().value;
                assert_eq!(v.to_bits(), reference.to_bits());
            }
        }
    }

    #[test]
    fn classical_delta_squared_strictly_positive() {
        let source = ClassicalAnticorrelatedSource::monochromatic(0.0);
        for &m in &[0.05, 0.1, 0.5, 2.0] {
            let v = delta_squared_classical(&modulator(m), &modulator(0.0), &source)
                .unwrap()
                .value;
            assert!(v > 0.0, "depth {m} gave {v}");
        }
    }

    #[test]
    fn classical_linewidth_adds_and_warns() {
        let mut source = ClassicalAnticorrelatedSource::monochromatic(0.0);
        source.linewidth = 0.05;
        let v = delta_squared_classical(&modulator(1.0), &modulator(1.0), &source).unwrap();
        assert_relative_eq!(v.value, 1.0 + 2.0 * 0.05 * 0.05, max_relative = 1e-9);
        assert!(!v.overlap_warning);
        source.linewidth = 0.3;
        let v = delta_squared_classical(&modulator(1.0), &modulator(1.0), &source).unwrap();
        assert!(v.overlap_warning);
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let source = ClassicalAnticorrelatedSource::monochromatic(0.0);
        let stats = delta_squared_monte_carlo(
            &modulator(1.0),
            &modulator(1.0),
            &source,
            100_000,
            &RandomStream::new(40, 0),
        )
        .unwrap();
        assert_abs_diff_eq!(stats.mean, 1.0, epsilon = 3.0 * stats.std_error);
    }

    #[test]
    fn monte_carlo_off_is_exactly_zero() {
        let source = ClassicalAnticorrelatedSource::monochromatic(0.0);
        let stats = delta_squared_monte_carlo(
            &modulator(0.0),
            &modulator(0.0),
            &source,
            10_000,
            &RandomStream::new(40, 1),
        )
        .unwrap();
        assert_eq!(stats.mean, 0.0);
        assert_eq!(stats.std, 0.0);
    }

    #[test]
    fn monte_carlo_error_shrinks_as_root_trials() {
        let source = ClassicalAnticorrelatedSource::monochromatic(0.0);
        let run = |trials| {
            delta_squared_monte_carlo(
                &modulator(1.0),
                &modulator(0.5),
                &source,
                trials,
                &RandomStream::new(41, 0),
            )
            .unwrap()
            .std_error
        };
        let ratio = run(20_000) / run(80_000);
        assert!(ratio > 1.5 && ratio < 2.7, "error ratio {ratio}");
    }

    #[test]
    fn monte_carlo_rejects_precompensated_source() {
        let m = modulator(1.0);
        let source = ClassicalAnticorrelatedSource::monochromatic(0.0)
            .with_precompensation_for(&m, &m);
        assert!(matches!(
            delta_squared_classical(&m, &m, &source),
            Err(Error::UnsupportedConfiguration(_))
        ));
        assert!(matches!(
            delta_squared_monte_carlo(&m, &m, &source, 100, &RandomStream::new(0, 0)),
            Err(Error::UnsupportedConfiguration(_))
        ));
    }

    fn quantum_state() -> BiphotonState {
        // Regime: σ_F = 80 ≫ Ω = 1 ≫ σ_pump = 0.25; baseline σ_pump²/4.
        let grid = FrequencyGrid::new(512, 0.0, 1280.0).unwrap();
        BiphotonState::new(0.0, 80.0, 0.25, grid, grid).unwrap()
    }

    #[test]
    fn quantum_baseline_matches_pump_variance() {
        let state = quantum_state();
        let report = quantum_modulation(&state, &modulator(0.0), &modulator(0.0)).unwrap();
        let expected = state.sigma_pump * state.sigma_pump / 4.0;
        assert_relative_eq!(report.delta2_baseline, expected, max_relative = 5e-3);
        // Depth 0 runs the identical pipeline: bit-equal to the baseline.
        assert_eq!(report.delta2.to_bits(), report.delta2_baseline.to_bits());
        assert_eq!(report.ratio, 1.0);
    }

    #[test]
    fn quantum_opposite_modulators_cancel() {
        let state = quantum_state();
        for &depth in &[0.5, 1.0, 2.0] {
            let m1 = PhaseModulator::new(1.0, depth, 0.0, ModulationSign::Plus).unwrap();
            let report = quantum_modulation(&state, &m1, &m1.opposite()).unwrap();
            assert!(
                (0.95..=1.05).contains(&report.ratio),
                "depth {depth}: ratio {}",
                report.ratio
            );
        }
    }

    #[test]
    fn quantum_opposite_cancellation_survives_phase_offset() {
        let state = quantum_state();
        let m1 = PhaseModulator::new(1.0, 1.0, 0.7, ModulationSign::Plus).unwrap();
        let report = quantum_modulation(&state, &m1, &m1.opposite()).unwrap();
        assert!((0.95..=1.05).contains(&report.ratio), "ratio {}", report.ratio);
    }

    #[test]
    fn quantum_same_sign_modulators_add() {
        let state = quantum_state();
        let m = modulator(1.0);
        let report = quantum_modulation(&state, &m, &m).unwrap();
        let expected = report.delta2_baseline + 2.0 * 1.0 * 1.0;
        assert_relative_eq!(report.delta2, expected, max_relative = 0.05);
    }

    #[test]
    fn quantum_regime_validation() {
        let grid = FrequencyGrid::new(512, 0.0, 1280.0).unwrap();
        // Correlation time too long for the modulation frequency.
        let slow = BiphotonState::new(0.0, 2.0, 0.25, grid, grid).unwrap();
        assert!(matches!(
            quantum_modulation(&slow, &modulator(1.0), &modulator(1.0)),
            Err(Error::UnsupportedConfiguration(_))
        ));
        // Pump too broad.
        let broad = BiphotonState::new(0.0, 80.0, 0.5, grid, grid).unwrap();
        assert!(matches!(
            quantum_modulation(&broad, &modulator(1.0), &modulator(1.0)),
            Err(Error::UnsupportedConfiguration(_))
        ));
        // CW pump has no finite baseline.
        let cw = BiphotonState::new(0.0, 80.0, 0.0, grid, grid).unwrap();
        assert!(matches!(
            quantum_modulation(&cw, &modulator(1.0), &modulator(1.0)),
            Err(Error::UnsupportedConfiguration(_))
        ));
    }

    #[test]
    fn combine_requires_equal_frequencies() {
        let a = PhaseModulator::new(1.0, 1.0, 0.0, ModulationSign::Plus).unwrap();
        let b = PhaseModulator::new(2.0, 1.0, 0.0, ModulationSign::Plus).unwrap();
        assert!(matches!(a.combine(&b), Err(Error::UnsupportedConfiguration(_))));
        let net = a.combine(&a.opposite()).unwrap();
        assert_eq!(net.depth, 0.0);
    }

    #[test]
    fn compensated_source_on_off_asymmetry() {
        let ext1 = PhaseModulator::new(1.0, 1.0, 0.3, ModulationSign::Plus).unwrap();
        let ext2 = PhaseModulator::new(1.0, 0.8, 1.1, ModulationSign::Minus).unwrap();
        let source = ClassicalAnticorrelatedSource::monochromatic(0.0)
            .with_precompensation_for(&ext1, &ext2);
        let report = compensated_source_demo(
            &ext1,
            &ext2,
            &source,
            50_000,
            &RandomStream::new(50, 0),
            None,
        )
        .unwrap();
        // ON: net modulation is exactly zero, so every sample is exactly 0.
        assert_eq!(report.on.mean, 0.0);
        assert_eq!(report.on.std, 0.0);
        // OFF: internal modulators exposed.
        let expected = (1.0 + 0.8 * 0.8) / 2.0;
        assert_relative_eq!(report.off_theory, expected, max_relative = 1e-9);
        assert_abs_diff_eq!(report.off.mean, expected, epsilon = 3.0 * report.off.std_error);
        assert!(report.off.mean > 0.5 * expected);
    }

    #[test]
    fn compensated_source_quantum_reference() {
        let ext1 = PhaseModulator::new(1.0, 1.0, 0.0, ModulationSign::Plus).unwrap();
        let ext2 = ext1.opposite();
        let source = ClassicalAnticorrelatedSource::monochromatic(0.0)
            .with_precompensation_for(&ext1, &ext2);
        let state = quantum_state();
        let report = compensated_source_demo(
            &ext1,
            &ext2,
            &source,
            10_000,
            &RandomStream::new(51, 0),
            Some(&state),
        )
        .unwrap();
        let baseline = report.quantum_baseline.unwrap();
        assert_relative_eq!(report.quantum_on.unwrap(), baseline, max_relative = 0.05);
        assert_relative_eq!(report.quantum_off.unwrap(), baseline, max_relative = 0.05);
    }

    #[test]
    fn compensated_source_rejects_mismatched_precompensation() {
        let ext1 = modulator(1.0);
        let ext2 = modulator(0.5);
        let other = modulator(0.7);
        let source = ClassicalAnticorrelatedSource::monochromatic(0.0)
            .with_precompensation_for(&other, &ext2);
        assert!(matches!(
            compensated_source_demo(&ext1, &ext2, &source, 100, &RandomStream::new(0, 0), None),
            Err(Error::UnsupportedConfiguration(_))
        ));
    }

    #[test]
    fn monte_carlo_is_bit_reproducible() {
        let source = ClassicalAnticorrelatedSource::monochromatic(0.0);
        let run = || {
            delta_squared_monte_carlo(
                &modulator(1.0),
                &modulator(1.0),
                &source,
                30_000,
                &RandomStream::new(60, 0),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std.to_bits(), b.std.to_bits());
    }
}
