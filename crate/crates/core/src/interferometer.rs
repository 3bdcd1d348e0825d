//! Franson two-photon interferometry.
//!
//! Each photon of an energy-time entangled pair enters an unbalanced
//! Mach–Zehnder interferometer whose long arm adds a delay ΔT and a phase
//! (φ₁ or φ₂). With ΔT much longer than the pair correlation time τ_c but
//! much shorter than the pump coherence time, post-selecting coincident
//! detections keeps only the short–short and long–long path pairs, whose
//! amplitudes interfere:
//!
//! ```text
//! R_coincident ∝ (1 + cos(φ₁+φ₂))/8,   R_LS = R_SL = 1/16
//! ```
//!
//! a fringe of visibility 1 in the *sum* of two locally random phases. The
//! best classical-field counterpart (two anti-correlated lasers behind the
//! same interferometers) reproduces the phase dependence at visibility ≤ 1/2,
//! and a general classical-field bound limits the visibility by the ratio of
//! coincidence rates at time offsets ΔT and 0 — microscopically small when
//! ΔT ≫ τ_c, while the quantum fringe stays at visibility 1.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{
    make_biphoton, timing_difference_distribution, BiphotonState, suggested_biphoton_grid,
};
use crate::rng::{standard_normal, RandomStream};
use crate::stats::SummaryStats;
use crate::{Error, Result};

/// Which arm of an unbalanced interferometer a photon took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathLabel {
    Short,
    Long,
}

/// Two unbalanced interferometers sharing the delay ΔT, with local phases on
/// the long arms, fed by a pair source of correlation time τ_c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FransonSetup {
    /// Long-minus-short path delay ΔT.
    pub delta_t: f64,
    /// Phase in interferometer 1's long arm.
    pub phi1: f64,
    /// Phase in interferometer 2's long arm.
    pub phi2: f64,
    /// Two-photon correlation time (1/σ_F).
    pub tau_c: f64,
    /// Coincidence window half-width for post-selection.
    pub window: f64,
}

impl FransonSetup {
    pub fn new(delta_t: f64, phi1: f64, phi2: f64, tau_c: f64, window: f64) -> Result<Self> {
        if tau_c <= 0.0 || !tau_c.is_finite() {
            return Err(Error::InvalidParameter(format!("tau_c must be > 0, got {tau_c}")));
        }
        if !delta_t.is_finite() || delta_t <= 3.0 * tau_c {
            return Err(Error::InvalidParameter(format!(
                "delta_t must exceed 3·tau_c so path pairs are resolvable \
                 (got delta_t = {delta_t}, tau_c = {tau_c})"
            )));
        }
        if !window.is_finite() || window <= 0.0 || window >= delta_t / 2.0 {
            return Err(Error::InvalidParameter(format!(
                "window must lie in (0, delta_t/2) (got window = {window}, delta_t = {delta_t})"
            )));
        }
        if !phi1.is_finite() || !phi2.is_finite() {
            return Err(Error::InvalidParameter("phases must be finite".into()));
        }
        Ok(Self { delta_t, phi1, phi2, tau_c, window })
    }
}

/// Coincidence probabilities per emitted pair, by path pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceRates {
    /// Post-selected short–short + long–long rate, (1+cos(φ₁+φ₂))/8.
    pub coincident: f64,
    /// Long–short rate (photon 1 late), 1/16.
    pub ls: f64,
    /// Short–long rate (photon 2 late), 1/16.
    pub sl: f64,
}

impl CoincidenceRates {
    /// Coincident rate scaled to its fringe maximum (1 at φ₁+φ₂ = 0).
    pub fn normalized_fringe(&self) -> f64 {
        self.coincident / 0.25
    }
}

/// Post-selected coincidence rates of the entangled pair: each
/// interferometer sends amplitude 1/2 per path to its monitored port, and
/// the indistinguishable short–short / long–long alternatives add coherently.
///
/// Depends on the phases only through φ₁ + φ₂ (the sum is formed before any
/// trigonometry, so settings with equal sums give bit-identical rates).
pub fn quantum_coincidence_rate(setup: &FransonSetup) -> CoincidenceRates {
    let phase_sum = setup.phi1 + setup.phi2;
    CoincidenceRates {
        coincident: (1.0 + phase_sum.cos()) / 8.0,
        ls: 1.0 / 16.0,
        sl: 1.0 / 16.0,
    }
}

/// Coincident-rate fringe over one 2π scan of the phase sum:
/// (φ₁+φ₂, rate) at n equally spaced sums starting from 0.
pub fn quantum_fringe(setup: &FransonSetup, n_points: usize) -> Result<Vec<(f64, f64)>> {
    if n_points < 2 {
        return Err(Error::InvalidParameter("fringe scan needs >= 2 points".into()));
    }
    let step = std::f64::consts::TAU / n_points as f64;
    Ok((0..n_points)
        .map(|k| {
            let scan = FransonSetup { phi1: k as f64 * step, phi2: 0.0, ..*setup };
            (scan.phi1, quantum_coincidence_rate(&scan).coincident)
        })
        .collect())
}

/// (max − min)/(max + min) of a sampled fringe.
pub fn fringe_visibility(points: &[(f64, f64)]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyInput("fringe visibility of an empty scan".into()));
    }
    let max = points.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let min = points.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    Ok((max - min) / (max + min))
}

/// One sampled coincidence: detection times and path labels for both photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t1: f64,
    pub t2: f64,
    pub path1: PathLabel,
    pub path2: PathLabel,
    /// Whether |t1 − t2| ≤ window at sampling time.
    pub accepted: bool,
}

/// Events per random substream in event sampling.
const EVENT_BLOCK: usize = 4096;

/// Draw coincidence events from the amplitude model: path pairs with
/// probabilities ∝ {(1+cosΣ)/16, (1+cosΣ)/16, 1/16, 1/16} for
/// {LL, SS, LS, SL}, detection times offset by ΔT on long paths plus a
/// per-photon timing jitter of std τ_c/√2 (so same-path pairs spread by the
/// correlation time τ_c).
pub fn sample_quantum_events(
    setup: &FransonSetup,
    n_pairs: usize,
    base: &RandomStream,
) -> Result<Vec<EventRecord>> {
    if n_pairs == 0 {
        return Err(Error::EmptyInput("cannot sample zero events".into()));
    }
    let c = (setup.phi1 + setup.phi2).cos();
    let weights = [1.0 + c, 1.0 + c, 1.0, 1.0];
    let total: f64 = weights.iter().sum();
    let mut cdf = [0.0; 4];
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w / total;
        cdf[i] = acc;
    }
    let jitter_std = setup.tau_c / std::f64::consts::SQRT_2;
    let n_blocks = n_pairs.div_ceil(EVENT_BLOCK);
    let events: Vec<Vec<EventRecord>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = base.substream(b as u64).rng();
            let len = EVENT_BLOCK.min(n_pairs - b * EVENT_BLOCK);
            (0..len)
                .map(|_| {
                    let u: f64 = rng.random();
                    let pair = cdf.iter().position(|&p| u < p).unwrap_or(3);
                    let (path1, path2) = match pair {
                        0 => (PathLabel::Long, PathLabel::Long),
                        1 => (PathLabel::Short, PathLabel::Short),
                        2 => (PathLabel::Long, PathLabel::Short),
                        _ => (PathLabel::Short, PathLabel::Long),
                    };
                    let delay = |p: PathLabel| match p {
                        PathLabel::Long => setup.delta_t,
                        PathLabel::Short => 0.0,
                    };
                    let t1 = delay(path1) + jitter_std * standard_normal(&mut rng);
                    let t2 = delay(path2) + jitter_std * standard_normal(&mut rng);
                    EventRecord {
                        t1,
                        t2,
                        path1,
                        path2,
                        accepted: (t1 - t2).abs() <= setup.window,
                    }
                })
                .collect()
        })
        .collect();
    Ok(events.concat())
}

/// Post-selection outcome: the accepted subset and its fraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PostSelection {
    pub events: Vec<EventRecord>,
    pub fraction: f64,
}

/// Keep events with |t1 − t2| ≤ window (re-evaluated against this window).
pub fn post_select(events: &[EventRecord], window: f64) -> Result<PostSelection> {
    if events.is_empty() {
        return Err(Error::EmptyInput("post-selection on an empty event stream".into()));
    }
    if !window.is_finite() || window <= 0.0 {
        return Err(Error::InvalidParameter(format!("window must be > 0, got {window}")));
    }
    let accepted: Vec<EventRecord> = events
        .iter()
        .filter(|e| (e.t1 - e.t2).abs() <= window)
        .map(|e| EventRecord { accepted: true, ..*e })
        .collect();
    let fraction = accepted.len() as f64 / events.len() as f64;
    Ok(PostSelection { events: accepted, fraction })
}

/// Classical anti-correlated-laser fringe simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuMandelReport {
    /// Scanned phase sums φ₁+φ₂ (φ₁ = φ₂ = Σ/2).
    pub phi_sums: Vec<f64>,
    /// Mean intensity-product coincidence proxy at each phase sum.
    pub rates: Vec<f64>,
    pub rate_errors: Vec<f64>,
    /// Mean single-detector intensity at each point (flat: no first-order
    /// interference survives ΔT ≫ coherence time).
    pub marginal1: Vec<f64>,
    pub marginal1_errors: Vec<f64>,
    /// Fitted fringe visibility ν in rate ∝ 1 + ν·cos(φ₁+φ₂).
    pub visibility: f64,
    pub visibility_err: f64,
    pub trials_per_phase: usize,
}

/// Simulate the strongest classical imitation: two lasers with
/// anti-correlated frequencies ω₀ ± δω (δω of std 1/τ_c redrawn each trial,
/// i.e. each coherence interval) and independent random phases, one through
/// each interferometer; the coincidence proxy is the product of monitored
/// output intensities. The δω-independent sum phase survives averaging and
/// yields a fringe in φ₁+φ₂ — but riding on a constant background that caps
/// the visibility at 1/2.
pub fn ou_mandel_simulate(
    setup: &FransonSetup,
    n_phases: usize,
    trials_per_phase: usize,
    base: &RandomStream,
) -> Result<OuMandelReport> {
    if n_phases < 8 {
        return Err(Error::InvalidParameter("phase scan needs >= 8 points".into()));
    }
    if n_phases * trials_per_phase < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "need >= 10000 total trials for a stable fit, got {}",
            n_phases * trials_per_phase
        )));
    }
    let sigma_delta = 1.0 / setup.tau_c;
    let step = std::f64::consts::TAU / n_phases as f64;
    let points: Vec<(f64, SummaryStats, SummaryStats)> = (0..n_phases)
        .into_par_iter()
        .map(|k| {
            let phi_sum = k as f64 * step;
            let (phi1, phi2) = (phi_sum / 2.0, phi_sum / 2.0);
            let mut rng = base.substream(k as u64).rng();
            let mut products = Vec::with_capacity(trials_per_phase);
            let mut intensities = Vec::with_capacity(trials_per_phase);
            for _ in 0..trials_per_phase {
                let delta = sigma_delta * standard_normal(&mut rng);
                let i1 = 0.5 * (1.0 + (delta * setup.delta_t + phi1).cos());
                let i2 = 0.5 * (1.0 + (-delta * setup.delta_t + phi2).cos());
                products.push(i1 * i2);
                intensities.push(i1);
            }
            (
                phi_sum,
                SummaryStats::from_samples(&products).expect("non-empty"),
                SummaryStats::from_samples(&intensities).expect("non-empty"),
            )
        })
        .collect();

    // Harmonic fit at the scan frequency: rate ≈ a + Re(c·e^{iΣ}) with
    // a = mean, c = (2/n)·Σ_k rate_k·e^{−iΣ_k}; ν = |c|/a. Errors by the
    // delta method over the independent per-point standard errors.
    let n = n_phases as f64;
    let mut a = 0.0;
    let (mut c_re, mut c_im) = (0.0, 0.0);
    let (mut var_a, mut var_cre, mut var_cim) = (0.0, 0.0, 0.0);
    for (phi, rate, _) in &points {
        let (sin, cos) = phi.sin_cos();
        a += rate.mean / n;
        c_re += 2.0 * rate.mean * cos / n;
        c_im -= 2.0 * rate.mean * sin / n;
        let v = rate.std_error * rate.std_error;
        var_a += v / (n * n);
        var_cre += 4.0 * v * cos * cos / (n * n);
        var_cim += 4.0 * v * sin * sin / (n * n);
    }
    let c_mod = c_re.hypot(c_im);
    let visibility = c_mod / a;
    let visibility_err = if c_mod > 0.0 {
        ((c_re * c_re * var_cre + c_im * c_im * var_cim) / (c_mod * c_mod * a * a)
            + c_mod * c_mod * var_a / (a * a * a * a))
            .sqrt()
    } else {
        (var_cre + var_cim).sqrt() / a
    };

    Ok(OuMandelReport {
        phi_sums: points.iter().map(|p| p.0).collect(),
        rates: points.iter().map(|p| p.1.mean).collect(),
        rate_errors: points.iter().map(|p| p.1.std_error).collect(),
        marginal1: points.iter().map(|p| p.2.mean).collect(),
        marginal1_errors: points.iter().map(|p| p.2.std_error).collect(),
        visibility,
        visibility_err,
        trials_per_phase,
    })
}

/// Where a correlation function came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Quantum,
    ClassicalModel,
}

/// Bell correlator of the post-selected fringe: E(φ₁, φ₂) = ν·cos(φ₁+φ₂),
/// the form all models in this crate share (built from the four π-shifted
/// rate combinations of the standard correlator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationFunction {
    pub visibility: f64,
    pub provenance: Provenance,
}

impl CorrelationFunction {
    /// Ideal entangled-pair correlator, E = cos(φ₁+φ₂).
    pub fn quantum() -> Self {
        Self { visibility: 1.0, provenance: Provenance::Quantum }
    }

    pub fn with_visibility(visibility: f64, provenance: Provenance) -> Result<Self> {
        if !visibility.is_finite() || visibility.abs() > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "|visibility| must be <= 1 so |E| <= 1, got {visibility}"
            )));
        }
        Ok(Self { visibility, provenance })
    }

    pub fn evaluate(&self, phi1: f64, phi2: f64) -> f64 {
        self.visibility * (phi1 + phi2).cos()
    }
}

/// CHSH combination S = |E(a,b) + E(a,b′) + E(a′,b) − E(a′,b′)|.
pub fn chsh(e: &CorrelationFunction, a: f64, a_prime: f64, b: f64, b_prime: f64) -> f64 {
    (e.evaluate(a, b) + e.evaluate(a, b_prime) + e.evaluate(a_prime, b)
        - e.evaluate(a_prime, b_prime))
    .abs()
}

/// CHSH evaluation with its inputs, for reporting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChshReport {
    /// The four settings pairs (a,b), (a,b′), (a′,b), (a′,b′).
    pub settings: [(f64, f64); 4],
    pub e_values: [f64; 4],
    pub s: f64,
    pub provenance: Provenance,
}

/// The settings (a, a′; b, b′) = (0, −π/2; π/4, −π/4) that maximize S for
/// E = cos(φ₁+φ₂), giving 2√2.
pub const CHSH_OPTIMAL_SETTINGS: (f64, f64, f64, f64) = (
    0.0,
    -std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_4,
    -std::f64::consts::FRAC_PI_4,
);

pub fn chsh_report(
    e: &CorrelationFunction,
    a: f64,
    a_prime: f64,
    b: f64,
    b_prime: f64,
) -> ChshReport {
    let settings = [(a, b), (a, b_prime), (a_prime, b), (a_prime, b_prime)];
    let e_values = [
        e.evaluate(a, b),
        e.evaluate(a, b_prime),
        e.evaluate(a_prime, b),
        e.evaluate(a_prime, b_prime),
    ];
    ChshReport { settings, e_values, s: chsh(e, a, a_prime, b, b_prime), provenance: e.provenance }
}

/// Bare coincidence profile R(Δt) with no interferometers in place:
/// the detection-time-difference distribution of the pair, normalized to
/// R(0) = 1, with the Gaussian closed form exp(−Δt²/(2τ_c²)).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoincidenceProfile {
    pub tau_c: f64,
    /// Grid of time differences from the pair pipeline.
    pub delta_ts: Vec<f64>,
    /// Numeric profile on `delta_ts`, peak-normalized.
    pub values: Vec<f64>,
    /// Std of the numeric distribution (should match τ_c).
    pub measured_std: f64,
}

impl CoincidenceProfile {
    /// Closed-form profile value exp(−Δt²/(2τ_c²)).
    pub fn value_at(&self, delta_t: f64) -> f64 {
        (-delta_t * delta_t / (2.0 * self.tau_c * self.tau_c)).exp()
    }
}

/// Coincidence profile with no interferometers: run the pair source through
/// the dispersion pipeline with no media and fold to the time-difference
/// distribution (Gaussian of std τ_c).
pub fn coincidence_profile_no_interferometers(tau_c: f64) -> Result<CoincidenceProfile> {
    if tau_c <= 0.0 || !tau_c.is_finite() {
        return Err(Error::InvalidParameter(format!("tau_c must be > 0, got {tau_c}")));
    }
    let sigma_f = 1.0 / tau_c;
    let grid = suggested_biphoton_grid(0.0, sigma_f, 0.0, &[])?;
    let state = BiphotonState::new(0.0, sigma_f, 0.0, grid, grid)?;
    let dist = timing_difference_distribution(&make_biphoton(&state)?)?;
    let peak = dist.weights.iter().cloned().fold(0.0, f64::max);
    let values = dist.weights.iter().map(|w| w / peak).collect();
    Ok(CoincidenceProfile {
        tau_c,
        delta_ts: dist.taus,
        values,
        measured_std: dist.stats.std,
    })
}

/// Classical-field visibility bound ν ≤ R(ΔT)/(R(0) + R(ΔT)) for the bare
/// coincidence profile R: any classical model's post-selected fringe
/// visibility at imbalance ΔT is limited by the coincidences a ΔT time
/// offset can produce.
pub fn classical_visibility_bound(profile: &CoincidenceProfile, delta_t: f64) -> Result<f64> {
    if delta_t < 0.0 || !delta_t.is_finite() {
        return Err(Error::InvalidParameter(format!("delta_t must be >= 0, got {delta_t}")));
    }
    let r = profile.value_at(delta_t);
    Ok(r / (1.0 + r))
}

/// A visibility measured (or predicted) against the classical bound.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ViolationReport {
    pub delta_t_over_tau: f64,
    pub bound: f64,
    pub nu_observed: f64,
    /// True when the observed visibility exceeds what any classical field
    /// allows at this imbalance.
    pub violated: bool,
}

pub fn violation_report(
    profile: &CoincidenceProfile,
    delta_t: f64,
    nu_observed: f64,
) -> Result<ViolationReport> {
    let bound = classical_visibility_bound(profile, delta_t)?;
    Ok(ViolationReport {
        delta_t_over_tau: delta_t / profile.tau_c,
        bound,
        nu_observed,
        violated: nu_observed > bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn setup(delta_t: f64, phi1: f64, phi2: f64) -> FransonSetup {
        FransonSetup::new(delta_t, phi1, phi2, 1.0, 3.0).unwrap()
    }

    #[test]
    fn setup_validation() {
        assert!(FransonSetup::new(12.0, 0.0, 0.0, 1.0, 3.0).is_ok());
        // Imbalance must dominate the correlation time.
        assert!(FransonSetup::new(2.5, 0.0, 0.0, 1.0, 1.0).is_err());
        // Window must stay well inside the imbalance.
        assert!(FransonSetup::new(12.0, 0.0, 0.0, 1.0, 6.0).is_err());
        assert!(FransonSetup::new(12.0, 0.0, 0.0, 0.0, 3.0).is_err());
    }

    #[test]
    fn quantum_rate_worked_values() {
        let max = quantum_coincidence_rate(&setup(12.0, 0.0, 0.0));
        assert_eq!(max.coincident, 0.25);
        assert_eq!(max.normalized_fringe(), 1.0);
        assert_eq!(max.ls, 1.0 / 16.0);
        assert_eq!(max.sl, 1.0 / 16.0);
        let min = quantum_coincidence_rate(&setup(12.0, std::f64::consts::PI, 0.0));
        assert_eq!(min.coincident, 0.0);
    }

    #[test]
    fn quantum_rate_depends_on_phase_sum_only() {
        // Dyadic phases and shifts keep the additions exact, so equal sums
        // must give bit-identical rates.
        let mut rng = RandomStream::new(70, 0).rng();
        for _ in 0..32 {
            let phi1 = (rng.random::<f64>() * 64.0).round() / 16.0;
            let phi2 = (rng.random::<f64>() * 64.0).round() / 16.0;
            let delta = (rng.random::<f64>() * 64.0).round() / 16.0;
            let a = quantum_coincidence_rate(&setup(12.0, phi1, phi2));
            let b = quantum_coincidence_rate(&setup(12.0, phi1 + delta, phi2 - delta));
            assert_eq!(a.coincident.to_bits(), b.coincident.to_bits());
        }
    }

    #[test]
    fn quantum_fringe_visibility_is_exactly_one() {
        let scan = quantum_fringe(&setup(12.0, 0.0, 0.0), 32).unwrap();
        assert_eq!(scan.len(), 32);
        assert_eq!(fringe_visibility(&scan).unwrap(), 1.0);
    }

    #[test]
    fn chsh_worked_values() {
        let (a, ap, b, bp) = CHSH_OPTIMAL_SETTINGS;
        let s = chsh(&CorrelationFunction::quantum(), a, ap, b, bp);
        assert_abs_diff_eq!(s, 2.0 * std::f64::consts::SQRT_2, epsilon = 1e-12);
        // Classical-model correlator at visibility 1/2 scales S linearly.
        let half = CorrelationFunction::with_visibility(0.5, Provenance::ClassicalModel).unwrap();
        assert_abs_diff_eq!(chsh(&half, a, ap, b, bp), std::f64::consts::SQRT_2, epsilon = 1e-12);
        let zero = CorrelationFunction::with_visibility(0.0, Provenance::ClassicalModel).unwrap();
        assert_eq!(chsh(&zero, a, ap, b, bp), 0.0);
        let report = chsh_report(&CorrelationFunction::quantum(), a, ap, b, bp);
        assert_eq!(report.s, s);
        assert_eq!(report.e_values.len(), 4);
    }

    #[test]
    fn correlation_function_bounds() {
        assert!(CorrelationFunction::with_visibility(1.2, Provenance::Quantum).is_err());
        let e = CorrelationFunction::with_visibility(0.9, Provenance::Quantum).unwrap();
        for k in 0..64 {
            let phi = k as f64 * 0.2 - 6.0;
            assert!(e.evaluate(phi, 0.3).abs() <= 1.0);
        }
    }

    #[test]
    fn post_select_worked_values() {
        let ll = EventRecord {
            t1: 12.0,
            t2: 12.0,
            path1: PathLabel::Long,
            path2: PathLabel::Long,
            accepted: false,
        };
        let all_ll = vec![ll; 8];
        assert_eq!(post_select(&all_ll, 3.0).unwrap().fraction, 1.0);

        // Uniform path mix with zero jitter and ΔT ≫ window: only the
        // same-path halves survive.
        let make = |p1: PathLabel, p2: PathLabel| {
            let delay = |p: PathLabel| if p == PathLabel::Long { 12.0 } else { 0.0 };
            EventRecord { t1: delay(p1), t2: delay(p2), path1: p1, path2: p2, accepted: false }
        };
        let mix = vec![
            make(PathLabel::Long, PathLabel::Long),
            make(PathLabel::Short, PathLabel::Short),
            make(PathLabel::Long, PathLabel::Short),
            make(PathLabel::Short, PathLabel::Long),
        ];
        let selected = post_select(&mix, 3.0).unwrap();
        assert_eq!(selected.fraction, 0.5);
        assert!(selected.events.iter().all(|e| e.accepted));

        assert!(matches!(post_select(&[], 3.0), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn post_selection_never_accepts_mixed_paths() {
        // ΔT = 12τ_c with a 3τ_c window: a mixed-path event needs a 9σ
        // timing fluctuation to sneak in.
        let setup = FransonSetup::new(12.0, 1.0, 0.3, 1.0, 3.0).unwrap();
        let events = sample_quantum_events(&setup, 20_000, &RandomStream::new(71, 0)).unwrap();
        let selected = post_select(&events, setup.window).unwrap();
        assert!(selected
            .events
            .iter()
            .all(|e| e.path1 == e.path2));
        // Acceptance probability: same-path share of the pair distribution
        // times the 3σ mass of the τ_c-wide difference jitter.
        let c = (setup.phi1 + setup.phi2).cos();
        let expected = (2.0 + 2.0 * c) / (4.0 + 2.0 * c) * 0.9973;
        assert_abs_diff_eq!(selected.fraction, expected, epsilon = 0.02);
    }

    #[test]
    fn sampled_events_are_bit_reproducible() {
        let setup = FransonSetup::new(12.0, 0.4, -0.1, 1.0, 3.0).unwrap();
        let a = sample_quantum_events(&setup, 1000, &RandomStream::new(72, 0)).unwrap();
        let b = sample_quantum_events(&setup, 1000, &RandomStream::new(72, 0)).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.t1.to_bits(), y.t1.to_bits());
            assert_eq!(x.t2.to_bits(), y.t2.to_bits());
            assert_eq!(x.path1, y.path1);
        }
    }

    #[test]
    fn ou_mandel_visibility_is_half() {
        let setup = FransonSetup::new(5.0, 0.0, 0.0, 1.0, 2.0).unwrap();
        let report =
            ou_mandel_simulate(&setup, 32, 3000, &RandomStream::new(73, 0)).unwrap();
        // The model interferes, but no harder than visibility 1/2.
        assert!(report.visibility > 0.25, "visibility {}", report.visibility);
        assert!(
            report.visibility <= 0.5 + 3.0 * report.visibility_err,
            "visibility {} err {}",
            report.visibility,
            report.visibility_err
        );
        assert_abs_diff_eq!(report.visibility, 0.5, epsilon = 3.0 * report.visibility_err);
    }

    #[test]
    fn ou_mandel_marginals_are_flat() {
        let setup = FransonSetup::new(5.0, 0.0, 0.0, 1.0, 2.0).unwrap();
        let report =
            ou_mandel_simulate(&setup, 16, 2000, &RandomStream::new(74, 0)).unwrap();
        let mut pooled = 0.0;
        for (m, e) in report.marginal1.iter().zip(&report.marginal1_errors) {
            assert_abs_diff_eq!(*m, 0.5, epsilon = 4.0 * e);
            pooled += (m - 0.5) / report.marginal1.len() as f64;
        }
        let pooled_err = report.marginal1_errors[0] / (report.marginal1.len() as f64).sqrt();
        assert_abs_diff_eq!(pooled, 0.0, epsilon = 3.0 * pooled_err);
    }

    #[test]
    fn ou_mandel_chsh_stays_classical() {
        let setup = FransonSetup::new(5.0, 0.0, 0.0, 1.0, 2.0).unwrap();
        let report =
            ou_mandel_simulate(&setup, 32, 2000, &RandomStream::new(75, 0)).unwrap();
        let e = CorrelationFunction::with_visibility(report.visibility, Provenance::ClassicalModel)
            .unwrap();
        let (a, ap, b, bp) = CHSH_OPTIMAL_SETTINGS;
        let s = chsh(&e, a, ap, b, bp);
        let s_err = 2.0 * std::f64::consts::SQRT_2 * report.visibility_err;
        assert!(s <= 2.0 + 3.0 * s_err, "S = {s}");
        assert_abs_diff_eq!(s, std::f64::consts::SQRT_2, epsilon = 3.0 * s_err);
    }

    #[test]
    fn ou_mandel_is_bit_reproducible() {
        let setup = FransonSetup::new(5.0, 0.0, 0.0, 1.0, 2.0).unwrap();
        let run = || {
            ou_mandel_simulate(&setup, 8, 1500, &RandomStream::new(76, 0)).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.visibility.to_bits(), b.visibility.to_bits());
        assert_eq!(a.rates, b.rates);
    }

    #[test]
    fn coincidence_profile_worked_values() {
        let profile = coincidence_profile_no_interferometers(1.0).unwrap();
        assert_eq!(profile.value_at(0.0), 1.0);
        assert_relative_eq!(profile.value_at(1.0), 0.6065306597126334, max_relative = 1e-12);
        // Numeric profile from the pair pipeline matches the closed form.
        assert_relative_eq!(profile.measured_std, 1.0, max_relative = 0.02);
        for (dt, v) in profile.delta_ts.iter().zip(&profile.values) {
            let expected = profile.value_at(*dt);
            if expected > 1e-6 {
                assert_relative_eq!(*v, expected, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn visibility_bound_worked_values() {
        let profile = coincidence_profile_no_interferometers(1.0).unwrap();
        assert_eq!(classical_visibility_bound(&profile, 0.0).unwrap(), 0.5);
        let bound = classical_visibility_bound(&profile, 5.0).unwrap();
        let expected = (-12.5f64).exp() / (1.0 + (-12.5f64).exp());
        assert_relative_eq!(bound, expected, max_relative = 1e-12);
        assert_abs_diff_eq!(bound, 3.7266e-6, epsilon = 1e-9);
    }

    #[test]
    fn visibility_bound_is_monotone_decreasing() {
        let profile = coincidence_profile_no_interferometers(0.7).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..80 {
            let bound = classical_visibility_bound(&profile, k as f64 * 0.1).unwrap();
            assert!(bound < last || (k == 0 && bound <= last));
            last = bound;
        }
    }

    #[test]
    fn violation_flags() {
        let profile = coincidence_profile_no_interferometers(1.0).unwrap();
        // Quantum visibility 1 at ΔT = 5τ_c: impossible for any classical
        // field.
        let quantum = violation_report(&profile, 5.0, 1.0).unwrap();
        assert!(quantum.violated);
        assert!(quantum.bound < 1e-5);
        // The anti-correlated-laser model at zero imbalance: within bounds.
        let classical = violation_report(&profile, 0.0, 0.5).unwrap();
        assert!(!classical.violated);
    }
}
