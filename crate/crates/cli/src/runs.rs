//! One function per experiment family, each producing the summary lines,
//! the tabular data, and the structured payload for the writers — plus the
//! quantum-vs-classical compare mode.

use serde_json::json;

use etesim_core::chaotic::{identical_dispersion_experiment, ChaoticDispersionReport, ChaoticFieldParams};
use etesim_core::dispersion::{
    correlation_width_comparison, make_biphoton, propagate_biphoton, sigma_t_closed_form,
    simulate_pulse_train, suggested_biphoton_grid, suggested_pulse_train_grid,
    timing_difference_distribution, BiphotonState, PulseTrainModel, PulseTrainReport,
    TimingDistribution,
};
use etesim_core::field::DispersiveMedium;
use etesim_core::grid::FrequencyGrid;
use etesim_core::interferometer::{
    chsh_report, classical_visibility_bound, coincidence_profile_no_interferometers,
    fringe_visibility, ou_mandel_simulate, quantum_fringe, violation_report, ChshReport,
    CorrelationFunction, FransonSetup, Provenance, CHSH_OPTIMAL_SETTINGS,
};
use etesim_core::modulation::{
    delta_squared_classical, delta_squared_monte_carlo, quantum_modulation,
    ClassicalAnticorrelatedSource, ModulationSign, PhaseModulator, PulseLine,
};
use etesim_core::rng::RandomStream;

use crate::config::{
    parse_params, ChaoticParams, DispersionParams, Family, FransonParams, Model,
    ModulationParams, PulseTrainParams, RunConfig,
};
use crate::output::{Cell, Plot, RunOutcome, Series, Sidecar};
use crate::CliError;

/// Fixed per-family random-stream ids under the user seed.
const STREAM_PULSE_TRAIN: u64 = 1;
const STREAM_CHAOTIC: u64 = 2;
const STREAM_MODULATION: u64 = 3;
const STREAM_FRANSON: u64 = 4;

fn apply_grid_override(
    suggested: FrequencyGrid,
    center: f64,
    points: Option<usize>,
    span: Option<f64>,
) -> Result<FrequencyGrid, CliError> {
    match (points, span) {
        (None, None) => Ok(suggested),
        _ => Ok(FrequencyGrid::new(
            points.unwrap_or_else(|| suggested.n_points()),
            center,
            span.unwrap_or_else(|| suggested.span()),
        )?),
    }
}

/// First/last index (exclusive) where any series rises above 1e-8 of the
/// global peak; keeps plots focused on the support of the data.
fn support_range(values: &[&[f64]]) -> (usize, usize) {
    let peak = values.iter().flat_map(|v| v.iter().copied()).fold(0.0_f64, f64::max);
    let threshold = peak * 1e-8;
    let n = values.first().map_or(0, |v| v.len());
    let (mut lo, mut hi) = (n, 0);
    for i in 0..n {
        if values.iter().any(|v| v[i] > threshold) {
            lo = lo.min(i);
            hi = hi.max(i + 1);
        }
    }
    if lo < hi {
        (lo, hi)
    } else {
        (0, n)
    }
}

fn media_pair(
    alpha1: f64,
    beta1: f64,
    alpha2: f64,
    beta2: f64,
    length: f64,
) -> Result<(DispersiveMedium, DispersiveMedium), CliError> {
    Ok((
        DispersiveMedium::new(alpha1, beta1, length)?,
        DispersiveMedium::new(alpha2, beta2, length)?,
    ))
}

fn quantum_timing(
    p: &DispersionParams,
) -> Result<(TimingDistribution, f64, FrequencyGrid, BiphotonState), CliError> {
    let (m1, m2) = media_pair(p.alpha1, p.beta1, p.alpha2, p.beta2, p.length)?;
    let suggested = suggested_biphoton_grid(p.omega0, p.sigma_f, p.sigma_pump, &[(m1, m2)])?;
    let grid = apply_grid_override(suggested, p.omega0, p.grid_points, p.grid_span)?;
    let state = BiphotonState::new(p.omega0, p.sigma_f, p.sigma_pump, grid, grid)?;
    let jsa = propagate_biphoton(&make_biphoton(&state)?, &m1, &m2)?;
    let dist = timing_difference_distribution(&jsa)?;
    let theory = sigma_t_closed_form(p.sigma_f, &m1, &m2)?;
    Ok((dist, theory, grid, state))
}

pub fn run_dispersion(p: &DispersionParams) -> Result<RunOutcome, CliError> {
    let (dist, theory, grid, state) = quantum_timing(p)?;
    let numeric = dist.stats.std;
    let rel = (numeric - theory) / theory;

    let mut summary = vec![
        format!(
            "entangled-pair timing difference (sigma_f = {}, sigma_pump = {})",
            p.sigma_f, p.sigma_pump
        ),
        format!(
            "  media: beta1 = {}, beta2 = {}, alpha1 = {}, alpha2 = {}, length = {}",
            p.beta1, p.beta2, p.alpha1, p.alpha2, p.length
        ),
        format!(
            "  grid: {} points, span {:.4}, duration {:.4}",
            grid.n_points(),
            grid.span(),
            grid.duration()
        ),
        format!("  sigma_T numeric     = {:.6}", numeric),
        format!("  sigma_T closed form = {:.6}  (difference {:+.3}%)", theory, 100.0 * rel),
    ];
    if state.pump_bandwidth_warning() {
        summary.push("  note: pump bandwidth exceeds sigma_f/10; the CW factorization is strained".into());
    }

    let rows = dist
        .taus
        .iter()
        .zip(&dist.weights)
        .map(|(&t, &w)| vec![Cell::Float(t), Cell::Float(w)])
        .collect();
    let (lo, hi) = support_range(&[&dist.weights]);
    let plot = Plot {
        title: format!("timing-difference distribution (std {numeric:.4})"),
        x_label: "tau",
        y_label: "weight",
        series: vec![Series {
            name: "numeric".into(),
            points: dist.taus[lo..hi]
                .iter()
                .zip(&dist.weights[lo..hi])
                .map(|(&t, &w)| (t, w))
                .collect(),
        }],
    };
    Ok(RunOutcome {
        schema: "etesim.dispersion.v1",
        summary,
        columns: vec!["tau", "weight"],
        rows,
        payload: json!({
            "sigma_t_numeric": numeric,
            "sigma_t_closed_form": theory,
            "relative_difference": rel,
            "stats": dist.stats,
            "grid": grid,
            "distribution": { "tau": dist.taus, "weight": dist.weights },
        }),
        sidecars: vec![],
        plot: Some(plot),
    })
}

fn pulse_train_run(
    p: &PulseTrainParams,
    seed: u64,
    trials: usize,
) -> Result<PulseTrainReport, CliError> {
    let (m1, m2) = media_pair(p.alpha1, p.beta1, p.alpha2, p.beta2, p.length)?;
    let model = PulseTrainModel::new(p.omega0, p.sigma_p, p.sigma_d, trials)?;
    let grid = match (p.grid_points, p.grid_span) {
        (None, None) => None,
        _ => Some(apply_grid_override(
            suggested_pulse_train_grid(&model, &m1, &m2)?,
            p.omega0,
            p.grid_points,
            p.grid_span,
        )?),
    };
    Ok(simulate_pulse_train(
        &model,
        &m1,
        &m2,
        p.detections_per_pulse,
        grid,
        &RandomStream::new(seed, STREAM_PULSE_TRAIN),
    )?)
}

pub fn run_pulse_train(p: &PulseTrainParams, seed: u64, trials: usize) -> Result<RunOutcome, CliError> {
    let report = pulse_train_run(p, seed, trials)?;
    let width_err = report.pooled.std_error_of_std();

    let mut summary = vec![
        format!(
            "classical anti-correlated pulse train (sigma_p = {}, sigma_d = {}, {} pulses)",
            p.sigma_p, p.sigma_d, report.n_pulses
        ),
        format!(
            "  media: beta1 = {}, beta2 = {}, alpha1 = {}, alpha2 = {}, length = {}",
            p.beta1, p.beta2, p.alpha1, p.alpha2, p.length
        ),
        format!(
            "  pooled width of (t1 - t2)/sqrt(2) = {:.6} +- {:.6}",
            report.pooled.std, width_err
        ),
    ];
    if let Some(theory) = report.sigma_c_theory {
        summary.push(format!(
            "  closed-form sigma_C               = {:.6}  (difference {:+.3}%)",
            theory,
            100.0 * (report.pooled.std - theory) / theory
        ));
    }
    summary.push(format!(
        "  arm envelope widths: {:.4} / {:.4}",
        report.arm_widths.0, report.arm_widths.1
    ));
    if let Some((slope, slope_err)) = report.slope {
        summary.push(format!(
            "  timing slope vs detuning: {:.4} +- {:.4} (expected {:.4})",
            slope, slope_err, report.expected_slope
        ));
    }

    let row = vec![
        Cell::Int(report.n_pulses as u64),
        Cell::Int(report.detections_per_pulse as u64),
        Cell::Float(p.sigma_p),
        Cell::Float(p.sigma_d),
        Cell::Float(report.pooled.std),
        Cell::Float(width_err),
        report.sigma_c_theory.map_or(Cell::Missing, Cell::Float),
        Cell::Float(report.arm_widths.0),
        Cell::Float(report.arm_widths.1),
        report.slope.map_or(Cell::Missing, |s| Cell::Float(s.0)),
        report.slope.map_or(Cell::Missing, |s| Cell::Float(s.1)),
        Cell::Float(report.expected_slope),
    ];
    Ok(RunOutcome {
        schema: "etesim.pulse-train.v1",
        summary,
        columns: vec![
            "n_pulses",
            "detections_per_pulse",
            "sigma_p",
            "sigma_d",
            "sigma_c_numeric",
            "sigma_c_err",
            "sigma_c_theory",
            "arm1_width",
            "arm2_width",
            "slope",
            "slope_err",
            "slope_theory",
        ],
        rows: vec![row],
        payload: serde_json::to_value(&report).expect("report serializes"),
        sidecars: vec![],
        plot: None,
    })
}

fn chaotic_run(
    p: &ChaoticParams,
    seed: u64,
    records: usize,
) -> Result<ChaoticDispersionReport, CliError> {
    let params = ChaoticFieldParams::new(p.gamma, p.power, p.duration, p.points, records)?;
    let medium = DispersiveMedium::new(p.alpha, p.beta, p.length)?;
    Ok(identical_dispersion_experiment(
        &params,
        &medium,
        &RandomStream::new(seed, STREAM_CHAOTIC),
    )?)
}

pub fn run_chaotic(p: &ChaoticParams, seed: u64, trials: usize) -> Result<RunOutcome, CliError> {
    let report = chaotic_run(p, seed, trials)?;
    let mid = report
        .tau_grid
        .iter()
        .position(|&t| t == 0.0)
        .expect("lag grid contains zero");

    let summary = vec![
        format!(
            "chaotic light through identical media (gamma = {}, {} records x {} samples)",
            p.gamma, trials, p.points
        ),
        format!("  medium: beta = {}, alpha = {}, length = {}", p.beta, p.alpha, p.length),
        format!(
            "  g2(0) baseline  = {:.4} +- {:.4}",
            report.g2_baseline[mid], report.g2_baseline_err[mid]
        ),
        format!(
            "  g2(0) dispersed = {:.4} +- {:.4}",
            report.g2_dispersed[mid], report.g2_dispersed_err[mid]
        ),
        format!(
            "  largest pointwise curve difference: {:.4} ({:.2} std errors)",
            report.max_abs_difference, report.max_difference_sigmas
        ),
        format!(
            "  per-record trace change (normalized L2): {:.4} +- {:.4}",
            report.dissimilarity.mean, report.dissimilarity.std_error
        ),
        format!("  total samples: {}", report.n_total_samples),
    ];

    let rows = (0..report.tau_grid.len())
        .map(|i| {
            vec![
                Cell::Float(report.tau_grid[i]),
                Cell::Float(report.g2_baseline[i]),
                Cell::Float(report.g2_baseline_err[i]),
                Cell::Float(report.g2_dispersed[i]),
                Cell::Float(report.g2_dispersed_err[i]),
            ]
        })
        .collect();
    let plot = Plot {
        title: format!("g2 with and without dispersion (gamma = {})", p.gamma),
        x_label: "tau",
        y_label: "g2",
        series: vec![
            Series {
                name: "baseline".into(),
                points: report.tau_grid.iter().zip(&report.g2_baseline).map(|(&t, &g)| (t, g)).collect(),
            },
            Series {
                name: "dispersed".into(),
                points: report.tau_grid.iter().zip(&report.g2_dispersed).map(|(&t, &g)| (t, g)).collect(),
            },
        ],
    };
    Ok(RunOutcome {
        schema: "etesim.chaotic.v1",
        summary,
        columns: vec!["tau", "g2_baseline", "g2_baseline_err", "g2_dispersed", "g2_dispersed_err"],
        rows,
        payload: serde_json::to_value(&report).expect("report serializes"),
        sidecars: vec![],
        plot: Some(plot),
    })
}

/// The summed-frequency pipeline sizes its own working grids; the state
/// only carries the physics parameters, so a minimal valid grid suffices.
fn modulation_state(p: &ModulationParams) -> Result<BiphotonState, CliError> {
    let grid = FrequencyGrid::new(512, p.omega0, 16.0 * p.sigma_f)?;
    Ok(BiphotonState::new(p.omega0, p.sigma_f, p.sigma_pump, grid, grid)?)
}

fn classical_source(p: &ModulationParams) -> Result<ClassicalAnticorrelatedSource, CliError> {
    if p.linewidth == 0.0 {
        Ok(ClassicalAnticorrelatedSource::monochromatic(p.omega0))
    } else {
        Ok(ClassicalAnticorrelatedSource::new(
            p.omega0,
            vec![PulseLine { a: 1.0, b: 1.0, omega: p.omega0, probability: 1.0 }],
            p.linewidth,
        )?)
    }
}

pub fn run_modulation(p: &ModulationParams, seed: u64, trials: usize) -> Result<RunOutcome, CliError> {
    let mod1 = PhaseModulator::new(p.omega, p.depth1, p.theta1, ModulationSign::Plus)?;
    let mod2_same = PhaseModulator::new(p.omega, p.depth2, p.theta2, ModulationSign::Plus)?;
    let mod2_opposite = PhaseModulator::new(p.omega, p.depth2, p.theta2, ModulationSign::Minus)?;
    let source = classical_source(p)?;

    let closed = delta_squared_classical(&mod1, &mod2_same, &source)?;
    let mc = delta_squared_monte_carlo(
        &mod1,
        &mod2_same,
        &source,
        trials,
        &RandomStream::new(seed, STREAM_MODULATION),
    )?;

    let state = modulation_state(p)?;
    let q_opposite = quantum_modulation(&state, &mod1, &mod2_opposite)?;
    let q_same = quantum_modulation(&state, &mod1, &mod2_same)?;
    // Instantaneous-frequency estimate: baseline + |c1 + c2|^2 Omega^2 / 2,
    // exact up to O(Omega^2/sigma_f^2) corrections.
    let same_estimate = q_same.delta2_baseline
        + mod1.combine(&mod2_same)?.depth.powi(2) * p.omega * p.omega / 2.0;

    let mut summary = vec![
        format!(
            "nonlocal phase modulation (depth1 = {}, depth2 = {}, omega = {})",
            p.depth1, p.depth2, p.omega
        ),
        format!(
            "  classical sum variance: closed form = {:.6}, Monte Carlo = {:.6} +- {:.6} ({} trials)",
            closed.value, mc.mean, mc.std_error, trials
        ),
    ];
    if closed.overlap_warning {
        summary.push("  note: source linewidth >= omega/4; sidebands overlap (variance stays exact)".into());
    }
    summary.push(format!(
        "  quantum pair (sigma_f = {}, sigma_pump = {}): baseline delta2 = {:.6}",
        p.sigma_f, p.sigma_pump, q_opposite.delta2_baseline
    ));
    summary.push(format!(
        "  quantum, opposite signs: delta2 = {:.6} (ratio to baseline {:.4})",
        q_opposite.delta2, q_opposite.ratio
    ));
    summary.push(format!(
        "  quantum, same sign:      delta2 = {:.6} (estimate {:.6})",
        q_same.delta2, same_estimate
    ));

    let row = vec![
        Cell::Float(p.depth1),
        Cell::Float(p.depth2),
        Cell::Float(p.omega),
        Cell::Float(closed.value),
        Cell::Float(mc.mean),
        Cell::Float(mc.std_error),
        Cell::Float(q_opposite.delta2),
        Cell::Float(q_same.delta2),
        Cell::Float(q_same.delta2_baseline),
    ];
    let spectra: [&[f64]; 3] = [
        &q_same.baseline_spectrum,
        &q_opposite.sum_spectrum,
        &q_same.sum_spectrum,
    ];
    let (lo, hi) = support_range(&spectra);
    let series = |name: &str, values: &[f64]| Series {
        name: name.into(),
        points: q_same.sum_detunings[lo..hi]
            .iter()
            .zip(&values[lo..hi])
            .map(|(&s, &v)| (s, v))
            .collect(),
    };
    let plot = Plot {
        title: "summed-frequency spectrum of the pair".into(),
        x_label: "detuning sum",
        y_label: "probability",
        series: vec![
            series("unmodulated", &q_same.baseline_spectrum),
            series("opposite signs", &q_opposite.sum_spectrum),
            series("same sign", &q_same.sum_spectrum),
        ],
    };
    Ok(RunOutcome {
        schema: "etesim.modulation.v1",
        summary,
        columns: vec![
            "depth1",
            "depth2",
            "omega_mod",
            "delta2_classical",
            "delta2_mc",
            "mc_err",
            "delta2_quantum_opposite",
            "delta2_quantum_same",
            "delta2_baseline",
        ],
        rows: vec![row],
        payload: json!({
            "delta2_classical": closed.value,
            "overlap_warning": closed.overlap_warning,
            "monte_carlo": mc,
            "delta2_quantum_opposite": q_opposite.delta2,
            "ratio_opposite": q_opposite.ratio,
            "delta2_quantum_same": q_same.delta2,
            "same_sign_estimate": same_estimate,
            "delta2_baseline": q_same.delta2_baseline,
            "spectrum": {
                "detuning": q_same.sum_detunings,
                "unmodulated": q_same.baseline_spectrum,
                "opposite": q_opposite.sum_spectrum,
                "same_sign": q_same.sum_spectrum,
            },
        }),
        sidecars: vec![],
        plot: Some(plot),
    })
}

fn franson_setup(p: &FransonParams) -> Result<FransonSetup, CliError> {
    Ok(FransonSetup::new(
        p.delta_t,
        p.phi1,
        p.phi2,
        p.tau_c,
        p.window.unwrap_or(p.delta_t / 4.0),
    )?)
}

pub fn run_franson(p: &FransonParams, seed: u64, trials: usize) -> Result<RunOutcome, CliError> {
    let setup = franson_setup(p)?;
    let scan = quantum_fringe(&setup, p.scan_phases)?;
    let nu_quantum = fringe_visibility(&scan)?;
    let om = ou_mandel_simulate(&setup, p.scan_phases, trials, &RandomStream::new(seed, STREAM_FRANSON))?;

    let (a, ap, b, bp) = CHSH_OPTIMAL_SETTINGS;
    let chsh_quantum = chsh_report(&CorrelationFunction::quantum(), a, ap, b, bp);
    let classical_corr =
        CorrelationFunction::with_visibility(om.visibility, Provenance::ClassicalModel)?;
    let chsh_classical = chsh_report(&classical_corr, a, ap, b, bp);

    let profile = coincidence_profile_no_interferometers(p.tau_c)?;
    let bound = classical_visibility_bound(&profile, p.delta_t)?;
    let verdict = violation_report(&profile, p.delta_t, nu_quantum)?;
    let verdict_classical = violation_report(&profile, p.delta_t, om.visibility)?;

    let summary = vec![
        format!(
            "two-photon interferometry (delta_t = {}, tau_c = {}, window = {})",
            p.delta_t, p.tau_c, setup.window
        ),
        format!(
            "  quantum fringe visibility:  {} (closed form, {} phase points)",
            nu_quantum, p.scan_phases
        ),
        format!(
            "  classical-laser model fit:  {:.4} +- {:.4} ({} trials per point)",
            om.visibility, om.visibility_err, trials
        ),
        format!(
            "  CHSH S: quantum {:.6}, classical model {:.4}",
            chsh_quantum.s, chsh_classical.s
        ),
        format!(
            "  classical visibility bound at delta_t: {:.3e} -> quantum violates: {}",
            bound, verdict.violated
        ),
    ];

    let rows = (0..p.scan_phases)
        .map(|k| {
            vec![
                Cell::Float(om.phi_sums[k]),
                Cell::Float(scan[k].1),
                Cell::Float(om.rates[k]),
                Cell::Float(om.rate_errors[k]),
                Cell::Float(nu_quantum),
                Cell::Float(om.visibility),
            ]
        })
        .collect();

    let chsh_payload = json!({ "quantum": chsh_quantum, "classical_model": chsh_classical });
    let bound_payload = json!({
        "delta_t_over_tau": verdict.delta_t_over_tau,
        "bound": bound,
        "nu_quantum": nu_quantum,
        "nu_classical": om.visibility,
        "violated": verdict.violated,
        "violated_classical": verdict_classical.violated,
    });
    let plot = Plot {
        title: format!("coincidence fringes (delta_t = {})", p.delta_t),
        x_label: "phase sum",
        y_label: "rate",
        series: vec![
            Series {
                name: "quantum".into(),
                points: scan.clone(),
            },
            Series {
                name: "classical model".into(),
                points: om.phi_sums.iter().zip(&om.rates).map(|(&s, &r)| (s, r)).collect(),
            },
        ],
    };
    Ok(RunOutcome {
        schema: "etesim.franson.v1",
        summary,
        columns: vec!["phi_sum", "rate_quantum", "rate_ou_mandel", "err", "nu_quantum", "nu_classical"],
        rows,
        payload: json!({
            "fringe": {
                "phi_sum": om.phi_sums,
                "rate_quantum": scan.iter().map(|p| p.1).collect::<Vec<f64>>(),
                "rate_ou_mandel": om.rates,
                "err": om.rate_errors,
            },
            "visibility_quantum": nu_quantum,
            "visibility_classical": om.visibility,
            "visibility_classical_err": om.visibility_err,
            "marginal": { "mean": om.marginal1, "err": om.marginal1_errors },
            "chsh": chsh_payload.clone(),
            "bound": bound_payload.clone(),
        }),
        sidecars: vec![
            Sidecar { suffix: "_chsh", schema: "etesim.franson.chsh.v1", payload: chsh_payload },
            Sidecar { suffix: "_bound", schema: "etesim.franson.bound.v1", payload: bound_payload },
        ],
        plot: Some(plot),
    })
}

/// One side's metric values: (name, value, std error).
struct SideResult {
    metrics: Vec<(&'static str, f64, f64)>,
    notes: Vec<String>,
}

fn franson_classical_chsh(visibility: f64) -> Result<ChshReport, CliError> {
    let (a, ap, b, bp) = CHSH_OPTIMAL_SETTINGS;
    let corr = CorrelationFunction::with_visibility(visibility, Provenance::ClassicalModel)?;
    Ok(chsh_report(&corr, a, ap, b, bp))
}

fn eval_side(cfg: &RunConfig) -> Result<SideResult, CliError> {
    match (cfg.experiment, cfg.model) {
        (Family::Dispersion, Model::Quantum) => {
            let p: DispersionParams = parse_params(&cfg.parameters)?;
            let (dist, theory, _, _) = quantum_timing(&p)?;
            Ok(SideResult {
                metrics: vec![("correlation_width", dist.stats.std, 0.0)],
                notes: vec![format!(
                    "  quantum width {:.6} (closed form {:.6})",
                    dist.stats.std, theory
                )],
            })
        }
        (Family::Dispersion | Family::PulseTrain, Model::Classical) => {
            let p: PulseTrainParams = parse_params(&cfg.parameters)?;
            let report = pulse_train_run(&p, cfg.seed, cfg.trials)?;
            let mut notes = vec![format!(
                "  classical width {:.6} +- {:.6} ({} pulses)",
                report.pooled.std,
                report.pooled.std_error_of_std(),
                report.n_pulses
            )];
            if let Some(theory) = report.sigma_c_theory {
                notes.push(format!("  classical closed form {theory:.6}"));
            }
            Ok(SideResult {
                metrics: vec![(
                    "correlation_width",
                    report.pooled.std,
                    report.pooled.std_error_of_std(),
                )],
                notes,
            })
        }
        (Family::PulseTrain, Model::Quantum) => Err(CliError::Config(
            "the pulse-train family is classical-only; put the quantum side in the dispersion family".into(),
        )),
        (Family::Chaotic, Model::Classical) => {
            let p: ChaoticParams = parse_params(&cfg.parameters)?;
            let report = chaotic_run(&p, cfg.seed, cfg.trials)?;
            let mid = report.tau_grid.iter().position(|&t| t == 0.0).expect("lag grid contains zero");
            Ok(SideResult {
                metrics: vec![
                    ("g2_zero_baseline", report.g2_baseline[mid], report.g2_baseline_err[mid]),
                    ("g2_zero_dispersed", report.g2_dispersed[mid], report.g2_dispersed_err[mid]),
                ],
                notes: vec![],
            })
        }
        (Family::Chaotic, Model::Quantum) => Err(CliError::Config(
            "the chaotic family models classical thermal light only".into(),
        )),
        (Family::Modulation, Model::Quantum) => {
            let p: ModulationParams = parse_params(&cfg.parameters)?;
            let mod1 = PhaseModulator::new(p.omega, p.depth1, p.theta1, ModulationSign::Plus)?;
            let mod2 = PhaseModulator::new(p.omega, p.depth2, p.theta2, p.sign2.to_core())?;
            let state = modulation_state(&p)?;
            let q = quantum_modulation(&state, &mod1, &mod2)?;
            Ok(SideResult {
                metrics: vec![("delta2", q.delta2, 0.0)],
                notes: vec![format!(
                    "  quantum delta2 {:.6} (unmodulated baseline {:.6})",
                    q.delta2, q.delta2_baseline
                )],
            })
        }
        (Family::Modulation, Model::Classical) => {
            let p: ModulationParams = parse_params(&cfg.parameters)?;
            let mod1 = PhaseModulator::new(p.omega, p.depth1, p.theta1, ModulationSign::Plus)?;
            let mod2 = PhaseModulator::new(p.omega, p.depth2, p.theta2, p.sign2.to_core())?;
            let closed = delta_squared_classical(&mod1, &mod2, &classical_source(&p)?)?;
            Ok(SideResult {
                metrics: vec![("delta2", closed.value, 0.0)],
                notes: vec![format!("  classical delta2 {:.6} (closed form)", closed.value)],
            })
        }
        (Family::Franson, Model::Quantum) => {
            let p: FransonParams = parse_params(&cfg.parameters)?;
            let setup = franson_setup(&p)?;
            let nu = fringe_visibility(&quantum_fringe(&setup, p.scan_phases)?)?;
            let (a, ap, b, bp) = CHSH_OPTIMAL_SETTINGS;
            let s = chsh_report(&CorrelationFunction::quantum(), a, ap, b, bp).s;
            Ok(SideResult {
                metrics: vec![("visibility", nu, 0.0), ("chsh_s", s, 0.0)],
                notes: vec![],
            })
        }
        (Family::Franson, Model::Classical) => {
            let p: FransonParams = parse_params(&cfg.parameters)?;
            let setup = franson_setup(&p)?;
            let om = ou_mandel_simulate(
                &setup,
                p.scan_phases,
                cfg.trials,
                &RandomStream::new(cfg.seed, STREAM_FRANSON),
            )?;
            let s = franson_classical_chsh(om.visibility)?.s;
            let s_err = franson_classical_chsh(1.0)?.s * om.visibility_err;
            Ok(SideResult {
                metrics: vec![
                    ("visibility", om.visibility, om.visibility_err),
                    ("chsh_s", s, s_err),
                ],
                notes: vec![],
            })
        }
    }
}

/// Mixed dispersion-family compare through the shared core comparison,
/// which also enforces the equal-bandwidth precondition.
fn dispersion_cross_comparison(
    left: &RunConfig,
    right: &RunConfig,
    summary: &mut Vec<String>,
) -> Result<(SideResult, SideResult), CliError> {
    let (q_cfg, c_cfg) = if left.model == Model::Quantum { (left, right) } else { (right, left) };
    let qp: DispersionParams = parse_params(&q_cfg.parameters)?;
    let cp: PulseTrainParams = parse_params(&c_cfg.parameters)?;
    let media_match = qp.beta1 == cp.beta1
        && qp.beta2 == cp.beta2
        && qp.alpha1 == cp.alpha1
        && qp.alpha2 == cp.alpha2
        && qp.length == cp.length;
    if !media_match {
        return Err(CliError::Config(
            "both sides must share the same media (beta1, beta2, alpha1, alpha2, length)".into(),
        ));
    }
    let (m1, m2) = media_pair(qp.alpha1, qp.beta1, qp.alpha2, qp.beta2, qp.length)?;
    let suggested = suggested_biphoton_grid(qp.omega0, qp.sigma_f, qp.sigma_pump, &[(m1, m2)])?;
    let grid = apply_grid_override(suggested, qp.omega0, qp.grid_points, qp.grid_span)?;
    let state = BiphotonState::new(qp.omega0, qp.sigma_f, qp.sigma_pump, grid, grid)?;
    let model = PulseTrainModel::new(cp.omega0, cp.sigma_p, cp.sigma_d, c_cfg.trials)?;
    let cmp = correlation_width_comparison(
        &state,
        &model,
        &m1,
        &m2,
        &RandomStream::new(c_cfg.seed, STREAM_PULSE_TRAIN),
    )?;
    summary.push(format!(
        "  matched bandwidths (classical/quantum = {:.3}); width ratio classical/quantum = {:.3}",
        cmp.bandwidth_ratio, cmp.ratio
    ));
    let quantum = SideResult {
        metrics: vec![("correlation_width", cmp.quantum_width, 0.0)],
        notes: vec![],
    };
    let classical = SideResult {
        metrics: vec![("correlation_width", cmp.classical_width, cmp.classical_width_err)],
        notes: vec![],
    };
    Ok(if left.model == Model::Quantum { (quantum, classical) } else { (classical, quantum) })
}

/// Agreement threshold: 3 combined std errors or 5% of the larger value,
/// whichever is looser.
fn agreement_tolerance(vl: f64, el: f64, vr: f64, er: f64) -> f64 {
    let statistical = 3.0 * (el * el + er * er).sqrt();
    statistical.max(0.05 * vl.abs().max(vr.abs()))
}

pub fn run_compare(left: &RunConfig, right: &RunConfig) -> Result<RunOutcome, CliError> {
    if left.experiment != right.experiment {
        return Err(CliError::Config(format!(
            "config families differ: {} vs {}",
            left.experiment.name(),
            right.experiment.name()
        )));
    }
    let family = left.experiment;
    let mut summary = vec![format!(
        "compare: {} family — left model {} vs right model {}",
        family.name(),
        left.model.name(),
        right.model.name()
    )];
    let (left_side, right_side) = if family == Family::Dispersion && left.model != right.model {
        dispersion_cross_comparison(left, right, &mut summary)?
    } else {
        (eval_side(left)?, eval_side(right)?)
    };
    summary.extend(left_side.notes.iter().cloned());
    summary.extend(right_side.notes.iter().cloned());

    let mut rows = Vec::new();
    let mut metrics = Vec::new();
    let mut all_reproduced = true;
    for (&(name, vl, el), &(_, vr, er)) in left_side.metrics.iter().zip(&right_side.metrics) {
        let difference = (vl - vr).abs();
        let tolerance = agreement_tolerance(vl, el, vr, er);
        let reproduces = difference <= tolerance;
        all_reproduced &= reproduces;
        summary.push(format!(
            "  {name}: left {vl:.6} +- {el:.6}, right {vr:.6} +- {er:.6} -> {}",
            if reproduces { "agree" } else { "DIFFER" }
        ));
        rows.push(vec![
            Cell::Text(name.into()),
            Cell::Text(left.model.name().into()),
            Cell::Text(right.model.name().into()),
            Cell::Float(vl),
            Cell::Float(el),
            Cell::Float(vr),
            Cell::Float(er),
            Cell::Float(difference),
            Cell::Float(tolerance),
            Cell::Text(if reproduces { "yes" } else { "no" }.into()),
        ]);
        metrics.push(json!({
            "metric": name,
            "left_value": vl,
            "left_err": el,
            "right_value": vr,
            "right_err": er,
            "difference": difference,
            "tolerance": tolerance,
            "classical_reproduces_quantum": reproduces,
        }));
    }
    summary.push(format!(
        "verdict — classical reproduces quantum on every metric: {}",
        if all_reproduced { "yes" } else { "no" }
    ));

    Ok(RunOutcome {
        schema: "etesim.compare.v1",
        summary,
        columns: vec![
            "metric",
            "left_model",
            "right_model",
            "left_value",
            "left_err",
            "right_value",
            "right_err",
            "difference",
            "tolerance",
            "classical_reproduces_quantum",
        ],
        rows,
        payload: json!({
            "family": family.name(),
            "metrics": metrics,
            "all_reproduced": all_reproduced,
        }),
        sidecars: vec![],
        plot: None,
    })
}
