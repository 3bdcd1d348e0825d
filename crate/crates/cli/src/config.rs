//! Run configuration: resolution of defaults, config files, and flag
//! overrides into the record embedded in every output file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Experiment family, as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Dispersion,
    PulseTrain,
    Chaotic,
    Modulation,
    Franson,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Dispersion => "dispersion",
            Family::PulseTrain => "pulse-train",
            Family::Chaotic => "chaotic",
            Family::Modulation => "modulation",
            Family::Franson => "franson",
        }
    }

    /// Default trial count; the meaning is per-family (pulses, records,
    /// Monte Carlo trials, trials per phase point). Dispersion runs are
    /// deterministic and take no trials.
    pub fn default_trials(self) -> usize {
        match self {
            Family::Dispersion => 0,
            Family::PulseTrain => 20_000,
            Family::Chaotic => 400,
            Family::Modulation => 100_000,
            Family::Franson => 2_000,
        }
    }
}

/// Which side of the quantum/classical comparison a config describes.
/// Only `compare` reads it; plain runs evaluate whatever the family needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    #[default]
    Quantum,
    Classical,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Quantum => "quantum",
            Model::Classical => "classical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// The fully resolved record of one run, embedded verbatim in every output
/// file. A run is reproducible from this block alone (worker threads are
/// deliberately excluded: they never change results).
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub experiment: Family,
    pub model: Model,
    pub seed: u64,
    pub trials: usize,
    pub format: Format,
    pub out: PathBuf,
    pub parameters: serde_json::Value,
}

/// What a config file may contain: everything beyond the family is optional
/// and falls back to the same defaults the flags use.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    experiment: Family,
    #[serde(default)]
    model: Model,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    trials: Option<usize>,
    #[serde(default)]
    format: Option<Format>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    parameters: serde_json::Value,
}

fn read_raw(path: &Path) -> Result<RawRunConfig, CliError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parse a family's typed parameter block; missing keys take defaults,
/// unknown keys are rejected by name.
pub fn parse_params<P: DeserializeOwned + Default>(value: &serde_json::Value) -> Result<P, CliError> {
    if value.is_null() {
        return Ok(P::default());
    }
    serde_json::from_value(value.clone())
        .map_err(|e| CliError::Config(format!("bad parameters: {e}")))
}

/// Flag values shared by every run subcommand.
pub struct CommonOverrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
}

/// Start from defaults or `--config`, then let flags win field by field.
/// The caller applies its own parameter flags to the returned struct and
/// re-embeds it with [`embed_parameters`].
pub fn resolve<P: DeserializeOwned + Default>(
    family: Family,
    over: &CommonOverrides,
) -> Result<(RunConfig, P), CliError> {
    let raw = match &over.config {
        Some(path) => {
            let raw = read_raw(path)?;
            if raw.experiment != family {
                return Err(CliError::Config(format!(
                    "config file is for the {} family, not {}",
                    raw.experiment.name(),
                    family.name()
                )));
            }
            raw
        }
        None => RawRunConfig {
            experiment: family,
            model: Model::default(),
            seed: 0,
            trials: None,
            format: None,
            out: None,
            parameters: serde_json::Value::Null,
        },
    };
    let params: P = parse_params(&raw.parameters)?;
    let format = over.format.or(raw.format).unwrap_or(Format::Csv);
    let out = over
        .out
        .clone()
        .or(raw.out)
        .unwrap_or_else(|| PathBuf::from(format!("{}.{}", family.name(), format.extension())));
    let config = RunConfig {
        experiment: family,
        model: raw.model,
        seed: over.seed.unwrap_or(raw.seed),
        trials: over.trials.or(raw.trials).unwrap_or_else(|| family.default_trials()),
        format,
        out,
        parameters: serde_json::Value::Null,
    };
    Ok((config, params))
}

/// Re-serialize the final (possibly flag-overridden) parameters into the
/// embeddable config block.
pub fn embed_parameters<P: Serialize>(config: &mut RunConfig, params: &P) {
    config.parameters = serde_json::to_value(params).expect("parameters serialize to JSON");
}

/// Load one side of a `compare` pair; parameters stay untyped until the
/// family/model dispatch.
pub fn load_side(path: &Path) -> Result<RunConfig, CliError> {
    let raw = read_raw(path)?;
    let format = raw.format.unwrap_or(Format::Csv);
    Ok(RunConfig {
        experiment: raw.experiment,
        model: raw.model,
        seed: raw.seed,
        trials: raw.trials.unwrap_or_else(|| raw.experiment.default_trials()),
        format,
        out: raw
            .out
            .unwrap_or_else(|| PathBuf::from(format!("{}.{}", raw.experiment.name(), format.extension()))),
        parameters: raw.parameters,
    })
}

/// Entangled-pair source and media for the timing-difference experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionParams {
    pub beta1: f64,
    pub beta2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub length: f64,
    pub sigma_f: f64,
    pub sigma_pump: f64,
    pub omega0: f64,
    pub grid_points: Option<usize>,
    pub grid_span: Option<f64>,
}

impl Default for DispersionParams {
    fn default() -> Self {
        Self {
            beta1: 1.0,
            beta2: -1.0,
            alpha1: 0.0,
            alpha2: 0.0,
            length: 1.0,
            sigma_f: 1.0,
            sigma_pump: 0.0,
            omega0: 0.0,
            grid_points: None,
            grid_span: None,
        }
    }
}

/// Classical anti-correlated pulse train through the same kind of media.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseTrainParams {
    pub beta1: f64,
    pub beta2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub length: f64,
    pub sigma_p: f64,
    pub sigma_d: f64,
    pub omega0: f64,
    pub detections_per_pulse: usize,
    pub grid_points: Option<usize>,
    pub grid_span: Option<f64>,
}

impl Default for PulseTrainParams {
    fn default() -> Self {
        Self {
            beta1: 1.0,
            beta2: -1.0,
            alpha1: 0.0,
            alpha2: 0.0,
            length: 1.0,
            sigma_p: 1.0,
            sigma_d: 0.0,
            omega0: 0.0,
            detections_per_pulse: 1,
            grid_points: None,
            grid_span: None,
        }
    }
}

/// Chaotic (thermal) light with one medium applied identically to both
/// detection arms.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChaoticParams {
    /// Inverse correlation time of the complex field.
    pub gamma: f64,
    pub power: f64,
    pub duration: f64,
    pub points: usize,
    pub alpha: f64,
    pub beta: f64,
    pub length: f64,
}

impl Default for ChaoticParams {
    fn default() -> Self {
        Self { gamma: 1.0, power: 1.0, duration: 128.0, points: 2048, alpha: 0.0, beta: 1.0, length: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SignName {
    Plus,
    Minus,
}

impl SignName {
    pub fn to_core(self) -> etesim_core::modulation::ModulationSign {
        match self {
            SignName::Plus => etesim_core::modulation::ModulationSign::Plus,
            SignName::Minus => etesim_core::modulation::ModulationSign::Minus,
        }
    }
}

/// Remote phase modulators and the sources they act on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModulationParams {
    pub depth1: f64,
    pub depth2: f64,
    pub omega: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// Sign of modulator 2 for the single-config quantum metric in
    /// `compare`; plain runs always evaluate both signs.
    pub sign2: SignName,
    /// Gaussian linewidth of the classical source's lines.
    pub linewidth: f64,
    pub sigma_f: f64,
    pub sigma_pump: f64,
    pub omega0: f64,
}

impl Default for ModulationParams {
    fn default() -> Self {
        Self {
            depth1: 1.0,
            depth2: 1.0,
            omega: 1.0,
            theta1: 0.0,
            theta2: 0.0,
            sign2: SignName::Minus,
            linewidth: 0.0,
            sigma_f: 80.0,
            sigma_pump: 0.25,
            omega0: 0.0,
        }
    }
}

/// Unbalanced interferometer pair and the source coherence time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FransonParams {
    pub delta_t: f64,
    pub tau_c: f64,
    pub phi1: f64,
    pub phi2: f64,
    /// Coincidence window; default ΔT/4.
    pub window: Option<f64>,
    pub scan_phases: usize,
}

impl Default for FransonParams {
    fn default() -> Self {
        Self { delta_t: 12.0, tau_c: 1.0, phi1: 0.0, phi2: 0.0, window: None, scan_phases: 32 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_without_a_file() {
        let over = CommonOverrides { config: None, seed: None, trials: None, format: None, out: None };
        let (cfg, p): (RunConfig, ModulationParams) = resolve(Family::Modulation, &over).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.trials, 100_000);
        assert_eq!(cfg.out, PathBuf::from("modulation.csv"));
        assert_eq!(p.depth1, 1.0);
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(
            &path,
            r#"{"experiment":"franson","seed":5,"trials":3000,"parameters":{"delta_t":7.0}}"#,
        )
        .unwrap();
        let over = CommonOverrides {
            config: Some(path),
            seed: Some(9),
            trials: None,
            format: Some(Format::Json),
            out: None,
        };
        let (cfg, p): (RunConfig, FransonParams) = resolve(Family::Franson, &over).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.trials, 3000);
        assert_eq!(cfg.out, PathBuf::from("franson.json"));
        assert_eq!(p.delta_t, 7.0);
        assert_eq!(p.tau_c, 1.0);
    }

    #[test]
    fn unknown_parameter_keys_are_rejected_by_name() {
        let v: serde_json::Value = serde_json::from_str(r#"{"sigma_x": 1.0}"#).unwrap();
        let err = parse_params::<DispersionParams>(&v).unwrap_err();
        assert!(err.to_string().contains("sigma_x"), "{err}");
    }

    #[test]
    fn config_family_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"experiment":"chaotic"}"#).unwrap();
        let over = CommonOverrides {
            config: Some(path),
            seed: None,
            trials: None,
            format: None,
            out: None,
        };
        let err = resolve::<FransonParams>(Family::Franson, &over).unwrap_err();
        assert!(err.to_string().contains("chaotic"), "{err}");
    }
}
