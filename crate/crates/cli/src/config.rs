//! JSON experiment configuration.

use std::f64::consts::PI;

use anharmonic_core::dynamics::{Anharmonicity, AmplitudeConvention, ProtocolParams, Validity};
use anharmonic_core::metrology::MeasurementConfig;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Largest `N_p` accepted by the likelihood-level commands.
pub const MAX_SWEEP_PHOTONS: f64 = 35.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    RatioCurve,
    ValidateMap,
    QfiTable,
    Estimate,
    Losses,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::RatioCurve => "ratio-curve",
            Command::ValidateMap => "validate-map",
            Command::QfiTable => "qfi-table",
            Command::Estimate => "estimate",
            Command::Losses => "losses",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Physical parameters as written in the config. The field amplitude is
/// given either as `n_p` (real `α = √N_p`) or as `alpha = [re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub delta: f64,
    pub nbar: f64,
    pub n_p: Option<f64>,
    pub alpha: Option<[f64; 2]>,
    pub omega_m: f64,
    pub epsilon: f64,
    pub dim_c: usize,
    pub dim_m: usize,
    /// Explicit `|A|²` for the frequency shift.
    pub amplitude_sq: Option<f64>,
    pub truncation_threshold: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        let p = ProtocolParams::default();
        Self {
            lambda: p.lambda,
            gamma: p.gamma,
            delta: p.delta,
            nbar: p.nbar,
            n_p: None,
            alpha: None,
            omega_m: p.omega_m,
            epsilon: p.epsilon,
            dim_c: p.dim_c,
            dim_m: p.dim_m,
            amplitude_sq: None,
            truncation_threshold: p.truncation_threshold,
        }
    }
}

impl ParamsConfig {
    pub fn to_params(&self, strict: bool) -> Result<ProtocolParams, CliError> {
        let alpha = match (self.n_p, self.alpha) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "params: give either n_p or alpha, not both".into(),
                ))
            }
            (Some(n), None) => {
                if !(n >= 0.0 && n.is_finite()) {
                    return Err(CliError::Config("params.n_p must be finite and >= 0".into()));
                }
                Complex64::new(n.sqrt(), 0.0)
            }
            (None, Some([re, im])) => Complex64::new(re, im),
            (None, None) => ProtocolParams::default().alpha,
        };
        let p = ProtocolParams {
            lambda: self.lambda,
            gamma: self.gamma,
            delta: self.delta,
            nbar: self.nbar,
            alpha,
            omega_m: self.omega_m,
            epsilon: self.epsilon,
            dim_c: self.dim_c,
            dim_m: self.dim_m,
            amplitude: match self.amplitude_sq {
                Some(a2) => AmplitudeConvention::Explicit(a2),
                None => AmplitudeConvention::PhotonDisplacement,
            },
            truncation_threshold: self.truncation_threshold,
            validity: if strict { Validity::Strict } else { Validity::Warn },
        };
        p.validate().map_err(|e| CliError::Config(format!("params: {e}")))?;
        Ok(p)
    }
}

/// Parameter that a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Lambda,
    Gamma,
    Delta,
    /// `γ` for quartic rows, `δ` for cubic rows.
    Strength,
    Nbar,
    NP,
    OmegaM,
    Epsilon,
    Phi,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Lambda => "lambda",
            Axis::Gamma => "gamma",
            Axis::Delta => "delta",
            Axis::Strength => "strength",
            Axis::Nbar => "nbar",
            Axis::NP => "n_p",
            Axis::OmegaM => "omega_m",
            Axis::Epsilon => "epsilon",
            Axis::Phi => "phi",
        }
    }

    pub fn apply(
        self,
        value: f64,
        kind: Anharmonicity,
        params: &mut ProtocolParams,
        measurement: &mut MeasurementConfig,
    ) {
        match self {
            Axis::Lambda => params.lambda = value,
            Axis::Gamma => params.gamma = value,
            Axis::Delta => params.delta = value,
            Axis::Strength => *params = params.with_strength(kind, value),
            Axis::Nbar => params.nbar = value,
            Axis::NP => *params = params.with_photon_number(value.max(0.0)),
            Axis::OmegaM => params.omega_m = value,
            Axis::Epsilon => params.epsilon = value,
            Axis::Phi => measurement.phi = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: Axis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<String>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioSettings {
    /// Scan this many phases in `[0, π)` and refine; `None` keeps the
    /// configured `phi`.
    pub phase_scan: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QfiSettings {
    /// Number of experimental repetitions `M`.
    pub m: u64,
}

impl Default for QfiSettings {
    fn default() -> Self {
        Self { m: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSettings {
    pub crb: bool,
    pub closure: bool,
    pub m: usize,
    pub repeats: usize,
    pub bootstrap: usize,
    pub scale: f64,
    pub bracket: Option<[f64; 2]>,
    pub bracket_sigmas: f64,
    pub rounds: usize,
    pub samples_per_round: usize,
    pub significance: f64,
}

impl Default for EstimateSettings {
    fn default() -> Self {
        Self {
            crb: true,
            closure: true,
            m: 1000,
            repeats: 200,
            bootstrap: 1000,
            scale: 1.0,
            bracket: None,
            bracket_sigmas: 8.0,
            rounds: 5,
            samples_per_round: 100_000,
            significance: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub params: ParamsConfig,
    pub measurement: MeasurementConfig,
    pub kinds: Vec<Anharmonicity>,
    pub sweep: Option<Sweep>,
    pub output: OutputConfig,
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub ratio: RatioSettings,
    pub qfi: QfiSettings,
    pub estimate: EstimateSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: None,
            params: ParamsConfig::default(),
            measurement: MeasurementConfig::homodyne(PI / 2.0),
            kinds: vec![Anharmonicity::Quartic, Anharmonicity::Cubic],
            sweep: None,
            output: OutputConfig::default(),
            seed: 0,
            threads: 0,
            ratio: RatioSettings::default(),
            qfi: QfiSettings::default(),
            estimate: EstimateSettings::default(),
        }
    }
}

/// One resolved sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub axis_value: Option<f64>,
    /// Photon number as configured, free of the `√N_p` round trip.
    pub n_p: f64,
    pub kind: Anharmonicity,
    pub params: ProtocolParams,
    pub measurement: MeasurementConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn axis_name(&self) -> Option<&'static str> {
        self.sweep.as_ref().map(|s| s.axis.name())
    }

    /// Checks everything that does not need a numerical run and expands the
    /// sweep into points, in sweep order with kinds innermost.
    pub fn resolve(&self, command: Command, strict: bool) -> Result<Vec<Point>, CliError> {
        if let Some(c) = self.command {
            if c != command {
                return Err(CliError::Config(format!(
                    "config is for `{}` but `{}` was requested",
                    c.name(),
                    command.name()
                )));
            }
        }
        if self.kinds.is_empty() {
            return Err(CliError::Config("kinds must not be empty".into()));
        }
        self.measurement
            .validate()
            .map_err(|e| CliError::Config(format!("measurement: {e}")))?;
        let base = self.params.to_params(strict)?;
        let values: Vec<Option<f64>> = match &self.sweep {
            None => vec![None],
            Some(s) if s.values.is_empty() => {
                return Err(CliError::Config(format!(
                    "sweep over `{}` has no values",
                    s.axis.name()
                )))
            }
            Some(s) => s.values.iter().map(|v| Some(*v)).collect(),
        };
        let axis = self.sweep.as_ref().map(|s| s.axis);
        let mut points = Vec::with_capacity(values.len() * self.kinds.len());
        for v in values {
            for &kind in &self.kinds {
                let mut params = base;
                let mut measurement = self.measurement;
                if let (Some(axis), Some(v)) = (axis, v) {
                    if !v.is_finite() {
                        return Err(CliError::Config(format!(
                            "sweep value {v} for `{}` is not finite",
                            axis.name()
                        )));
                    }
                    axis.apply(v, kind, &mut params, &mut measurement);
                }
                params
                    .validate()
                    .map_err(|e| CliError::Config(format!("sweep point {v:?}: {e}")))?;
                let n_p = match (axis, v) {
                    (Some(Axis::NP), Some(v)) => v.max(0.0),
                    _ => self.params.n_p.unwrap_or_else(|| params.photon_number()),
                };
                points.push(Point {
                    axis_value: v,
                    n_p,
                    kind,
                    params,
                    measurement,
                });
            }
        }
        match command {
            Command::RatioCurve | Command::Estimate => {
                if let Some(p) = points
                    .iter()
                    .find(|p| p.n_p > MAX_SWEEP_PHOTONS)
                {
                    return Err(CliError::Config(format!(
                        "N_p = {} exceeds {MAX_SWEEP_PHOTONS} for `{}`",
                        p.n_p,
                        command.name()
                    )));
                }
            }
            _ => {}
        }
        if command == Command::RatioCurve {
            if let Some(0) = self.ratio.phase_scan {
                return Err(CliError::Config("ratio.phase_scan must be >= 1".into()));
            }
        }
        if command == Command::Estimate {
            let e = &self.estimate;
            if e.crb && (e.m == 0 || e.repeats < 2) {
                return Err(CliError::Config(
                    "estimate needs m >= 1 and repeats >= 2".into(),
                ));
            }
            if e.closure && (e.rounds == 0 || e.samples_per_round == 0) {
                return Err(CliError::Config(
                    "estimate needs rounds >= 1 and samples_per_round >= 1".into(),
                ));
            }
            if !(e.scale.is_finite() && e.scale != 0.0) {
                return Err(CliError::Config("estimate.scale must be finite and nonzero".into()));
            }
        }
        Ok(points)
    }
}
