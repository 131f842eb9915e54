//! Run configuration: reference-experiment defaults, overridable by a
//! key=value config file and by flags (flags win).

use std::fmt;
use std::path::PathBuf;

use flash_core::opa::{GainParameter, Truncation, DEFAULT_NUMERIC_GAIN_CAP};
use flash_core::{DetectorModel, ImperfectionModel};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("config line {line}: expected key=value, got {text:?}")]
    MalformedLine { line: usize, text: String },
    #[error("config line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("bad value for {key}: {value:?} ({reason})")]
    BadValue { key: String, value: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Auto,
    Analytic,
    Numeric,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Auto => "auto",
            Backend::Analytic => "analytic",
            Backend::Numeric => "numeric",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationSpec {
    Auto,
    Fixed(u64),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub gain: f64,
    pub vin: f64,
    pub p_inject: f64,
    pub eta: f64,
    pub bs: f64,
    pub noise_sigma: f64,
    pub trials: u64,
    pub seed: u64,
    pub truncation: TruncationSpec,
    pub backend: Backend,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gain: 4.45,
            vin: 0.85,
            p_inject: 0.4,
            eta: 0.13,
            bs: 0.5,
            noise_sigma: 0.0,
            trials: 2500,
            seed: 1,
            truncation: TruncationSpec::Auto,
            backend: Backend::Auto,
            out: None,
            format: OutputFormat::Csv,
        }
    }
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

pub fn parse_backend(key: &str, value: &str) -> Result<Backend, ConfigError> {
    match value {
        "auto" => Ok(Backend::Auto),
        "analytic" => Ok(Backend::Analytic),
        "numeric" => Ok(Backend::Numeric),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected auto|analytic|numeric".to_string(),
        }),
    }
}

pub fn parse_format(key: &str, value: &str) -> Result<OutputFormat, ConfigError> {
    match value {
        "csv" => Ok(OutputFormat::Csv),
        "json" => Ok(OutputFormat::Json),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected csv|json".to_string(),
        }),
    }
}

pub fn parse_truncation(key: &str, value: &str) -> Result<TruncationSpec, ConfigError> {
    if value == "auto" {
        Ok(TruncationSpec::Auto)
    } else {
        Ok(TruncationSpec::Fixed(parse_as::<u64>(key, value)?))
    }
}

impl RunConfig {
    /// Applies one config-file key. Key names equal the long flag names.
    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        match key {
            "gain" => self.gain = parse_as(key, value)?,
            "vin" => self.vin = parse_as(key, value)?,
            "p-inject" => self.p_inject = parse_as(key, value)?,
            "eta" => self.eta = parse_as(key, value)?,
            "bs" => self.bs = parse_as(key, value)?,
            "noise-sigma" => self.noise_sigma = parse_as(key, value)?,
            "trials" => self.trials = parse_as(key, value)?,
            "seed" => self.seed = parse_as(key, value)?,
            "truncation" => self.truncation = parse_truncation(key, value)?,
            "backend" => self.backend = parse_backend(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "format" => self.format = parse_format(key, value)?,
            _ => {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            }
        }
        Ok(())
    }

    /// Reads a UTF-8 key=value file; `#` starts a full-line comment.
    pub fn apply_file(&mut self, path: &PathBuf) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::MalformedLine {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.apply(key.trim(), value.trim(), i + 1)?;
        }
        Ok(())
    }

    /// Cross-field invariants that the individual setters cannot see.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.backend == Backend::Numeric && self.gain > DEFAULT_NUMERIC_GAIN_CAP {
            return Err(ConfigError::Invalid(format!(
                "backend=numeric cannot integrate g = {} (cap {DEFAULT_NUMERIC_GAIN_CAP})",
                self.gain
            )));
        }
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".to_string()));
        }
        Ok(())
    }

    pub fn gain_parameter(&self) -> Result<GainParameter, ConfigError> {
        GainParameter::new(self.gain).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn imperfections(&self) -> Result<ImperfectionModel, ConfigError> {
        ImperfectionModel::new(self.vin, self.p_inject)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn detector(&self) -> Result<DetectorModel, ConfigError> {
        DetectorModel::new(self.eta, self.bs, self.noise_sigma)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Truncation for state-building paths; `deep_tol` is the leakage budget
    /// used when the cutoff is automatic.
    pub fn truncation(&self, deep_tol: f64) -> Truncation {
        match self.truncation {
            TruncationSpec::Auto => Truncation::auto(deep_tol),
            // A fixed cutoff is an explicit user decision; keep only a loose
            // sanity guard on the captured mass.
            TruncationSpec::Fixed(n) => Truncation::fixed(n, 1e-6),
        }
    }
}
