//! Flat key-value experiment configuration.
//!
//! The format is one `key = value` pair per line, UTF-8, with `#` starting
//! a comment (full line or trailing). Recognised keys:
//!
//! ```text
//! model                 gbm1d_highvol | gbm10d | heston9d        (required)
//! scheme                euler1 | taylor2 | heston_trunc          (required)
//! steps                 number of time steps J                   (required)
//! n_training            training paths N                         (required)
//! n_testing             testing paths N0                         (required)
//! degree                polynomial degree p            (default 1)
//! include_payoff_basis  true | false                   (default true)
//! methods               comma list of smc,rcv,rrcv,srcv (default smc,srcv)
//! simplified_cv         true | false                   (default false)
//! truncation            positive bound A               (default off)
//! seed_train            training RNG seed              (default 1)
//! seed_test             testing RNG seed               (default 2)
//! output_dir            report directory    (default $STRATCV_OUT or ./stratcv-out)
//! ```

use std::path::{Path, PathBuf};

use stratcv::{CvMethod, Scheme};
use thiserror::Error;

/// Environment variable supplying the default output directory.
pub const OUTPUT_DIR_ENV: &str = "STRATCV_OUT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },

    #[error("line {line}: field `{field}`: {message}")]
    Value {
        line: usize,
        field: String,
        message: String,
    },

    #[error("missing required key `{0}`")]
    Missing(String),

    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// One estimator to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Smc,
    Rcv,
    Rrcv,
    Srcv,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Smc => "smc",
            Method::Rcv => "rcv",
            Method::Rrcv => "rrcv",
            Method::Srcv => "srcv",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "smc" => Some(Method::Smc),
            "rcv" => Some(Method::Rcv),
            "rrcv" => Some(Method::Rrcv),
            "srcv" => Some(Method::Srcv),
            _ => None,
        }
    }

    /// The control-variate trainer behind this method, if any.
    pub fn cv_method(self) -> Option<CvMethod> {
        match self {
            Method::Smc => None,
            Method::Rcv => Some(CvMethod::Rcv),
            Method::Rrcv => Some(CvMethod::Rrcv),
            Method::Srcv => Some(CvMethod::Srcv),
        }
    }
}

/// A fully resolved experiment definition.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model: String,
    pub scheme: Scheme,
    pub n_steps: usize,
    pub n_training: usize,
    pub n_testing: usize,
    pub degree: usize,
    pub include_payoff_basis: bool,
    pub methods: Vec<Method>,
    pub simplified_cv: bool,
    pub truncation: Option<f64>,
    pub seed_train: u64,
    pub seed_test: u64,
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("stratcv-out"))
}

impl ExperimentConfig {
    /// Parse and validate a config document.
    pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut model: Option<String> = None;
        let mut scheme: Option<Scheme> = None;
        let mut n_steps: Option<usize> = None;
        let mut n_training: Option<usize> = None;
        let mut n_testing: Option<usize> = None;
        let mut degree: usize = 1;
        let mut include_payoff_basis = true;
        let mut methods = vec![Method::Smc, Method::Srcv];
        let mut simplified_cv = false;
        let mut truncation: Option<f64> = None;
        let mut seed_train: u64 = 1;
        let mut seed_test: u64 = 2;
        let mut output_dir: Option<PathBuf> = None;
        let mut seen: Vec<String> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let content = content.trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: content.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(key.to_string());

            let bad_value = |message: String| ConfigError::Value {
                line,
                field: key.to_string(),
                message,
            };
            match key {
                "model" => model = Some(value.to_string()),
                "scheme" => {
                    scheme = Some(
                        Scheme::parse(value)
                            .map_err(|_| bad_value(format!("unknown scheme `{value}`")))?,
                    )
                }
                "steps" => n_steps = Some(parse_count(value).map_err(bad_value)?),
                "n_training" => n_training = Some(parse_count(value).map_err(bad_value)?),
                "n_testing" => n_testing = Some(parse_count(value).map_err(bad_value)?),
                "degree" => degree = parse_count(value).map_err(bad_value)?,
                "include_payoff_basis" => {
                    include_payoff_basis = parse_bool(value).map_err(bad_value)?
                }
                "methods" => {
                    let mut parsed = Vec::new();
                    for item in value.split(',') {
                        let item = item.trim();
                        if item.is_empty() {
                            continue;
                        }
                        let m = Method::parse(item)
                            .ok_or_else(|| bad_value(format!("unknown method `{item}`")))?;
                        if !parsed.contains(&m) {
                            parsed.push(m);
                        }
                    }
                    if parsed.is_empty() {
                        return Err(bad_value("at least one method required".to_string()));
                    }
                    methods = parsed;
                }
                "simplified_cv" => simplified_cv = parse_bool(value).map_err(bad_value)?,
                "truncation" => {
                    let v: f64 = value
                        .parse()
                        .map_err(|_| bad_value(format!("not a number: `{value}`")))?;
                    if v.is_nan() || v <= 0.0 {
                        return Err(bad_value("truncation bound must be positive".to_string()));
                    }
                    truncation = Some(v);
                }
                "seed_train" => {
                    seed_train = value
                        .parse()
                        .map_err(|_| bad_value(format!("not an integer: `{value}`")))?
                }
                "seed_test" => {
                    seed_test = value
                        .parse()
                        .map_err(|_| bad_value(format!("not an integer: `{value}`")))?
                }
                "output_dir" => output_dir = Some(PathBuf::from(value)),
                other => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: other.to_string(),
                    })
                }
            }
        }

        let config = ExperimentConfig {
            model: model.ok_or_else(|| ConfigError::Missing("model".to_string()))?,
            scheme: scheme.ok_or_else(|| ConfigError::Missing("scheme".to_string()))?,
            n_steps: n_steps.ok_or_else(|| ConfigError::Missing("steps".to_string()))?,
            n_training: n_training.ok_or_else(|| ConfigError::Missing("n_training".to_string()))?,
            n_testing: n_testing.ok_or_else(|| ConfigError::Missing("n_testing".to_string()))?,
            degree,
            include_payoff_basis,
            methods,
            simplified_cv,
            truncation,
            seed_train,
            seed_test,
            output_dir: output_dir.unwrap_or_else(default_output_dir),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        ExperimentConfig::parse(&text)
    }

    /// Cross-field validation: positive sizes, distinct seeds, model/scheme
    /// compatibility.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field: &str, message: String| ConfigError::Invalid {
            field: field.to_string(),
            message,
        };
        if self.n_steps < 1 || self.n_training < 1 || self.n_testing < 1 || self.degree < 1 {
            return Err(invalid(
                "sizes",
                "steps, n_training, n_testing and degree must all be at least 1".to_string(),
            ));
        }
        if self.n_testing < 2 {
            return Err(invalid(
                "n_testing",
                "at least two testing paths are needed for a variance".to_string(),
            ));
        }
        if self.seed_train == self.seed_test {
            return Err(invalid(
                "seed_test",
                "training and testing seeds must differ (the control variate must be \
                 evaluated on independent paths)"
                    .to_string(),
            ));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "at least one method required".to_string()));
        }
        match (self.model.as_str(), self.scheme) {
            ("heston9d", Scheme::HestonTrunc) => {}
            ("heston9d", s) => {
                return Err(invalid(
                    "scheme",
                    format!("model heston9d requires scheme heston_trunc, got {}", s.name()),
                ))
            }
            (_, Scheme::HestonTrunc) => {
                return Err(invalid(
                    "scheme",
                    format!("scheme heston_trunc requires model heston9d, got {}", self.model),
                ))
            }
            _ => {}
        }
        Ok(())
    }

    /// Render back to config-file text (used to persist presets).
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("model = {}\n", self.model));
        out.push_str(&format!("scheme = {}\n", self.scheme.name()));
        out.push_str(&format!("steps = {}\n", self.n_steps));
        out.push_str(&format!("n_training = {}\n", self.n_training));
        out.push_str(&format!("n_testing = {}\n", self.n_testing));
        out.push_str(&format!("degree = {}\n", self.degree));
        out.push_str(&format!(
            "include_payoff_basis = {}\n",
            self.include_payoff_basis
        ));
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        out.push_str(&format!("methods = {}\n", methods.join(",")));
        out.push_str(&format!("simplified_cv = {}\n", self.simplified_cv));
        if let Some(a) = self.truncation {
            out.push_str(&format!("truncation = {a}\n"));
        }
        out.push_str(&format!("seed_train = {}\n", self.seed_train));
        out.push_str(&format!("seed_test = {}\n", self.seed_test));
        out.push_str(&format!("output_dir = {}\n", self.output_dir.display()));
        out
    }
}

fn parse_count(value: &str) -> Result<usize, String> {
    // accept 1_000_000 and 1e5 style spellings
    let cleaned: String = value.chars().filter(|&c| c != '_').collect();
    if let Ok(v) = cleaned.parse::<usize>() {
        return Ok(v);
    }
    if let Ok(v) = cleaned.parse::<f64>() {
        if v.fract() == 0.0 && v >= 0.0 && v <= u64::MAX as f64 {
            return Ok(v as usize);
        }
    }
    Err(format!("not a count: `{value}`"))
}

fn parse_bool(value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(format!("not a boolean: `{other}`")),
    }
}
