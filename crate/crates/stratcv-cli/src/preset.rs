//! Benchmark experiment presets.
//!
//! Each preset fixes the full-scale hyperparameters `J = 100`, `N = 1e5`,
//! `N0 = 1e7`, `p = 1` with the payoff appended to the basis. A scale
//! factor divides `J`, `N` and `N0` proportionally for desk-scale runs.

use std::path::PathBuf;

use stratcv::Scheme;

use crate::config::{ConfigError, ExperimentConfig, Method};

/// A named preset with a one-line description.
#[derive(Clone, Copy, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
}

/// The shipped presets.
pub fn list_presets() -> Vec<Preset> {
    vec![
        Preset {
            name: "gbm1d_highvol",
            description: "1d GBM, r=-1, sigma=4, payoff x^2; methods smc,rcv,rrcv,srcv",
        },
        Preset {
            name: "gbm10d_callmax",
            description: "10d correlated GBM, call-on-max; simplified CV; methods smc,rcv,srcv",
        },
        Preset {
            name: "heston9d_callmax",
            description: "8 assets + CIR variance, truncated scheme, call-on-max; \
                          simplified CV; methods smc,rcv,srcv",
        },
    ]
}

/// Build the configuration of a named preset, scaled down by `scale`
/// (`J`, `N` and `N0` are divided by it; a testing floor of two paths keeps
/// the variance defined).
pub fn preset_config(name: &str, scale: u32) -> Result<ExperimentConfig, ConfigError> {
    let scale = scale.max(1) as usize;
    let (model, scheme, methods, simplified) = match name {
        "gbm1d_highvol" => (
            "gbm1d_highvol",
            Scheme::Euler1,
            vec![Method::Smc, Method::Rcv, Method::Rrcv, Method::Srcv],
            false,
        ),
        "gbm10d_callmax" => (
            "gbm10d",
            Scheme::Euler1,
            vec![Method::Smc, Method::Rcv, Method::Srcv],
            true,
        ),
        "heston9d_callmax" => (
            "heston9d",
            Scheme::HestonTrunc,
            vec![Method::Smc, Method::Rcv, Method::Srcv],
            true,
        ),
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    };
    let config = ExperimentConfig {
        model: model.to_string(),
        scheme,
        n_steps: (100 / scale).max(1),
        n_training: (100_000 / scale).max(1),
        n_testing: (10_000_000 / scale).max(2),
        degree: 1,
        include_payoff_basis: true,
        methods,
        simplified_cv: simplified,
        truncation: None,
        seed_train: 1,
        seed_test: 2,
        output_dir: PathBuf::from("stratcv-out").join(name),
    };
    config.validate()?;
    Ok(config)
}
