//! Experiment orchestration: simulate, train, evaluate, write reports.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use stratcv::{
    builtin_model, report_from_summands, simulate_paths, simulate_paths_offset, smc_summands,
    theta_metric, train_rcv, train_rrcv, train_srcv, BasisSet, CvMethod, CvModel, EstimateReport,
};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};

/// Testing paths are simulated and evaluated in chunks of this many paths;
/// counter-mode innovation streams make the chunking invisible in the
/// results.
pub const TESTING_CHUNK: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Engine(#[from] stratcv::Error),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Everything a run produced.
#[derive(Debug)]
pub struct RunOutputs {
    pub output_dir: PathBuf,
    /// One report per configured method, in configuration order.
    pub reports: Vec<EstimateReport>,
    /// Paths of every file written.
    pub files: Vec<PathBuf>,
}

/// Run one experiment: simulate training paths once (when a control-variate
/// method is configured), train each method, then stream the testing paths
/// through every estimator and write the report files.
///
/// Timing convention: each control-variate method's `train_seconds` includes
/// the shared training-path simulation plus its own fit; every method's
/// `test_seconds` includes the shared testing-path simulation plus its own
/// evaluation. SMC has no training cost. Wall-clock fields (and the theta
/// ratios built from them) vary run to run; everything else is
/// deterministic for fixed seeds.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutputs, HarnessError> {
    config.validate()?;
    let (model, payoff) = builtin_model(&config.model)?;
    let basis = if config.include_payoff_basis {
        BasisSet::with_payoff(model.dim_state(), config.degree, payoff.clone())
    } else {
        BasisSet::polynomial(model.dim_state(), config.degree)
    };

    // training phase
    let mut trained: HashMap<&'static str, (CvModel, f64)> = HashMap::new();
    if config.methods.iter().any(|m| m.cv_method().is_some()) {
        let t0 = Instant::now();
        let training = simulate_paths(
            &model,
            config.scheme,
            config.n_steps,
            config.n_training,
            config.seed_train,
        )?;
        let sim_seconds = t0.elapsed().as_secs_f64();
        for method in &config.methods {
            let Some(cv_method) = method.cv_method() else {
                continue;
            };
            let t1 = Instant::now();
            let cv = match cv_method {
                CvMethod::Srcv => train_srcv(
                    &training,
                    &basis,
                    &payoff,
                    config.truncation,
                    config.simplified_cv,
                )?,
                CvMethod::Rrcv => train_rrcv(
                    &training,
                    &basis,
                    &payoff,
                    config.truncation,
                    config.simplified_cv,
                )?,
                CvMethod::Rcv => train_rcv(
                    &training,
                    &basis,
                    &payoff,
                    config.truncation,
                    config.simplified_cv,
                )?,
            };
            trained.insert(
                method.name(),
                (cv, sim_seconds + t1.elapsed().as_secs_f64()),
            );
        }
    }

    // testing phase: shared chunked simulation, per-method evaluation
    let mut summands: Vec<Vec<f64>> = config
        .methods
        .iter()
        .map(|_| Vec::with_capacity(config.n_testing))
        .collect();
    let mut eval_seconds = vec![0.0f64; config.methods.len()];
    let mut sim_seconds = 0.0f64;
    let mut start = 0usize;
    while start < config.n_testing {
        let len = TESTING_CHUNK.min(config.n_testing - start);
        let t0 = Instant::now();
        let chunk = simulate_paths_offset(
            &model,
            config.scheme,
            config.n_steps,
            start as u64,
            len,
            config.seed_test,
        )?;
        sim_seconds += t0.elapsed().as_secs_f64();
        for (mi, method) in config.methods.iter().enumerate() {
            let t1 = Instant::now();
            match method.cv_method() {
                None => summands[mi].extend(smc_summands(&chunk, &payoff)),
                Some(_) => {
                    let (cv, _) = &trained[method.name()];
                    summands[mi].extend(stratcv::cv_summands(&chunk, &payoff, cv)?);
                }
            }
            eval_seconds[mi] += t1.elapsed().as_secs_f64();
        }
        start += len;
    }

    // reports
    let mut reports = Vec::with_capacity(config.methods.len());
    for (mi, method) in config.methods.iter().enumerate() {
        let is_cv = method.cv_method().is_some();
        let mut report = report_from_summands(
            method.name(),
            &summands[mi],
            if is_cv { config.n_training } else { 0 },
        );
        report.test_seconds = sim_seconds + eval_seconds[mi];
        report.train_seconds = trained.get(method.name()).map(|(_, t)| *t).unwrap_or(0.0);
        reports.push(report);
    }
    let baseline = reports
        .iter()
        .find(|r| r.method == "smc")
        .map(|r| (r.sample_variance, r.test_seconds));
    for report in &mut reports {
        if report.method == "smc" {
            report.theta = Some(1.0);
        } else if let Some((var_smc, time_smc)) = baseline {
            report.theta = theta_metric(
                report.sample_variance,
                report.train_seconds + report.test_seconds,
                var_smc,
                time_smc,
            )
            .ok();
        }
    }

    // outputs
    std::fs::create_dir_all(&config.output_dir).map_err(|source| HarnessError::Io {
        path: config.output_dir.clone(),
        source,
    })?;
    let mut files = Vec::new();
    for report in &reports {
        let report_path = config.output_dir.join(format!("report_{}.json", report.method));
        write_file(
            &report_path,
            serde_json::to_string_pretty(report)
                .expect("report serialisation cannot fail")
                .as_bytes(),
        )?;
        files.push(report_path);

        let ecdf_path = config.output_dir.join(format!("ecdf_{}.csv", report.method));
        let mut csv = String::from("value,probability\n");
        for (value, probability) in &report.ecdf_points {
            csv.push_str(&format!("{value:.16e},{probability:.16e}\n"));
        }
        write_file(&ecdf_path, csv.as_bytes())?;
        files.push(ecdf_path);
    }
    for method in &config.methods {
        if let Some((cv, _)) = trained.get(method.name()) {
            let path = config
                .output_dir
                .join(format!("cvmodel_{}.json", method.name()));
            write_file(&path, cv.to_json()?.as_bytes())?;
            files.push(path);
        }
    }
    let summary_path = config.output_dir.join("summary.csv");
    write_file(&summary_path, summary_csv(&reports).as_bytes())?;
    files.push(summary_path);

    Ok(RunOutputs {
        output_dir: config.output_dir.clone(),
        reports,
        files,
    })
}

/// The combined results table: one row per method with the min/max of the
/// log-scaled sample, the raw summand variance, total wall-clock time and
/// theta.
pub fn summary_csv(reports: &[EstimateReport]) -> String {
    let mut out = String::from("method,min,max,variance,time_seconds,theta\n");
    for report in reports {
        let min = report.ecdf_points.first().map(|p| p.0);
        let max = report.ecdf_points.last().map(|p| p.0);
        out.push_str(&format!(
            "{},{},{},{},{:.3},{}\n",
            report.method,
            min.map(|v| v.to_string()).unwrap_or_default(),
            max.map(|v| v.to_string()).unwrap_or_default(),
            report.sample_variance,
            report.train_seconds + report.test_seconds,
            report.theta.map(|v| v.to_string()).unwrap_or_default(),
        ));
    }
    out
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<(), HarnessError> {
    let mut file = std::fs::File::create(path).map_err(|source| HarnessError::Io {
        path: path.clone(),
        source,
    })?;
    file.write_all(bytes).map_err(|source| HarnessError::Io {
        path: path.clone(),
        source,
    })
}
