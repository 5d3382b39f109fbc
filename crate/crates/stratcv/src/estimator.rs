//! SMC and control-variate estimators, variance statistics, the log-scaled
//! ECDF transform, the theta efficiency metric and the complexity-based
//! parameter planner.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::CvModel;
use crate::error::{Error, Result};
use crate::model::Payoff;
use crate::scheme::PathSet;

/// Default cap on exported ECDF points.
pub const DEFAULT_ECDF_MAX_POINTS: usize = 10_000;

/// Statistics of one estimator run. `sample_variance` is the unbiased
/// sample variance of a single summand (`f` for SMC, `f - M~` for the
/// control-variate estimators), not of the final average.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: String,
    pub mean: f64,
    pub sample_variance: f64,
    pub n_testing: usize,
    pub n_training: usize,
    pub train_seconds: f64,
    pub test_seconds: f64,
    /// Variance ratio times time ratio versus the SMC baseline, when one is
    /// available.
    pub theta: Option<f64>,
    /// ECDF of the log-scaled summands.
    pub ecdf_points: Vec<(f64, f64)>,
}

/// Deterministic pairwise (tree) summation: the grouping depends only on the
/// slice length, so results are reproducible across worker counts.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean and unbiased sample variance (zero variance for fewer than two
/// samples), via pairwise summation.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, pairwise_sum(&sq) / (n - 1) as f64)
}

/// SMC summands: the payoff at each terminal state.
pub fn smc_summands(paths: &PathSet, payoff: &Payoff) -> Vec<f64> {
    (0..paths.n_paths())
        .into_par_iter()
        .map(|p| payoff.eval(paths.terminal_state(p)))
        .collect()
}

/// Control-variate summands `f(X_T) - M~` per path. The path set must be
/// independent of the one the control variate was trained on.
pub fn cv_summands(paths: &PathSet, payoff: &Payoff, cv: &CvModel) -> Result<Vec<f64>> {
    let m = cv.evaluate_all(paths)?;
    Ok((0..paths.n_paths())
        .into_par_iter()
        .map(|p| payoff.eval(paths.terminal_state(p)) - m[p])
        .collect())
}

/// Build a report from raw summands: mean, unbiased variance and the ECDF of
/// the log-scaled sample.
pub fn report_from_summands(method: &str, summands: &[f64], n_training: usize) -> EstimateReport {
    let (mean, sample_variance) = mean_and_variance(summands);
    let ecdf_points = ecdf(&log_scaled_sample(summands), DEFAULT_ECDF_MAX_POINTS);
    EstimateReport {
        method: method.to_string(),
        mean,
        sample_variance,
        n_testing: summands.len(),
        n_training,
        train_seconds: 0.0,
        test_seconds: 0.0,
        theta: None,
        ecdf_points,
    }
}

/// Standard Monte Carlo estimate: the plain average of payoff values.
pub fn estimate_smc(paths: &PathSet, payoff: &Payoff) -> EstimateReport {
    report_from_summands("smc", &smc_summands(paths, payoff), 0)
}

/// Control-variate estimate: the average of `f(X_T) - M~`.
pub fn estimate_cv(paths: &PathSet, payoff: &Payoff, cv: &CvModel) -> Result<EstimateReport> {
    let summands = cv_summands(paths, payoff, cv)?;
    Ok(report_from_summands(
        cv.method().name(),
        &summands,
        cv.n_training(),
    ))
}

/// Log-scaled sample `log(1 + u_i - u_min) - log(1 + u_bar - u_min)`: a
/// monotone transform that compresses the tails for ECDF comparison plots.
pub fn log_scaled_sample(values: &[f64]) -> Vec<f64> {
    assert!(!values.is_empty(), "log_scaled_sample of an empty sample");
    let u_min = values.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let u_bar = pairwise_sum(values) / values.len() as f64;
    let shift = (1.0 + u_bar - u_min).ln();
    values
        .iter()
        .map(|&u| (1.0 + u - u_min).ln() - shift)
        .collect()
}

/// Empirical CDF step points `(x, #{values <= x} / n)`, duplicates
/// collapsed, thinned to at most `max_points` by uniform quantile
/// subsampling that always keeps the first and last point.
pub fn ecdf(values: &[f64], max_points: usize) -> Vec<(f64, f64)> {
    assert!(max_points >= 2, "ecdf needs max_points >= 2");
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite ECDF values"));
    let mut points = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        if i + 1 == n || sorted[i + 1] != v {
            points.push((v, (i + 1) as f64 / n as f64));
        }
    }
    if points.len() <= max_points {
        return points;
    }
    let last = points.len() - 1;
    let mut thinned = Vec::with_capacity(max_points);
    let mut prev = usize::MAX;
    for t in 0..max_points {
        let idx = (t as f64 * last as f64 / (max_points - 1) as f64).round() as usize;
        if idx != prev {
            thinned.push(points[idx]);
            prev = idx;
        }
    }
    thinned
}

/// Efficiency metric versus the SMC baseline:
/// `(var_method / var_smc) * (time_method / time_smc)`. Below 1 means the
/// method beats plain SMC.
pub fn theta_metric(
    var_method: f64,
    time_method: f64,
    var_smc: f64,
    time_smc: f64,
) -> Result<f64> {
    if var_smc <= 0.0 || time_smc <= 0.0 || var_smc.is_nan() || time_smc.is_nan() {
        return Err(Error::DegenerateBaseline);
    }
    Ok((var_method / var_smc) * (time_method / time_smc))
}

/// Inputs of the complexity-based parameter planner.
#[derive(Clone, Debug)]
pub struct PlannerInput {
    /// Target accuracy, in `(0, 1)`.
    pub epsilon: f64,
    /// Basis approximation-order exponent; must exceed 1.
    pub kappa: f64,
    /// Scenario count `c_m` per step.
    pub c_m: f64,
    /// Approximation constant `C_kappa`.
    pub c_kappa: f64,
    /// Reduced scenario constant `c~_m = c_m - (3/2)^m`.
    pub c_m_tilde: f64,
}

impl PlannerInput {
    /// Planner input for a second-order scheme with `m` noise dimensions and
    /// unit approximation constant.
    pub fn order2(dim_noise: usize, epsilon: f64, kappa: f64) -> Self {
        let c_m = crate::cv::scenario_count(2, dim_noise) as f64;
        PlannerInput {
            epsilon,
            kappa,
            c_m,
            c_kappa: 1.0,
            c_m_tilde: c_m - 1.5f64.powi(dim_noise as i32),
        }
    }
}

/// Planner output: asymptotic parameter choices with unit proportionality
/// constants, and the predicted complexity exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedParameters {
    pub n_steps: u64,
    pub basis_size: u64,
    pub n_training: u64,
    pub n_testing: u64,
    /// The cost grows like `epsilon^{-exponent}` (up to a log factor).
    pub complexity_exponent: f64,
}

/// Evaluate the complexity-optimal parameter formulas with unit constants:
///
/// ```text
/// J  ~ eps^{-1/2}
/// K  ~ [c~_m^2 C_k^2 / (c_m eps^{5/2})]^{1/(2 kappa + 2)}
/// N  ~ (c_m - 1) sqrt(c_m) eps^{-5/4} sqrt(log eps^{-5/4})
/// N0 ~ [c_m^kappa c~_m^2 C_k^2 / eps^{(5 kappa + 10)/2}]^{1/(2 kappa + 2)} sqrt(log eps^{-5/4})
/// ```
///
/// with complexity exponent `(7 kappa + 17) / (4 kappa + 4)`. The outputs
/// are advisory defaults; constants being unknown, they fix orders of
/// magnitude, not exact counts.
pub fn plan_parameters(input: &PlannerInput) -> Result<PlannedParameters> {
    if input.kappa.is_nan() || input.kappa <= 1.0 {
        return Err(Error::KappaOutOfRange(input.kappa));
    }
    if input.epsilon.is_nan() || input.epsilon <= 0.0 || input.epsilon >= 1.0 {
        return Err(Error::EpsilonOutOfRange(input.epsilon));
    }
    let eps = input.epsilon;
    let kappa = input.kappa;
    let log_term = (1.25 * (1.0 / eps).ln()).sqrt();
    let exponent_root = 1.0 / (2.0 * kappa + 2.0);

    let n_steps = eps.powf(-0.5).ceil().max(1.0);
    let basis_size = ((input.c_m_tilde * input.c_m_tilde * input.c_kappa * input.c_kappa)
        / (input.c_m * eps.powf(2.5)))
    .powf(exponent_root)
    .ceil()
    .max(1.0);
    let n_training = ((input.c_m - 1.0) * input.c_m.sqrt() * eps.powf(-1.25) * log_term)
        .ceil()
        .max(1.0);
    let n_testing = ((input.c_m.powf(kappa)
        * input.c_m_tilde
        * input.c_m_tilde
        * input.c_kappa
        * input.c_kappa)
        / eps.powf((5.0 * kappa + 10.0) / 2.0))
    .powf(exponent_root)
    .mul_add(log_term, 0.0)
    .ceil()
    .max(1.0);

    Ok(PlannedParameters {
        n_steps: n_steps as u64,
        basis_size: basis_size as u64,
        n_training: n_training as u64,
        n_testing: n_testing as u64,
        complexity_exponent: (7.0 * kappa + 17.0) / (4.0 * kappa + 4.0),
    })
}
