//! Monte Carlo engine for weak approximation schemes of SDEs with
//! regression-based control variates.
//!
//! The crate simulates discrete-innovation weak schemes (first-order weak
//! Euler, simplified second-order weak Taylor, and a truncated Heston
//! update), trains the RCV, RRCV and stratified SRCV control variates on a
//! polynomial-plus-payoff basis, and estimates `E f(X_T)` with and without
//! the variance correction. An exact scenario-tree oracle provides the true
//! coefficients on small trees for verification.
//!
//! Typical flow:
//!
//! ```
//! use stratcv::{builtin_model, simulate_paths, train_srcv, estimate_cv,
//!               estimate_smc, BasisSet, Scheme};
//!
//! let (model, payoff) = builtin_model("gbm1d_highvol").unwrap();
//! let train = simulate_paths(&model, Scheme::Euler1, 10, 2_000, 1).unwrap();
//! let test = simulate_paths(&model, Scheme::Euler1, 10, 10_000, 2).unwrap();
//! let basis = BasisSet::with_payoff(1, 1, payoff.clone());
//! let cv = train_srcv(&train, &basis, &payoff, None, false).unwrap();
//! let with_cv = estimate_cv(&test, &payoff, &cv).unwrap();
//! let plain = estimate_smc(&test, &payoff);
//! assert!(with_cv.sample_variance < plain.sample_variance);
//! ```

pub mod cv;
pub mod error;
pub mod estimator;
pub mod model;
pub mod oracle;
pub mod regression;
pub mod rng;
pub mod scheme;

pub use cv::{
    a_from_h_first, a_from_h_second, enumerate_first_values, enumerate_index_set,
    enumerate_innovation_keys, enumerate_multi_indices_first, enumerate_multi_indices_second,
    enumerate_second_values, evaluate_cv, hermite_h, p_m, q_backward_first, q_backward_second,
    scenario_count, train_rcv, train_rrcv, train_srcv, CvMethod, CvModel, IndexSet,
    MultiIndexFirst, MultiIndexSecond, TrainingReport,
};
pub use error::{Error, Result};
pub use estimator::{
    cv_summands, ecdf, estimate_cv, estimate_smc, log_scaled_sample, mean_and_variance,
    pairwise_sum, plan_parameters, report_from_summands, smc_summands, theta_metric,
    EstimateReport, PlannedParameters, PlannerInput, DEFAULT_ECDF_MAX_POINTS,
};
pub use model::{
    builtin_model, correlation_factor, gbm10d_correlation, heston9d_correlation,
    payoff_call_on_max, CorrelationSpec, HestonTruncSpec, ModelDerivatives, ModelSpec, Payoff,
};
pub use oracle::{exact_coefficients_enumeration, state_key, ExactCvModel, StateKey};
pub use regression::{
    fit_least_squares, fit_least_squares_multi, stratify_by_innovation, truncate_estimate,
    BasisSet, RegressionFit, SINGULAR_VALUE_CUTOFF,
};
pub use rng::CounterRng;
pub use scheme::{
    sample_innovation_first, sample_innovation_second, simulate_paths, simulate_paths_offset,
    step_heston_truncated, step_scheme, step_weak_euler, step_weak_taylor2, InnovationFirst,
    InnovationKey, InnovationSecond, PathSet, Scheme, SQRT_3,
};
