//! Regression-based control variates for weak schemes.
//!
//! For a first-order scheme the terminal payoff admits the martingale
//! representation
//!
//! ```text
//! f(X_T) = E f(X_T) + sum_j sum_{k in {0,1}^m \ {0}} a_{j,k}(X_{j-1}) prod_i (xi_j^i)^{k_i}
//! ```
//!
//! and subtracting the double sum with estimated coefficients gives a
//! zero-mean control variate. Three estimators of the coefficient functions
//! are implemented, each projecting onto a common basis:
//!
//! * **RCV** regresses `f(X_T) * prod (xi_j)^k` on the state at step `j-1`
//!   over all training paths.
//! * **RRCV** fits the conditional-expectation functions `q_j` backwards one
//!   step at a time and assembles the coefficients on the testing paths.
//! * **SRCV** fits the one-step transition functions `h_{j,y}` separately on
//!   each level set `{xi_j = y}` of the discrete innovations. Within a
//!   stratum the regression target is a deterministic function of the
//!   predictor state, so the conditional statistical error vanishes.
//!
//! Second-order schemes use the analogous representation with Hermite
//! weights `H_o(xi)` and pair signs `V^{kl}`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{builtin_model, ModelSpec, Payoff};
use crate::regression::{
    fit_least_squares, fit_least_squares_multi, fit_multi_scaled, with_truncation, BasisSet,
    RegressionFit,
};
use crate::regression::stratify_by_innovation;
use crate::scheme::{step_scheme, step_weak_euler, step_weak_taylor2, InnovationKey, PathSet, Scheme, SQRT_3};

/// Hermite factors of the second-order representation:
/// `H_0 = 1`, `H_1(x) = x`, `H_2(x) = (x^2 - 1) / sqrt(2)`.
pub fn hermite_h(order: u8, x: f64) -> f64 {
    match order {
        0 => 1.0,
        1 => x,
        2 => (x * x - 1.0) / std::f64::consts::SQRT_2,
        _ => panic!("Hermite order {order} out of range 0..=2"),
    }
}

/// Probability `P(xi = y, V = z)` of one second-order scenario, for any `z`:
/// `4^{#zeros(y)} / (6^m 2^{m(m-1)/2})`. Coordinates must be exactly
/// `-sqrt3`, `0` or `sqrt3`.
pub fn p_m(values: &[f64]) -> Result<f64> {
    let mut zeros = 0usize;
    for &v in values {
        if v == 0.0 {
            zeros += 1;
        } else if v != SQRT_3 && v != -SQRT_3 {
            return Err(Error::InvalidCoordinate { value: v });
        }
    }
    Ok(p_m_zero_count(zeros, values.len()))
}

pub(crate) fn p_m_levels(levels: &[i8]) -> f64 {
    let zeros = levels.iter().filter(|&&l| l == 0).count();
    p_m_zero_count(zeros, levels.len())
}

fn p_m_zero_count(zeros: usize, m: usize) -> f64 {
    let pairs = m * (m - 1) / 2;
    4f64.powi(zeros as i32) / (6f64.powi(m as i32) * 2f64.powi(pairs as i32))
}

/// All first-order innovation values `{-1, +1}^m` in a fixed order.
pub fn enumerate_first_values(dim_noise: usize) -> Vec<Vec<i8>> {
    (0u64..(1u64 << dim_noise))
        .map(|mask| {
            (0..dim_noise)
                .map(|i| if mask >> i & 1 == 1 { 1 } else { -1 })
                .collect()
        })
        .collect()
}

/// All second-order innovation values
/// `{-1, 0, +1}^m x {-1, +1}^{m(m-1)/2}` (levels; `xi` value is
/// `level * sqrt3`) in a fixed order.
pub fn enumerate_second_values(dim_noise: usize) -> Vec<(Vec<i8>, Vec<i8>)> {
    let pairs = dim_noise * (dim_noise - 1) / 2;
    let mut out = Vec::new();
    let n_xi = 3u64.pow(dim_noise as u32);
    for mut code in 0..n_xi {
        let mut xi = Vec::with_capacity(dim_noise);
        for _ in 0..dim_noise {
            xi.push((code % 3) as i8 - 1);
            code /= 3;
        }
        for mask in 0u64..(1u64 << pairs) {
            let v = (0..pairs)
                .map(|i| if mask >> i & 1 == 1 { 1 } else { -1 })
                .collect();
            out.push((xi.clone(), v));
        }
    }
    out
}

/// Every innovation scenario of the given scheme order, as stratification
/// keys. There are `2^m` (order 1) or `3^m 2^{m(m-1)/2}` (order 2) of them.
pub fn enumerate_innovation_keys(order: u8, dim_noise: usize) -> Vec<InnovationKey> {
    match order {
        1 => enumerate_first_values(dim_noise)
            .into_iter()
            .map(|xi| InnovationKey { xi, v: Vec::new() })
            .collect(),
        _ => enumerate_second_values(dim_noise)
            .into_iter()
            .map(|(xi, v)| InnovationKey { xi, v })
            .collect(),
    }
}

/// Number of innovation scenarios per step: `2^m` for order 1,
/// `3^m 2^{m(m-1)/2}` for order 2.
pub fn scenario_count(order: u8, dim_noise: usize) -> u128 {
    match order {
        1 => 1u128 << dim_noise,
        _ => 3u128.pow(dim_noise as u32) * (1u128 << (dim_noise * (dim_noise - 1) / 2)),
    }
}

/// First-order multi-index `k in {0,1}^m \ {0}` selecting the innovation
/// product `prod_i (xi^i)^{k_i}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIndexFirst {
    bits: Vec<u8>,
}

impl MultiIndexFirst {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) || bits.iter().all(|&b| b == 0) {
            return Err(Error::DimensionMismatch(
                "first-order multi-index must be a nonzero 0/1 vector".to_string(),
            ));
        }
        Ok(MultiIndexFirst { bits })
    }

    /// Unit index `k(r)`: 1 at coordinate `r`, 0 elsewhere.
    pub fn unit(dim_noise: usize, r: usize) -> Self {
        let mut bits = vec![0u8; dim_noise];
        bits[r] = 1;
        MultiIndexFirst { bits }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn is_unit(&self) -> bool {
        self.bits.iter().map(|&b| b as usize).sum::<usize>() == 1
    }
}

/// Second-order multi-index `(o, r)` with `o in {0,1,2}^m`,
/// `r in {0,1}^{m(m-1)/2}`, not both zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIndexSecond {
    orders: Vec<u8>,
    pairs: Vec<u8>,
}

impl MultiIndexSecond {
    pub fn new(orders: Vec<u8>, pairs: Vec<u8>) -> Result<Self> {
        if orders.iter().any(|&o| o > 2) || pairs.iter().any(|&r| r > 1) {
            return Err(Error::DimensionMismatch(
                "second-order multi-index entries out of range".to_string(),
            ));
        }
        if orders.iter().all(|&o| o == 0) && pairs.iter().all(|&r| r == 0) {
            return Err(Error::DimensionMismatch(
                "second-order multi-index must not be identically zero".to_string(),
            ));
        }
        Ok(MultiIndexSecond { orders, pairs })
    }

    pub fn orders(&self) -> &[u8] {
        &self.orders
    }

    pub fn pairs(&self) -> &[u8] {
        &self.pairs
    }

    pub fn is_unit(&self) -> bool {
        self.pairs.iter().all(|&r| r == 0)
            && self.orders.iter().filter(|&&o| o != 0).count() == 1
            && self.orders.contains(&1)
    }
}

/// The full (or simplified) family of multi-indices for one scheme order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IndexSet {
    First(Vec<MultiIndexFirst>),
    Second(Vec<MultiIndexSecond>),
}

impl IndexSet {
    pub fn len(&self) -> usize {
        match self {
            IndexSet::First(v) => v.len(),
            IndexSet::Second(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn order(&self) -> u8 {
        match self {
            IndexSet::First(_) => 1,
            IndexSet::Second(_) => 2,
        }
    }

    /// Positions of the unit indices (the "simplified" members).
    pub fn unit_positions(&self) -> Vec<usize> {
        match self {
            IndexSet::First(v) => v
                .iter()
                .enumerate()
                .filter(|(_, k)| k.is_unit())
                .map(|(i, _)| i)
                .collect(),
            IndexSet::Second(v) => v
                .iter()
                .enumerate()
                .filter(|(_, k)| k.is_unit())
                .map(|(i, _)| i)
                .collect(),
        }
    }
}

/// All first-order multi-indices; the simplified family keeps only the `m`
/// unit indices.
pub fn enumerate_multi_indices_first(dim_noise: usize, simplified: bool) -> Vec<MultiIndexFirst> {
    if simplified {
        return (0..dim_noise)
            .map(|r| MultiIndexFirst::unit(dim_noise, r))
            .collect();
    }
    (1u64..(1u64 << dim_noise))
        .map(|mask| MultiIndexFirst {
            bits: (0..dim_noise)
                .map(|i| (mask >> i & 1) as u8)
                .collect(),
        })
        .collect()
}

/// All second-order multi-indices; the simplified family keeps the `m`
/// indices with a single `H_1` factor and no pair signs.
pub fn enumerate_multi_indices_second(dim_noise: usize, simplified: bool) -> Vec<MultiIndexSecond> {
    let pairs = dim_noise * (dim_noise - 1) / 2;
    if simplified {
        return (0..dim_noise)
            .map(|i| {
                let mut orders = vec![0u8; dim_noise];
                orders[i] = 1;
                MultiIndexSecond {
                    orders,
                    pairs: vec![0u8; pairs],
                }
            })
            .collect();
    }
    let mut out = Vec::new();
    let n_o = 3u64.pow(dim_noise as u32);
    for o_code in 0..n_o {
        let mut code = o_code;
        let orders: Vec<u8> = (0..dim_noise)
            .map(|_| {
                let d = (code % 3) as u8;
                code /= 3;
                d
            })
            .collect();
        for mask in 0u64..(1u64 << pairs) {
            if o_code == 0 && mask == 0 {
                continue;
            }
            out.push(MultiIndexSecond {
                orders: orders.clone(),
                pairs: (0..pairs).map(|i| (mask >> i & 1) as u8).collect(),
            });
        }
    }
    out
}

/// Index family for a scheme order.
pub fn enumerate_index_set(order: u8, dim_noise: usize, simplified: bool) -> IndexSet {
    match order {
        1 => IndexSet::First(enumerate_multi_indices_first(dim_noise, simplified)),
        _ => IndexSet::Second(enumerate_multi_indices_second(dim_noise, simplified)),
    }
}

/// Innovation product `prod_i (xi^i)^{k_i}` for sign levels.
pub fn weight_first(xi_levels: &[i8], index: &MultiIndexFirst) -> f64 {
    let mut negative = false;
    for (&l, &b) in xi_levels.iter().zip(index.bits()) {
        if b == 1 && l < 0 {
            negative = !negative;
        }
    }
    if negative {
        -1.0
    } else {
        1.0
    }
}

/// Orthonormal factor `prod_i H_{o_i}(xi^i) prod_{kl} (V^{kl})^{r_{kl}}`
/// for three-point levels and pair signs.
pub fn weight_second(xi_levels: &[i8], v_levels: &[i8], index: &MultiIndexSecond) -> f64 {
    let mut w = 1.0;
    for (&l, &o) in xi_levels.iter().zip(index.orders()) {
        if o > 0 {
            w *= hermite_h(o, l as f64 * SQRT_3);
        }
    }
    for (&s, &r) in v_levels.iter().zip(index.pairs()) {
        if r == 1 && s < 0 {
            w = -w;
        }
    }
    w
}

/// The martingale weight of one stored innovation under one multi-index.
fn eval_weight(key_xi: &[i8], key_v: &[i8], indices: &IndexSet, pos: usize) -> f64 {
    match indices {
        IndexSet::First(v) => weight_first(key_xi, &v[pos]),
        IndexSet::Second(v) => weight_second(key_xi, key_v, &v[pos]),
    }
}

/// The coefficient of `h(y)` (or `h(y,z)`) in the exact expansion of
/// `a_{j,index}`: `2^{-m} prod y^k` for order 1,
/// `p_m(y) prod H_{o}(y) prod z^r` for order 2.
fn combination_weight(key: &InnovationKey, indices: &IndexSet, pos: usize) -> f64 {
    match indices {
        IndexSet::First(v) => {
            weight_first(&key.xi, &v[pos]) / (1u64 << key.xi.len()) as f64
        }
        IndexSet::Second(v) => p_m_levels(&key.xi) * weight_second(&key.xi, &key.v, &v[pos]),
    }
}

/// The probability weight of one scenario in the backward average for
/// `q_{j-1}`: `2^{-m}` (order 1) or `p_m(y)` (order 2).
fn scenario_probability(key: &InnovationKey, order: u8) -> f64 {
    match order {
        1 => 1.0 / (1u64 << key.xi.len()) as f64,
        _ => p_m_levels(&key.xi),
    }
}

/// Exact backward step for first-order schemes:
/// `q_{j-1}(x) = 2^{-m} sum_{y in {-1,1}^m} q_j(Phi(x, y))`.
pub fn q_backward_first(
    model: &ModelSpec,
    x: &[f64],
    delta: f64,
    q_next: impl Fn(&[f64]) -> f64,
) -> f64 {
    let values = enumerate_first_values(model.dim_noise());
    let mut acc = 0.0;
    for y in &values {
        acc += q_next(&step_weak_euler(model, x, y, delta));
    }
    acc / values.len() as f64
}

/// Exact backward step for second-order schemes:
/// `q_{j-1}(x) = sum_y sum_z p_m(y) q_j(Phi(x, y, z))`.
pub fn q_backward_second(
    model: &ModelSpec,
    x: &[f64],
    delta: f64,
    q_next: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    if model.derivatives().is_none() {
        return Err(Error::DerivativeUnavailable(model.name().to_string()));
    }
    let mut acc = 0.0;
    for (xi, v) in enumerate_second_values(model.dim_noise()) {
        let next = step_weak_taylor2(model, x, &xi, &v, delta)?;
        acc += p_m_levels(&xi) * q_next(&next);
    }
    Ok(acc)
}

/// Signed average turning one-step scenario values into a first-order
/// coefficient: `a_{j,k} = 2^{-m} sum_y [prod y^k] h(y)`. The map must
/// contain every scenario.
pub fn a_from_h_first(
    h_values: &BTreeMap<InnovationKey, f64>,
    index: &MultiIndexFirst,
) -> Result<f64> {
    let m = index.bits().len();
    let mut acc = 0.0;
    for xi in enumerate_first_values(m) {
        let key = InnovationKey { xi, v: Vec::new() };
        let h = *h_values
            .get(&key)
            .ok_or_else(|| Error::MissingScenario(key.to_string()))?;
        acc += weight_first(&key.xi, index) * h;
    }
    Ok(acc / (1u64 << m) as f64)
}

/// Weighted signed sum for second-order coefficients:
/// `a_{j,o,r} = sum_y sum_z [p_m(y) prod H_o(y) prod z^r] h(y, z)`.
pub fn a_from_h_second(
    h_values: &BTreeMap<InnovationKey, f64>,
    index: &MultiIndexSecond,
) -> Result<f64> {
    let m = index.orders().len();
    let mut acc = 0.0;
    for (xi, v) in enumerate_second_values(m) {
        let key = InnovationKey { xi, v };
        let h = *h_values
            .get(&key)
            .ok_or_else(|| Error::MissingScenario(key.to_string()))?;
        acc += p_m_levels(&key.xi) * weight_second(&key.xi, &key.v, index) * h;
    }
    Ok(acc)
}

/// Which estimator produced a control variate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CvMethod {
    Rcv,
    Rrcv,
    Srcv,
}

impl CvMethod {
    pub fn name(self) -> &'static str {
        match self {
            CvMethod::Rcv => "rcv",
            CvMethod::Rrcv => "rrcv",
            CvMethod::Srcv => "srcv",
        }
    }

    pub fn parse(s: &str) -> Option<CvMethod> {
        match s {
            "rcv" => Some(CvMethod::Rcv),
            "rrcv" => Some(CvMethod::Rrcv),
            "srcv" => Some(CvMethod::Srcv),
            _ => None,
        }
    }
}

/// Per-stratum training diagnostics.
#[derive(Clone, Debug)]
pub struct StratumRecord {
    /// Innovation value of the stratum; `None` for unstratified fits.
    pub key: Option<InnovationKey>,
    pub n_samples: usize,
    pub condition: Option<f64>,
}

/// Diagnostics for one backward step of the training phase.
#[derive(Clone, Debug)]
pub struct StepTrainingRecord {
    pub step: usize,
    pub strata: Vec<StratumRecord>,
    /// Scenarios with no training path; their fits fall back to zero.
    pub empty_strata: usize,
}

/// Training diagnostics: sample counts and condition numbers per stratum.
#[derive(Clone, Debug, Default)]
pub struct TrainingReport {
    pub steps: Vec<StepTrainingRecord>,
}

/// A trained control variate: per step and multi-index, the coefficient
/// vector of `a~_{j,.}` in the basis (SRCV and RCV), or the per-step `q~`
/// coefficient vectors from which RRCV assembles the coefficients on the
/// testing paths. Evaluation cost per `(j, index)` is `O(K)`.
///
/// Immutable after training.
#[derive(Clone, Debug)]
pub struct CvModel {
    method: CvMethod,
    scheme: Scheme,
    n_steps: usize,
    delta: f64,
    simplified: bool,
    truncation: Option<f64>,
    n_training: usize,
    model: ModelSpec,
    payoff: Payoff,
    basis: BasisSet,
    indices: IndexSet,
    /// `[step j - 1][index position][basis coefficient]`; empty for RRCV.
    coeffs: Vec<Vec<Vec<f64>>>,
    /// RRCV only: `q~_j` coefficients at `[j - 1]` for `j = 1..=J-1`
    /// (`q~_J` is the payoff itself).
    q_coeffs: Vec<Vec<f64>>,
    report: TrainingReport,
}

impl CvModel {
    pub fn method(&self) -> CvMethod {
        self.method
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn order(&self) -> u8 {
        self.scheme.order()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn simplified(&self) -> bool {
        self.simplified
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    pub fn n_training(&self) -> usize {
        self.n_training
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn payoff(&self) -> &Payoff {
        &self.payoff
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn indices(&self) -> &IndexSet {
        &self.indices
    }

    pub fn training_report(&self) -> &TrainingReport {
        &self.report
    }

    /// Coefficient vector of `a~` at step `j` (1-based) and index position.
    /// Empty model (RRCV) has no per-index coefficients.
    pub fn coefficients(&self, step: usize, index_pos: usize) -> &[f64] {
        &self.coeffs[step - 1][index_pos]
    }

    /// RRCV `q~_j` coefficients for `j = 1..=J-1`.
    pub fn q_coefficients(&self, level: usize) -> Option<&[f64]> {
        if self.method == CvMethod::Rrcv && level >= 1 && level < self.n_steps {
            Some(&self.q_coeffs[level - 1])
        } else {
            None
        }
    }

    /// Construct a model directly from coefficient tables (testing aid and
    /// deserialisation path).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        method: CvMethod,
        scheme: Scheme,
        n_steps: usize,
        delta: f64,
        simplified: bool,
        truncation: Option<f64>,
        model: ModelSpec,
        payoff: Payoff,
        basis: BasisSet,
        coeffs: Vec<Vec<Vec<f64>>>,
        q_coeffs: Vec<Vec<f64>>,
    ) -> CvModel {
        let indices = enumerate_index_set(scheme.order(), model.dim_noise(), simplified);
        CvModel {
            method,
            scheme,
            n_steps,
            delta,
            simplified,
            truncation,
            n_training: 0,
            model,
            payoff,
            basis,
            indices,
            coeffs,
            q_coeffs,
            report: TrainingReport::default(),
        }
    }

    /// Evaluate the control variate `M~` on one testing path.
    pub fn evaluate(&self, paths: &PathSet, path: usize) -> Result<f64> {
        evaluate_cv(self, paths, path)
    }

    /// Evaluate `M~` on every path of the set.
    pub fn evaluate_all(&self, paths: &PathSet) -> Result<Vec<f64>> {
        self.check_compatible(paths)?;
        (0..paths.n_paths())
            .into_par_iter()
            .map(|p| evaluate_unchecked(self, paths, p))
            .collect()
    }

    fn check_compatible(&self, paths: &PathSet) -> Result<()> {
        let path_order = paths.scheme().order();
        if path_order != self.order() {
            return Err(Error::OrderMismatch {
                cv_order: self.order(),
                path_order,
            });
        }
        if paths.model().dim_state() != self.model.dim_state()
            || paths.model().dim_noise() != self.model.dim_noise()
        {
            return Err(Error::DimensionMismatch(format!(
                "path set is {}x{} but control variate was trained on {}x{}",
                paths.model().dim_state(),
                paths.model().dim_noise(),
                self.model.dim_state(),
                self.model.dim_noise()
            )));
        }
        if paths.n_steps() != self.n_steps {
            return Err(Error::DimensionMismatch(format!(
                "path set has {} steps but control variate was trained with {}",
                paths.n_steps(),
                self.n_steps
            )));
        }
        if paths.delta() != self.delta {
            return Err(Error::DimensionMismatch(format!(
                "path set has step size {} but control variate was trained with {}",
                paths.delta(),
                self.delta
            )));
        }
        Ok(())
    }
}

/// Evaluate the control variate on one testing path:
/// `M~ = sum_j sum_idx a~_{j,idx}(X_{j-1}) * weight_idx(innovation_j)`.
///
/// The path must be independent of the training set for `E[M~] = 0`; the
/// harness enforces this with distinct seeds.
pub fn evaluate_cv(cv: &CvModel, paths: &PathSet, path: usize) -> Result<f64> {
    cv.check_compatible(paths)?;
    evaluate_unchecked(cv, paths, path)
}

fn evaluate_unchecked(cv: &CvModel, paths: &PathSet, path: usize) -> Result<f64> {
    match cv.method {
        CvMethod::Srcv | CvMethod::Rcv => {
            let mut total = 0.0;
            for j in 1..=cv.n_steps {
                let psi = cv.basis.eval(paths.state(path, j - 1));
                let xi = paths.xi_levels(path, j);
                let v = paths.v_levels(path, j);
                for pos in 0..cv.indices.len() {
                    let mut a = dot(&cv.coeffs[j - 1][pos], &psi);
                    // RCV regresses the coefficient functions directly, so the
                    // truncation operator applies to their estimates
                    if cv.method == CvMethod::Rcv {
                        if let Some(bound) = cv.truncation {
                            a = crate::regression::truncate_estimate(a, bound);
                        }
                    }
                    total += a * eval_weight(xi, v, &cv.indices, pos);
                }
            }
            Ok(total)
        }
        CvMethod::Rrcv => {
            // two-stage assembly on the testing path: first the scenario
            // values q~_j(Phi(x, y)), then the signed combinations
            let keys = enumerate_innovation_keys(cv.order(), cv.model.dim_noise());
            let mut total = 0.0;
            for j in 1..=cv.n_steps {
                let x_prev = paths.state(path, j - 1);
                let mut h_values = Vec::with_capacity(keys.len());
                for key in &keys {
                    let next = step_scheme(&cv.model, cv.scheme, x_prev, &key.xi, &key.v, cv.delta)?;
                    let value = if j == cv.n_steps {
                        cv.payoff.eval(&next)
                    } else {
                        let psi = cv.basis.eval(&next);
                        let raw = dot(&cv.q_coeffs[j - 1], &psi);
                        match cv.truncation {
                            Some(bound) => crate::regression::truncate_estimate(raw, bound),
                            None => raw,
                        }
                    };
                    h_values.push(value);
                }
                let xi = paths.xi_levels(path, j);
                let v = paths.v_levels(path, j);
                for pos in 0..cv.indices.len() {
                    let mut a = 0.0;
                    for (key, h) in keys.iter().zip(&h_values) {
                        a += combination_weight(key, &cv.indices, pos) * h;
                    }
                    total += a * eval_weight(xi, v, &cv.indices, pos);
                }
            }
            Ok(total)
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_training_inputs(paths: &PathSet, basis: &BasisSet) -> Result<()> {
    if basis.dimension() != paths.model().dim_state() {
        return Err(Error::DimensionMismatch(format!(
            "basis dimension {} does not match state dimension {}",
            basis.dimension(),
            paths.model().dim_state()
        )));
    }
    Ok(())
}

/// Basis rows at the state after `step` steps, one per path.
fn basis_rows(paths: &PathSet, basis: &BasisSet, step: usize) -> Vec<Vec<f64>> {
    (0..paths.n_paths())
        .into_par_iter()
        .map(|p| basis.eval(paths.state(p, step)))
        .collect()
}

/// Terminal payoff values, one per path.
fn terminal_values(paths: &PathSet, payoff: &Payoff) -> Vec<f64> {
    (0..paths.n_paths())
        .into_par_iter()
        .map(|p| payoff.eval(paths.terminal_state(p)))
        .collect()
}

/// Train the stratified control variate.
///
/// Backward loop `j = J..1`: fit `h~_{j,y}` by regressing the `q~_j` values
/// at the step-`j` states on the basis at the step-`j-1` states over the
/// stratum `{xi_j = y}` (order 2: `{(xi_j, V_j) = (y, z)}`), truncating the
/// fitted predictions when a bound is supplied; assemble the coefficient
/// vectors of `a~_{j,.}` as the exact signed combinations of the `h~`
/// coefficient vectors; propagate `q~_{j-1}` at the training states as the
/// exact scenario-probability average of the `h~` predictions.
///
/// Empty strata fall back to the zero fit and are counted in the training
/// report.
pub fn train_srcv(
    paths: &PathSet,
    basis: &BasisSet,
    payoff: &Payoff,
    truncation: Option<f64>,
    simplified: bool,
) -> Result<CvModel> {
    check_training_inputs(paths, basis)?;
    let order = paths.scheme().order();
    let m = paths.model().dim_noise();
    let keys = enumerate_innovation_keys(order, m);
    let indices = enumerate_index_set(order, m, simplified);
    let k = basis.len();
    let n = paths.n_paths();
    let j_max = paths.n_steps();

    let mut q = terminal_values(paths, payoff);
    let mut coeffs: Vec<Vec<Vec<f64>>> = vec![Vec::new(); j_max];
    let mut report = TrainingReport::default();

    for j in (1..=j_max).rev() {
        let rows = basis_rows(paths, basis, j - 1);
        let strata = stratify_by_innovation(paths, j);

        // one column equilibration for all strata of this step, so the
        // minimal-norm tie-break of rank-deficient strata is consistent and
        // the signed combinations of the h~ coefficient vectors cancel
        // exactly where they should
        let scales: Vec<f64> = (0..k)
            .map(|c| rows.iter().map(|row| row[c] * row[c]).sum::<f64>().sqrt())
            .collect();

        let fits: Vec<RegressionFit> = keys
            .par_iter()
            .map(|key| match strata.get(key) {
                None => Ok(RegressionFit::zero(k, truncation)),
                Some(list) if list.is_empty() => Ok(RegressionFit::zero(k, truncation)),
                Some(list) => {
                    let design = DMatrix::from_fn(list.len(), k, |r, c| rows[list[r]][c]);
                    let targets = DMatrix::from_iterator(
                        list.len(),
                        1,
                        list.iter().map(|&p| q[p]),
                    );
                    let fit = fit_multi_scaled(&design, &targets, Some(&scales))?
                        .into_iter()
                        .next()
                        .expect("one target column");
                    Ok(with_truncation(fit, truncation))
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let step_coeffs: Vec<Vec<f64>> = (0..indices.len())
            .map(|pos| {
                let mut acc = vec![0.0; k];
                for (key, fit) in keys.iter().zip(&fits) {
                    let w = combination_weight(key, &indices, pos);
                    if w != 0.0 {
                        for (a, c) in acc.iter_mut().zip(fit.coefficients()) {
                            *a += w * c;
                        }
                    }
                }
                acc
            })
            .collect();
        coeffs[j - 1] = step_coeffs;

        if j > 1 {
            q = (0..n)
                .into_par_iter()
                .map(|p| {
                    let mut acc = 0.0;
                    for (key, fit) in keys.iter().zip(&fits) {
                        acc += scenario_probability(key, order) * fit.predict(&rows[p]);
                    }
                    acc
                })
                .collect();
        }

        let strata_records: Vec<StratumRecord> = keys
            .iter()
            .zip(&fits)
            .filter(|(_, fit)| fit.n_samples() > 0)
            .map(|(key, fit)| StratumRecord {
                key: Some(key.clone()),
                n_samples: fit.n_samples(),
                condition: fit.condition(),
            })
            .collect();
        let empty = keys.len() - strata_records.len();
        report.steps.push(StepTrainingRecord {
            step: j,
            strata: strata_records,
            empty_strata: empty,
        });
    }
    report.steps.reverse();

    Ok(CvModel {
        method: CvMethod::Srcv,
        scheme: paths.scheme(),
        n_steps: j_max,
        delta: paths.delta(),
        simplified,
        truncation,
        n_training: n,
        model: paths.model().clone(),
        payoff: payoff.clone(),
        basis: basis.clone(),
        indices,
        coeffs,
        q_coeffs: Vec::new(),
        report,
    })
}

/// Train the recursive control variate: fit `q~_{j-1}` by regressing the
/// `q~_j` values at the step-`j` states on the basis at the step-`j-1`
/// states over all paths (no stratification). Coefficients are assembled on
/// the testing paths at evaluation time.
pub fn train_rrcv(
    paths: &PathSet,
    basis: &BasisSet,
    payoff: &Payoff,
    truncation: Option<f64>,
    simplified: bool,
) -> Result<CvModel> {
    check_training_inputs(paths, basis)?;
    let order = paths.scheme().order();
    let m = paths.model().dim_noise();
    let indices = enumerate_index_set(order, m, simplified);
    let j_max = paths.n_steps();
    let n = paths.n_paths();

    let mut values = terminal_values(paths, payoff);
    let mut q_coeffs: Vec<Vec<f64>> = vec![Vec::new(); j_max.saturating_sub(1)];
    let mut report = TrainingReport::default();

    for j in (2..=j_max).rev() {
        let rows = basis_rows(paths, basis, j - 1);
        let design = DMatrix::from_fn(n, basis.len(), |r, c| rows[r][c]);
        let targets = DVector::from_column_slice(&values);
        let fit = with_truncation(fit_least_squares(&design, &targets)?, truncation);
        values = (0..n)
            .into_par_iter()
            .map(|p| fit.predict(&rows[p]))
            .collect();
        report.steps.push(StepTrainingRecord {
            step: j,
            strata: vec![StratumRecord {
                key: None,
                n_samples: fit.n_samples(),
                condition: fit.condition(),
            }],
            empty_strata: 0,
        });
        q_coeffs[j - 2] = fit.coefficients().to_vec();
    }
    report.steps.reverse();

    Ok(CvModel {
        method: CvMethod::Rrcv,
        scheme: paths.scheme(),
        n_steps: j_max,
        delta: paths.delta(),
        simplified,
        truncation,
        n_training: n,
        model: paths.model().clone(),
        payoff: payoff.clone(),
        basis: basis.clone(),
        indices,
        coeffs: Vec::new(),
        q_coeffs,
        report,
    })
}

/// Train the plain regression control variate: for every step `j` and every
/// multi-index, regress `f(X_T) * weight_idx(innovation_j)` on the basis at
/// the step-`j-1` states over all paths, sharing one design factorisation
/// per step across all indices.
pub fn train_rcv(
    paths: &PathSet,
    basis: &BasisSet,
    payoff: &Payoff,
    truncation: Option<f64>,
    simplified: bool,
) -> Result<CvModel> {
    check_training_inputs(paths, basis)?;
    let order = paths.scheme().order();
    let m = paths.model().dim_noise();
    let indices = enumerate_index_set(order, m, simplified);
    let k = basis.len();
    let n = paths.n_paths();
    let j_max = paths.n_steps();

    let f = terminal_values(paths, payoff);
    let mut coeffs: Vec<Vec<Vec<f64>>> = vec![Vec::new(); j_max];
    let mut report = TrainingReport::default();

    for j in 1..=j_max {
        let rows = basis_rows(paths, basis, j - 1);
        let design = DMatrix::from_fn(n, k, |r, c| rows[r][c]);
        let targets = DMatrix::from_fn(n, indices.len(), |i, pos| {
            f[i] * eval_weight(paths.xi_levels(i, j), paths.v_levels(i, j), &indices, pos)
        });
        let fits = fit_least_squares_multi(&design, &targets)?;
        report.steps.push(StepTrainingRecord {
            step: j,
            strata: vec![StratumRecord {
                key: None,
                n_samples: n,
                condition: fits.first().and_then(|f| f.condition()),
            }],
            empty_strata: 0,
        });
        coeffs[j - 1] = fits.into_iter().map(|f| f.coefficients().to_vec()).collect();
    }

    Ok(CvModel {
        method: CvMethod::Rcv,
        scheme: paths.scheme(),
        n_steps: j_max,
        delta: paths.delta(),
        simplified,
        truncation,
        n_training: n,
        model: paths.model().clone(),
        payoff: payoff.clone(),
        basis: basis.clone(),
        indices,
        coeffs,
        q_coeffs: Vec::new(),
        report,
    })
}

// --- serialisation ---------------------------------------------------------

const CV_MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct BasisDoc {
    dimension: usize,
    degree: usize,
    include_payoff: bool,
}

#[derive(Serialize, Deserialize)]
struct SecondIndexDoc {
    o: Vec<u8>,
    r: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct IndicesDoc {
    order: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    first: Option<Vec<Vec<u8>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    second: Option<Vec<SecondIndexDoc>>,
}

/// Versioned JSON document for a trained control variate. Coefficients are
/// written as decimal numbers that parse back to the identical doubles.
#[derive(Serialize, Deserialize)]
struct CvModelDoc {
    version: u32,
    method: String,
    order: u8,
    scheme: String,
    steps: usize,
    delta: f64,
    simplified: bool,
    truncation: Option<f64>,
    model: String,
    payoff: String,
    basis: BasisDoc,
    indices: IndicesDoc,
    coeffs: Vec<Vec<Vec<f64>>>,
    q_coeffs: Vec<Vec<f64>>,
}

impl CvModel {
    /// Serialise to the versioned JSON document.
    pub fn to_json(&self) -> Result<String> {
        let indices = match &self.indices {
            IndexSet::First(v) => IndicesDoc {
                order: 1,
                first: Some(v.iter().map(|k| k.bits().to_vec()).collect()),
                second: None,
            },
            IndexSet::Second(v) => IndicesDoc {
                order: 2,
                first: None,
                second: Some(
                    v.iter()
                        .map(|k| SecondIndexDoc {
                            o: k.orders().to_vec(),
                            r: k.pairs().to_vec(),
                        })
                        .collect(),
                ),
            },
        };
        let doc = CvModelDoc {
            version: CV_MODEL_VERSION,
            method: self.method.name().to_string(),
            order: self.order(),
            scheme: self.scheme.name().to_string(),
            steps: self.n_steps,
            delta: self.delta,
            simplified: self.simplified,
            truncation: self.truncation,
            model: self.model.name().to_string(),
            payoff: self.payoff.name().to_string(),
            basis: BasisDoc {
                dimension: self.basis.dimension(),
                degree: self.basis.degree(),
                include_payoff: self.basis.include_payoff(),
            },
            indices,
            coeffs: self.coeffs.clone(),
            q_coeffs: self.q_coeffs.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Deserialise a document whose model and payoff names resolve to
    /// builtins.
    pub fn from_json(text: &str) -> Result<CvModel> {
        let doc: CvModelDoc = serde_json::from_str(text)?;
        let (model, _) = builtin_model(&doc.model)?;
        let payoff = Payoff::by_name(&doc.payoff)?;
        CvModel::from_doc(doc, model, payoff)
    }

    /// Deserialise with explicitly supplied model and payoff (for custom
    /// models that are not in the builtin registry).
    pub fn from_json_with(text: &str, model: ModelSpec, payoff: Payoff) -> Result<CvModel> {
        let doc: CvModelDoc = serde_json::from_str(text)?;
        CvModel::from_doc(doc, model, payoff)
    }

    fn from_doc(doc: CvModelDoc, model: ModelSpec, payoff: Payoff) -> Result<CvModel> {
        if doc.version != CV_MODEL_VERSION {
            return Err(Error::InvalidDump(format!(
                "unsupported control-variate document version {}",
                doc.version
            )));
        }
        let method = CvMethod::parse(&doc.method)
            .ok_or_else(|| Error::InvalidDump(format!("unknown method `{}`", doc.method)))?;
        let scheme = Scheme::parse(&doc.scheme)?;
        let basis = if doc.basis.include_payoff {
            BasisSet::with_payoff(doc.basis.dimension, doc.basis.degree, payoff.clone())
        } else {
            BasisSet::polynomial(doc.basis.dimension, doc.basis.degree)
        };
        let indices = enumerate_index_set(scheme.order(), model.dim_noise(), doc.simplified);
        // sanity: stored index family must match the enumeration
        let stored_len = match scheme.order() {
            1 => doc.indices.first.as_ref().map(|v| v.len()).unwrap_or(0),
            _ => doc.indices.second.as_ref().map(|v| v.len()).unwrap_or(0),
        };
        if stored_len != indices.len() {
            return Err(Error::InvalidDump(format!(
                "document stores {} indices, expected {}",
                stored_len,
                indices.len()
            )));
        }
        match method {
            CvMethod::Rrcv => {
                if doc.q_coeffs.len() + 1 != doc.steps
                    || doc.q_coeffs.iter().any(|c| c.len() != basis.len())
                {
                    return Err(Error::InvalidDump(
                        "q coefficient tables do not match steps and basis size".to_string(),
                    ));
                }
            }
            CvMethod::Srcv | CvMethod::Rcv => {
                if doc.coeffs.len() != doc.steps
                    || doc.coeffs.iter().any(|step| {
                        step.len() != indices.len()
                            || step.iter().any(|c| c.len() != basis.len())
                    })
                {
                    return Err(Error::InvalidDump(
                        "coefficient tables do not match steps, indices and basis size"
                            .to_string(),
                    ));
                }
            }
        }
        Ok(CvModel {
            method,
            scheme,
            n_steps: doc.steps,
            delta: doc.delta,
            simplified: doc.simplified,
            truncation: doc.truncation,
            n_training: 0,
            model,
            payoff,
            basis,
            indices,
            coeffs: doc.coeffs,
            q_coeffs: doc.q_coeffs,
            report: TrainingReport::default(),
        })
    }
}
