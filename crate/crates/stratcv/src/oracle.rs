//! Exact enumeration oracle for small scenario trees.
//!
//! For `c_m^J` up to a fixed limit the innovation tree of a scheme can be
//! traversed exhaustively, which yields the exact conditional-expectation
//! coefficients `a_{j,.}(x)` at every reachable state, the exact terminal
//! expectation and variance, and with them exact checks of the
//! perfect-control-variate and variance-decomposition identities.
//!
//! States are keyed by their exact floating-point bits: a state is a
//! deterministic function of its innovation sequence, so no tolerance
//! matching is needed, and coinciding states (symmetric schemes) merge with
//! their probabilities added.

use std::collections::BTreeMap;

use crate::cv::{enumerate_index_set, enumerate_innovation_keys, scenario_count, IndexSet};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Payoff};
use crate::scheme::{step_scheme, InnovationKey, PathSet, Scheme};

/// Hard cap on the number of leaf scenarios the oracle will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Exact-bit key of a state vector.
pub type StateKey = Vec<u64>;

/// Bit pattern of a state, used as a tree node key.
pub fn state_key(x: &[f64]) -> StateKey {
    x.iter().map(|v| v.to_bits()).collect()
}

/// One node of the scenario tree: the state and its reach probability.
#[derive(Clone, Debug)]
pub struct TreeNode {
    pub state: Vec<f64>,
    pub probability: f64,
}

/// Tabulated exact coefficients on the full scenario tree.
#[derive(Clone, Debug)]
pub struct ExactCvModel {
    model: ModelSpec,
    payoff: Payoff,
    scheme: Scheme,
    n_steps: usize,
    delta: f64,
    indices: IndexSet,
    innovations: Vec<InnovationKey>,
    /// Reachable states per level `0..=J`.
    levels: Vec<BTreeMap<StateKey, TreeNode>>,
    /// Exact `q_j` values per level `0..=J`.
    q_values: Vec<BTreeMap<StateKey, f64>>,
    /// Exact `a_{j,.}`: entry `j - 1` maps a level `j-1` state to the vector
    /// of coefficients over the index family.
    coefficients: Vec<BTreeMap<StateKey, Vec<f64>>>,
    expectation: f64,
    variance: f64,
}

/// Exhaustively tabulate the exact coefficients `a_{j,.}(x)` of the
/// martingale representation for every reachable state, together with the
/// exact terminal expectation and variance.
pub fn exact_coefficients_enumeration(
    model: &ModelSpec,
    payoff: &Payoff,
    scheme: Scheme,
    n_steps: usize,
) -> Result<ExactCvModel> {
    let order = scheme.order();
    let m = model.dim_noise();
    let c_m = scenario_count(order, m);
    let total = c_m
        .checked_pow(n_steps as u32)
        .ok_or(Error::TreeTooLarge {
            scenarios: u128::MAX,
            limit: ENUMERATION_LIMIT,
        })?;
    if total > ENUMERATION_LIMIT {
        return Err(Error::TreeTooLarge {
            scenarios: total,
            limit: ENUMERATION_LIMIT,
        });
    }

    let innovations = enumerate_innovation_keys(order, m);
    let weights: Vec<f64> = innovations
        .iter()
        .map(|key| scenario_weight(key, order))
        .collect();
    let indices = enumerate_index_set(order, m, false);
    let delta = model.horizon() / n_steps as f64;

    // forward sweep: reachable states and probabilities per level
    let mut levels: Vec<BTreeMap<StateKey, TreeNode>> = Vec::with_capacity(n_steps + 1);
    let x0 = model.initial_state().to_vec();
    let mut root = BTreeMap::new();
    root.insert(
        state_key(&x0),
        TreeNode {
            state: x0,
            probability: 1.0,
        },
    );
    levels.push(root);
    for j in 1..=n_steps {
        let mut next: BTreeMap<StateKey, TreeNode> = BTreeMap::new();
        for node in levels[j - 1].values() {
            for (key, w) in innovations.iter().zip(&weights) {
                let child = step_scheme(model, scheme, &node.state, &key.xi, &key.v, delta)?;
                let entry = next.entry(state_key(&child)).or_insert_with(|| TreeNode {
                    state: child,
                    probability: 0.0,
                });
                entry.probability += node.probability * w;
            }
        }
        levels.push(next);
    }

    // backward sweep: q_j values and coefficient tables
    let mut q_values: Vec<BTreeMap<StateKey, f64>> = vec![BTreeMap::new(); n_steps + 1];
    q_values[n_steps] = levels[n_steps]
        .iter()
        .map(|(k, node)| (k.clone(), payoff.eval(&node.state)))
        .collect();
    let mut coefficients: Vec<BTreeMap<StateKey, Vec<f64>>> = vec![BTreeMap::new(); n_steps];
    for j in (1..=n_steps).rev() {
        let mut q_prev = BTreeMap::new();
        let mut coef_level = BTreeMap::new();
        for (skey, node) in &levels[j - 1] {
            // one-step scenario values h(y) = q_j(Phi(x, y))
            let mut h = Vec::with_capacity(innovations.len());
            for key in &innovations {
                let child = step_scheme(model, scheme, &node.state, &key.xi, &key.v, delta)?;
                let q = *q_values[j]
                    .get(&state_key(&child))
                    .expect("child state tabulated in forward sweep");
                h.push(q);
            }
            let q_here: f64 = h.iter().zip(&weights).map(|(hv, w)| hv * w).sum();
            q_prev.insert(skey.clone(), q_here);
            let coefs: Vec<f64> = (0..indices.len())
                .map(|pos| {
                    innovations
                        .iter()
                        .zip(&h)
                        .map(|(key, hv)| combination_weight_public(key, &indices, pos) * hv)
                        .sum()
                })
                .collect();
            coef_level.insert(skey.clone(), coefs);
        }
        q_values[j - 1] = q_prev;
        coefficients[j - 1] = coef_level;
    }

    let expectation = *q_values[0]
        .values()
        .next()
        .expect("root level has one state");
    // exact variance of f over the leaf distribution, two-pass for stability
    let variance = levels[n_steps]
        .iter()
        .map(|(k, node)| {
            let f = q_values[n_steps][k];
            node.probability * (f - expectation) * (f - expectation)
        })
        .sum();

    Ok(ExactCvModel {
        model: model.clone(),
        payoff: payoff.clone(),
        scheme,
        n_steps,
        delta,
        indices,
        innovations,
        levels,
        q_values,
        coefficients,
        expectation,
        variance,
    })
}

fn scenario_weight(key: &InnovationKey, order: u8) -> f64 {
    match order {
        1 => 1.0 / (1u64 << key.xi.len()) as f64,
        _ => crate::cv::p_m_levels(&key.xi),
    }
}

fn combination_weight_public(key: &InnovationKey, indices: &IndexSet, pos: usize) -> f64 {
    match indices {
        IndexSet::First(v) => {
            crate::cv::weight_first(&key.xi, &v[pos]) / (1u64 << key.xi.len()) as f64
        }
        IndexSet::Second(v) => {
            crate::cv::p_m_levels(&key.xi)
                * crate::cv::weight_second(&key.xi, &key.v, &v[pos])
        }
    }
}

impl ExactCvModel {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Exact `E f(X_T)` over the scheme's law.
    pub fn expectation(&self) -> f64 {
        self.expectation
    }

    /// Exact `Var f(X_T)` over the scheme's law.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// The full multi-index family the coefficients are tabulated over.
    pub fn indices(&self) -> &IndexSet {
        &self.indices
    }

    /// Reachable states with probabilities at a level `0..=J`.
    pub fn level(&self, level: usize) -> &BTreeMap<StateKey, TreeNode> {
        &self.levels[level]
    }

    /// Exact `q_j` value at a tabulated state.
    pub fn q_value(&self, level: usize, state: &[f64]) -> Option<f64> {
        self.q_values[level].get(&state_key(state)).copied()
    }

    /// Exact coefficient `a_{j, index}` at a level `j-1` state (`j` is
    /// 1-based).
    pub fn coefficient(&self, step: usize, state: &[f64], index_pos: usize) -> Option<f64> {
        self.coefficients[step - 1]
            .get(&state_key(state))
            .map(|v| v[index_pos])
    }

    /// The oracle's own coefficient tables (entry `j-1` maps level `j-1`
    /// states to coefficient vectors). Clone and perturb to study imperfect
    /// control variates.
    pub fn coefficient_tables(&self) -> &[BTreeMap<StateKey, Vec<f64>>] {
        &self.coefficients
    }

    /// Exact distribution of `f(X_T) - M` over all scenario sequences, where
    /// `M` is the martingale transform built from the supplied coefficient
    /// tables. Returns `(probability, value)` pairs, one per leaf sequence.
    pub fn corrected_distribution(
        &self,
        tables: &[BTreeMap<StateKey, Vec<f64>>],
    ) -> Result<Vec<(f64, f64)>> {
        let weights: Vec<f64> = self
            .innovations
            .iter()
            .map(|key| scenario_weight(key, self.scheme.order()))
            .collect();
        let mut out = Vec::new();
        let mut stack: Vec<(Vec<f64>, usize, f64, f64)> =
            vec![(self.model.initial_state().to_vec(), 0, 1.0, 0.0)];
        while let Some((x, level, prob, m_sum)) = stack.pop() {
            if level == self.n_steps {
                out.push((prob, self.payoff.eval(&x) - m_sum));
                continue;
            }
            let coefs = tables[level]
                .get(&state_key(&x))
                .ok_or_else(|| Error::MissingScenario(format!("state at level {level}")))?;
            for (key, w) in self.innovations.iter().zip(&weights) {
                let child = step_scheme(&self.model, self.scheme, &x, &key.xi, &key.v, self.delta)?;
                let mut add = 0.0;
                for (pos, c) in coefs.iter().enumerate() {
                    add += c * eval_weight_public(&key.xi, &key.v, &self.indices, pos);
                }
                stack.push((child, level + 1, prob * w, m_sum + add));
            }
        }
        Ok(out)
    }

    /// Exact variance of `f(X_T) - M` for the supplied coefficient tables.
    /// With the oracle's own tables this is zero up to rounding.
    pub fn variance_of_corrected(&self, tables: &[BTreeMap<StateKey, Vec<f64>>]) -> Result<f64> {
        let dist = self.corrected_distribution(tables)?;
        let mean: f64 = dist.iter().map(|(p, v)| p * v).sum();
        Ok(dist
            .iter()
            .map(|(p, v)| p * (v - mean) * (v - mean))
            .sum())
    }

    /// Exact mean of `f(X_T) - M` for the supplied coefficient tables
    /// (equals `E f` for any tables, by the martingale-transform structure).
    pub fn mean_of_corrected(&self, tables: &[BTreeMap<StateKey, Vec<f64>>]) -> Result<f64> {
        let dist = self.corrected_distribution(tables)?;
        Ok(dist.iter().map(|(p, v)| p * v).sum())
    }

    /// Sum over steps and indices of the exact squared coefficient error
    /// `E |a~ - a|^2` under the level distributions: the exact variance
    /// decomposition of an imperfect control variate.
    pub fn l2_coefficient_error(&self, tables: &[BTreeMap<StateKey, Vec<f64>>]) -> f64 {
        let mut total = 0.0;
        for j in 1..=self.n_steps {
            for (skey, node) in &self.levels[j - 1] {
                let exact = &self.coefficients[j - 1][skey];
                let approx = &tables[j - 1][skey];
                for (a, b) in exact.iter().zip(approx) {
                    total += node.probability * (a - b) * (a - b);
                }
            }
        }
        total
    }

    /// Evaluate the oracle control variate `M` along one stored path.
    pub fn evaluate(&self, paths: &PathSet, path: usize) -> Result<f64> {
        if paths.scheme().order() != self.scheme.order() {
            return Err(Error::OrderMismatch {
                cv_order: self.scheme.order(),
                path_order: paths.scheme().order(),
            });
        }
        let mut total = 0.0;
        for j in 1..=self.n_steps {
            let x = paths.state(path, j - 1);
            let coefs = self.coefficients[j - 1]
                .get(&state_key(x))
                .ok_or_else(|| Error::MissingScenario(format!("state at step {}", j - 1)))?;
            let xi = paths.xi_levels(path, j);
            let v = paths.v_levels(path, j);
            for (pos, c) in coefs.iter().enumerate() {
                total += c * eval_weight_public(xi, v, &self.indices, pos);
            }
        }
        Ok(total)
    }
}

fn eval_weight_public(xi: &[i8], v: &[i8], indices: &IndexSet, pos: usize) -> f64 {
    match indices {
        IndexSet::First(idx) => crate::cv::weight_first(xi, &idx[pos]),
        IndexSet::Second(idx) => crate::cv::weight_second(xi, v, &idx[pos]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Payoff};
    use crate::scheme::{simulate_paths, Scheme};

    fn short_gbm() -> ModelSpec {
        crate::model::ModelSpec::gbm(
            "gbm_short",
            -1.0,
            vec![4.0],
            nalgebra::DMatrix::identity(1, 1),
            vec![1.0],
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn single_step_oracle_values() {
        let model = short_gbm();
        let payoff = Payoff::square();
        let oracle =
            exact_coefficients_enumeration(&model, &payoff, Scheme::Euler1, 1).unwrap();
        assert!((oracle.expectation() - 1.1401).abs() < 1e-12);
        let a = oracle.coefficient(1, &[1.0], 0).unwrap();
        assert!((a - 0.792).abs() < 1e-12);
    }

    #[test]
    fn constant_payoff_has_zero_coefficients_and_variance() {
        let (model, _) = builtin_model("gbm1d_highvol").unwrap();
        let payoff = Payoff::new("const", |_| 3.25);
        let oracle =
            exact_coefficients_enumeration(&model, &payoff, Scheme::Euler1, 3).unwrap();
        assert_eq!(oracle.expectation(), 3.25);
        assert_eq!(oracle.variance(), 0.0);
        for j in 1..=3 {
            for coefs in oracle.coefficient_tables()[j - 1].values() {
                for &c in coefs {
                    assert!(c.abs() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn perfect_control_variate_first_order() {
        let (model, payoff) = builtin_model("gbm1d_highvol").unwrap();
        let oracle =
            exact_coefficients_enumeration(&model, &payoff, Scheme::Euler1, 3).unwrap();
        let var = oracle
            .variance_of_corrected(oracle.coefficient_tables())
            .unwrap();
        assert!(var <= 1e-12, "residual variance {var}");
        // and the corrected value equals E f in every scenario
        let dist = oracle
            .corrected_distribution(oracle.coefficient_tables())
            .unwrap();
        for (_, v) in dist {
            assert!((v - oracle.expectation()).abs() <= 1e-10);
        }
    }

    #[test]
    fn tree_too_large_is_detected() {
        let (model, payoff) = builtin_model("gbm10d").unwrap();
        assert!(matches!(
            exact_coefficients_enumeration(&model, &payoff, Scheme::Euler1, 3),
            Err(Error::TreeTooLarge { .. })
        ));
    }

    #[test]
    fn simulated_states_belong_to_the_tree() {
        let (model, payoff) = builtin_model("gbm1d_highvol").unwrap();
        let oracle =
            exact_coefficients_enumeration(&model, &payoff, Scheme::Euler1, 3).unwrap();
        let paths = simulate_paths(&model, Scheme::Euler1, 3, 200, 3).unwrap();
        for p in 0..paths.n_paths() {
            for j in 0..=3 {
                let key = state_key(paths.state(p, j));
                assert!(oracle.level(j).contains_key(&key));
            }
        }
    }

    #[test]
    fn oracle_variance_matches_leaf_enumeration() {
        let model = short_gbm();
        let payoff = Payoff::square();
        let oracle =
            exact_coefficients_enumeration(&model, &payoff, Scheme::Euler1, 2).unwrap();
        // independent route: enumerate the four scenario sequences directly
        let mut values = Vec::new();
        for a in [-1i8, 1] {
            for b in [-1i8, 1] {
                let x1 = crate::scheme::step_weak_euler(&model, &[1.0], &[a], 0.005);
                let x2 = crate::scheme::step_weak_euler(&model, &x1, &[b], 0.005);
                values.push(payoff.eval(&x2));
            }
        }
        let mean: f64 = values.iter().sum::<f64>() / 4.0;
        let var: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!((oracle.expectation() - mean).abs() <= 1e-14);
        assert!((oracle.variance() - var).abs() <= 1e-14 * var.max(1.0));
    }

    #[test]
    fn evaluate_on_paths_is_perfect() {
        let (model, payoff) = builtin_model("gbm1d_highvol").unwrap();
        let oracle =
            exact_coefficients_enumeration(&model, &payoff, Scheme::Euler1, 2).unwrap();
        let paths = simulate_paths(&model, Scheme::Euler1, 2, 100, 11).unwrap();
        for p in 0..paths.n_paths() {
            let m = oracle.evaluate(&paths, p).unwrap();
            let corrected = payoff.eval(paths.terminal_state(p)) - m;
            assert!((corrected - oracle.expectation()).abs() <= 1e-10);
        }
    }
}
