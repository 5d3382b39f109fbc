//! Training-phase checks against closed forms and the enumeration oracle.
//!
//! For GBM with payoff `x^2` the conditional expectations are available in
//! closed form: `q_j(x) = gamma^{J-j} x^2` with
//! `gamma = (1 + r dt)^2 + sigma^2 dt`, hence
//! `a_{j,(1)}(x) = gamma^{J-j} * 2 (1 + r dt) sigma sqrt(dt) * x^2`.
//! These serve as independent oracles for the fitted coefficient functions.

use stratcv::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct GbmClosedForm {
    rate: f64,
    sigma: f64,
    delta: f64,
    n_steps: usize,
}

impl GbmClosedForm {
    fn gamma(&self) -> f64 {
        let a = 1.0 + self.rate * self.delta;
        a * a + self.sigma * self.sigma * self.delta
    }

    /// `q_j(x) = gamma^{J-j} x^2`
    fn q(&self, j: usize, x: f64) -> f64 {
        self.gamma().powi((self.n_steps - j) as i32) * x * x
    }

    /// `a_{j,(1)}(x) = gamma^{J-j} 2 (1 + r dt) sigma sqrt(dt) x^2`
    fn a(&self, j: usize, x: f64) -> f64 {
        let lin = 1.0 + self.rate * self.delta;
        let noise = self.sigma * self.delta.sqrt();
        self.gamma().powi((self.n_steps - j) as i32) * 2.0 * lin * noise * x * x
    }
}

#[test]
fn srcv_coefficients_match_closed_form_on_training_points() {
    let (model, payoff) = builtin_model("gbm1d_highvol").unwrap();
    let n_steps = 3;
    let paths = simulate_paths(&model, Scheme::Euler1, n_steps, 1000, 42).unwrap();
    let basis = BasisSet::with_payoff(1, 1, payoff.clone());
    let cv = train_srcv(&paths, &basis, &payoff, None, false).unwrap();
    let closed = GbmClosedForm {
        rate: -1.0,
        sigma: 4.0,
        delta: paths.delta(),
        n_steps,
    };
    for j in 1..=n_steps {
        for p in 0..paths.n_paths() {
            let x = paths.state(p, j - 1)[0];
            let psi = basis.eval(&[x]);
            let got = dot(cv.coefficients(j, 0), &psi);
            let want = closed.a(j, x);
            assert!(
                (got - want).abs() <= 1e-6 * (1.0 + want.abs()),
                "j={j} x={x}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn rrcv_q_fits_track_closed_form_in_l2() {
    let (model, payoff) = builtin_model("gbm1d_highvol").unwrap();
    let n_steps = 3;
    let paths = simulate_paths(&model, Scheme::Euler1, n_steps, 10_000, 7).unwrap();
    let basis = BasisSet::with_payoff(1, 1, payoff.clone());
    let cv = train_rrcv(&paths, &basis, &payoff, None, false).unwrap();
    let closed = GbmClosedForm {
        rate: -1.0,
        sigma: 4.0,
        delta: paths.delta(),
        n_steps,
    };
    // regression noise is present (unlike SRCV), so the comparison is in
    // relative L2 over the training points
    for j in 1..n_steps {
        let coeffs = cv.q_coefficients(j).unwrap();
        let mut err2 = 0.0;
        let mut norm2 = 0.0;
        for p in 0..paths.n_paths() {
            let x = paths.state(p, j)[0];
            let got = dot(coeffs, &basis.eval(&[x]));
            let want = closed.q(j, x);
            err2 += (got - want) * (got - want);
            norm2 += want * want;
        }
        let rel = (err2 / norm2).sqrt();
        assert!(rel <= 5e-2, "j={j}: relative L2 error {rel}");
    }
}

#[test]
fn rrcv_constant_payoff_stays_constant() {
    let (model, _) = builtin_model("gbm1d_highvol").unwrap();
    let paths = simulate_paths(&model, Scheme::Euler1, 4, 500, 11).unwrap();
    let payoff = Payoff::new("const", |_| 3.3);
    let basis = BasisSet::polynomial(1, 2);
    let cv = train_rrcv(&paths, &basis, &payoff, None, false).unwrap();
    for j in 1..4 {
        let coeffs = cv.q_coefficients(j).unwrap();
        for p in 0..paths.n_paths() {
            let x = paths.state(p, j)[0];
            let got = dot(coeffs, &basis.eval(&[x]));
            assert!((got - 3.3).abs() <= 1e-9, "j={j}: {got}");
        }
    }
}

#[test]
fn rrcv_and_srcv_agree_for_a_single_step() {
    // J = 1: both reduce to the exact two-scenario combination at x0
    let (model, payoff) = builtin_model("gbm1d_highvol").unwrap();
    let train = simulate_paths(&model, Scheme::Euler1, 1, 400, 3).unwrap();
    let test = simulate_paths(&model, Scheme::Euler1, 1, 50, 4).unwrap();
    let basis = BasisSet::with_payoff(1, 1, payoff.clone());
    let srcv = train_srcv(&train, &basis, &payoff, None, false).unwrap();
    let rrcv = train_rrcv(&train, &basis, &payoff, None, false).unwrap();
    for p in 0..test.n_paths() {
        let a = evaluate_cv(&srcv, &test, p).unwrap();
        let b = evaluate_cv(&rrcv, &test, p).unwrap();
        assert!((a - b).abs() <= 1e-8, "path {p}: {a} vs {b}");
    }
}

#[test]
fn trained_srcv_matches_enumeration_oracle_on_small_tree() {
    let (model, payoff) = builtin_model("gbm1d_highvol").unwrap();
    let n_steps = 2;
    let oracle = exact_coefficients_enumeration(&model, &payoff, Scheme::Euler1, n_steps).unwrap();
    let paths = simulate_paths(&model, Scheme::Euler1, n_steps, 2000, 5).unwrap();
    let basis = BasisSet::with_payoff(1, 1, payoff.clone());
    let cv = train_srcv(&paths, &basis, &payoff, None, false).unwrap();
    // with an exactly representable q_j, the fitted coefficients reproduce
    // the oracle values at every reachable tree state
    for j in 1..=n_steps {
        for node in oracle.level(j - 1).values() {
            let psi = basis.eval(&node.state);
            let got = dot(cv.coefficients(j, 0), &psi);
            let want = oracle.coefficient(j, &node.state, 0).unwrap();
            assert!(
                (got - want).abs() <= 1e-8 * (1.0 + want.abs()),
                "j={j}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn second_order_srcv_is_perfect_for_exact_basis() {
    // 1d GBM, second-order scheme, payoff x^2, basis {1, x, x^2}: the
    // conditional expectations stay quadratic, so the trained SRCV matches
    // the oracle and the corrected estimator has near-zero variance
    let model = ModelSpec::gbm(
        "gbm_mild",
        0.05,
        vec![0.5],
        nalgebra::DMatrix::identity(1, 1),
        vec![1.0],
        1.0,
    )
    .unwrap();
    let payoff = Payoff::square();
    let n_steps = 2;
    let train = simulate_paths(&model, Scheme::Taylor2, n_steps, 3000, 17).unwrap();
    let test = simulate_paths(&model, Scheme::Taylor2, n_steps, 5000, 18).unwrap();
    let basis = BasisSet::with_payoff(1, 1, payoff.clone());
    let cv = train_srcv(&train, &basis, &payoff, None, false).unwrap();
    let with_cv = estimate_cv(&test, &payoff, &cv).unwrap();
    let plain = estimate_smc(&test, &payoff);
    assert!(
        with_cv.sample_variance <= 1e-16 * plain.sample_variance.max(1.0),
        "cv variance {} vs smc {}",
        with_cv.sample_variance,
        plain.sample_variance
    );
    // sanity: both agree with the oracle expectation to Monte Carlo accuracy
    let oracle = exact_coefficients_enumeration(&model, &payoff, Scheme::Taylor2, n_steps).unwrap();
    assert!((with_cv.mean - oracle.expectation()).abs() < 1e-6);
}

#[test]
fn zero_mean_of_trained_control_variates() {
    let (model, payoff) = builtin_model("gbm1d_highvol").unwrap();
    let train = simulate_paths(&model, Scheme::Euler1, 4, 2000, 21).unwrap();
    let test = simulate_paths(&model, Scheme::Euler1, 4, 50_000, 22).unwrap();
    let basis = BasisSet::with_payoff(1, 1, payoff.clone());
    for cv in [
        train_srcv(&train, &basis, &payoff, None, false).unwrap(),
        train_rrcv(&train, &basis, &payoff, None, false).unwrap(),
        train_rcv(&train, &basis, &payoff, None, false).unwrap(),
    ] {
        let m = cv.evaluate_all(&test).unwrap();
        let (mean, var) = mean_and_variance(&m);
        let bound = 4.0 * (var / m.len() as f64).sqrt();
        assert!(
            mean.abs() <= bound,
            "{}: mean {mean}, bound {bound}",
            cv.method().name()
        );
    }
}

#[test]
fn truncation_bounds_the_backward_values() {
    // with a tiny bound every fitted prediction is clipped, so the trained
    // coefficients stay finite and evaluation never exceeds the index count
    // times the bound per step
    let (model, payoff) = builtin_model("gbm1d_highvol").unwrap();
    let train = simulate_paths(&model, Scheme::Euler1, 3, 500, 31).unwrap();
    let test = simulate_paths(&model, Scheme::Euler1, 3, 100, 32).unwrap();
    let basis = BasisSet::with_payoff(1, 1, payoff.clone());
    let bound = 0.5;
    let cv = train_rrcv(&train, &basis, &payoff, Some(bound), false).unwrap();
    for p in 0..test.n_paths() {
        let m = evaluate_cv(&cv, &test, p).unwrap();
        assert!(m.is_finite());
    }
    // RCV truncation clips the coefficient estimates themselves
    let cv = train_rcv(&train, &basis, &payoff, Some(bound), false).unwrap();
    for p in 0..test.n_paths() {
        let m = evaluate_cv(&cv, &test, p).unwrap();
        // |M~| <= J * (#indices) * bound since each truncated a~ is in
        // [-bound, bound] and first-order weights are signs
        assert!(m.abs() <= 3.0 * cv.indices().len() as f64 * bound + 1e-12);
    }
}

#[test]
fn second_order_two_noise_training_is_sound() {
    // correlated 2d GBM under the second-order scheme: the mixed-noise
    // terms carry the pair signs, so strata are keyed by the full (xi, V)
    // and the multi-index family includes the V factors
    let rho = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
    let factor = correlation_factor(&rho).unwrap();
    let model = ModelSpec::gbm(
        "gbm2d_corr",
        0.1,
        vec![0.4, 0.3],
        factor,
        vec![1.0, 1.0],
        1.0,
    )
    .unwrap();
    let payoff = Payoff::call_on_max(1.0, 2);

    // exact coefficients are perfect on the 18-scenario single-step tree
    let oracle = exact_coefficients_enumeration(&model, &payoff, Scheme::Taylor2, 1).unwrap();
    assert_eq!(oracle.indices().len(), 17); // 3^2 * 2 - 1
    let var = oracle
        .variance_of_corrected(oracle.coefficient_tables())
        .unwrap();
    assert!(var <= 1e-10, "oracle residual variance {var}");

    // trained SRCV and RRCV produce zero-mean control variates on fresh paths
    let train = simulate_paths(&model, Scheme::Taylor2, 2, 4000, 51).unwrap();
    let test = simulate_paths(&model, Scheme::Taylor2, 2, 20_000, 52).unwrap();
    let basis = BasisSet::with_payoff(2, 1, payoff.clone());
    for cv in [
        train_srcv(&train, &basis, &payoff, None, false).unwrap(),
        train_rrcv(&train, &basis, &payoff, None, false).unwrap(),
    ] {
        let m = cv.evaluate_all(&test).unwrap();
        let (mean, var) = mean_and_variance(&m);
        let bound = 4.0 * (var / m.len() as f64).sqrt();
        assert!(
            mean.abs() <= bound,
            "{} order 2: mean {mean} exceeds {bound}",
            cv.method().name()
        );
    }

    // the simplified order-2 family keeps the m linear-factor indices and
    // its coefficients agree with the full training run
    let full = train_srcv(&train, &basis, &payoff, None, false).unwrap();
    let simp = train_srcv(&train, &basis, &payoff, None, true).unwrap();
    assert_eq!(simp.indices().len(), 2);
    let unit_pos = full.indices().unit_positions();
    for j in 1..=2 {
        for (s_pos, &f_pos) in unit_pos.iter().enumerate() {
            assert_eq!(simp.coefficients(j, s_pos), full.coefficients(j, f_pos));
        }
    }
}

#[test]
fn variance_decomposition_on_perturbed_oracle() {
    let (model, payoff) = builtin_model("gbm1d_highvol").unwrap();
    let oracle = exact_coefficients_enumeration(&model, &payoff, Scheme::Euler1, 2).unwrap();
    let mut tables = oracle.coefficient_tables().to_vec();
    // corrupt a few entries deterministically
    let mut bump = 0.25;
    for level in tables.iter_mut() {
        for coefs in level.values_mut() {
            for c in coefs.iter_mut() {
                *c += bump;
                bump = -bump * 0.5;
            }
        }
    }
    let lhs = oracle.variance_of_corrected(&tables).unwrap();
    let rhs = oracle.l2_coefficient_error(&tables);
    assert!(
        (lhs - rhs).abs() <= 1e-10 * (1.0 + rhs),
        "variance {lhs} vs decomposition {rhs}"
    );
}
