//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Run with `cargo test -p stratcv-cli --test acceptance -- --nocapture`
//! to see the per-criterion lines.

use nalgebra::DMatrix;
use stratcv::*;
use stratcv_cli::{preset_config, run_experiment, ExperimentConfig, Method};

fn pass(number: u32, label: &str, detail: String) {
    println!("acceptance {number} ({label}): PASS - {detail}");
}

fn two_dim_model() -> (ModelSpec, Payoff) {
    let rho = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let factor = correlation_factor(&rho).unwrap();
    let model = ModelSpec::gbm(
        "gbm2d_test",
        0.1,
        vec![0.3, 0.4],
        factor,
        vec![1.0, 1.0],
        1.0,
    )
    .unwrap();
    (model, Payoff::call_on_max(1.0, 2))
}

/// Criterion 1: the exact first-order coefficients make the control variate
/// perfect: Var[f - M] <= 1e-12 over the exhaustive tree, for a 1d model
/// with J = 3 and a 2d model with m = 2, J = 2.
#[test]
fn criterion_01_perfect_control_variate_first_order() {
    let (model, payoff) = builtin_model("gbm1d_highvol").unwrap();
    let oracle = exact_coefficients_enumeration(&model, &payoff, Scheme::Euler1, 3).unwrap();
    let var_1d = oracle
        .variance_of_corrected(oracle.coefficient_tables())
        .unwrap();
    assert!(var_1d <= 1e-12, "1d residual variance {var_1d}");

    let (model2, payoff2) = two_dim_model();
    let oracle2 = exact_coefficients_enumeration(&model2, &payoff2, Scheme::Euler1, 2).unwrap();
    let var_2d = oracle2
        .variance_of_corrected(oracle2.coefficient_tables())
        .unwrap();
    assert!(var_2d <= 1e-12, "2d residual variance {var_2d}");

    pass(
        1,
        "perfect first-order control variate",
        format!("residual variances {var_1d:.2e} (1d, J=3) and {var_2d:.2e} (2d, J=2), both <= 1e-12"),
    );
}

/// Criterion 2: second-order analogue on 1d GBM with m = 1, J = 2:
/// oracle variance of f - M over the 9-scenario tree <= 1e-10.
#[test]
fn criterion_02_perfect_control_variate_second_order() {
    let (model, payoff) = builtin_model("gbm1d_highvol").unwrap();
    let oracle = exact_coefficients_enumeration(&model, &payoff, Scheme::Taylor2, 2).unwrap();
    let var = oracle
        .variance_of_corrected(oracle.coefficient_tables())
        .unwrap();
    assert!(var <= 1e-10, "second-order residual variance {var}");
    pass(
        2,
        "perfect second-order control variate",
        format!("residual variance {var:.2e} over the 9-leaf tree, <= 1e-10"),
    );
}

fn desk_scale_config(methods: Vec<Method>, out: &std::path::Path) -> ExperimentConfig {
    let mut config = preset_config("gbm1d_highvol", 1).unwrap();
    config.n_steps = 50;
    config.n_training = 10_000;
    config.n_testing = 100_000;
    config.methods = methods;
    config.seed_train = 1;
    config.seed_test = 2;
    config.output_dir = out.to_path_buf();
    config
}

/// Criterion 3: with the basis {1, x, x^2} the SRCV variance collapses:
/// Var_SRCV / Var_SMC < 1e-10 at desk scale (J=50, N=1e4, N0=1e5).
#[test]
fn criterion_03_srcv_near_zero_variance_for_exact_basis() {
    let dir = tempfile::tempdir().unwrap();
    let config = desk_scale_config(vec![Method::Smc, Method::Srcv], dir.path());
    let outputs = run_experiment(&config).unwrap();
    let var_smc = outputs.reports[0].sample_variance;
    let var_srcv = outputs.reports[1].sample_variance;
    assert!(var_smc > 0.0);
    let ratio = var_srcv / var_smc;
    assert!(ratio < 1e-10, "variance ratio {ratio:e}");
    pass(
        3,
        "SRCV near-zero variance with exact basis",
        format!("Var_SRCV/Var_SMC = {ratio:.2e} < 1e-10 (Var_SMC = {var_smc:.2e})"),
    );
}

/// Criterion 4: plain RCV cannot compete on this example:
/// Var_RCV >= 1e6 * Var_SRCV at the same desk scale, basis and seeds.
#[test]
fn criterion_04_rcv_underperforms_srcv() {
    let dir = tempfile::tempdir().unwrap();
    let config = desk_scale_config(vec![Method::Rcv, Method::Srcv], dir.path());
    let outputs = run_experiment(&config).unwrap();
    let var_rcv = outputs.reports[0].sample_variance;
    let var_srcv = outputs.reports[1].sample_variance;
    assert!(
        var_rcv >= 1e6 * var_srcv,
        "Var_RCV {var_rcv:e} vs 1e6 * Var_SRCV {:e}",
        1e6 * var_srcv
    );
    pass(
        4,
        "RCV/SRCV variance ordering",
        format!(
            "Var_RCV/Var_SRCV = {:.2e} >= 1e6",
            var_rcv / var_srcv.max(f64::MIN_POSITIVE)
        ),
    );
}

/// Criterion 5: every trained control variate has zero mean:
/// |sample mean of M~| <= 4 (sample std) / sqrt(N0) across all three
/// presets at scale factor 100.
#[test]
fn criterion_05_unbiasedness_across_presets() {
    let mut checked = Vec::new();
    for preset in ["gbm1d_highvol", "gbm10d_callmax", "heston9d_callmax"] {
        let config = preset_config(preset, 100).unwrap();
        let (model, payoff) = builtin_model(&config.model).unwrap();
        let basis = BasisSet::with_payoff(model.dim_state(), config.degree, payoff.clone());
        let training = simulate_paths(
            &model,
            config.scheme,
            config.n_steps,
            config.n_training,
            config.seed_train,
        )
        .unwrap();
        let testing = simulate_paths(
            &model,
            config.scheme,
            config.n_steps,
            config.n_testing,
            config.seed_test,
        )
        .unwrap();
        for method in &config.methods {
            let Some(cv_method) = method.cv_method() else {
                continue;
            };
            let cv = match cv_method {
                CvMethod::Srcv => {
                    train_srcv(&training, &basis, &payoff, None, config.simplified_cv).unwrap()
                }
                CvMethod::Rrcv => {
                    train_rrcv(&training, &basis, &payoff, None, config.simplified_cv).unwrap()
                }
                CvMethod::Rcv => {
                    train_rcv(&training, &basis, &payoff, None, config.simplified_cv).unwrap()
                }
            };
            let m = cv.evaluate_all(&testing).unwrap();
            let (mean, var) = mean_and_variance(&m);
            let bound = 4.0 * (var / m.len() as f64).sqrt();
            assert!(
                mean.abs() <= bound,
                "{preset}/{}: |mean M~| = {} > {bound}",
                method.name(),
                mean.abs()
            );
            checked.push(format!("{preset}/{}", method.name()));
        }
    }
    pass(
        5,
        "zero mean of trained control variates",
        format!("|mean| <= 4 sd/sqrt(N0) for {}", checked.join(", ")),
    );
}

/// Criterion 6: the martingale factors are exactly orthonormal under the
/// discrete laws (error <= 1e-12), and the scenario probabilities sum to
/// one (error <= 1e-14 for m <= 4).
#[test]
fn criterion_06_orthonormality_and_probability_mass() {
    let mut max_err_first = 0.0f64;
    for m in 1..=3usize {
        let idxs = enumerate_multi_indices_first(m, false);
        let values = enumerate_first_values(m);
        for a in 0..idxs.len() {
            for b in 0..idxs.len() {
                let mut acc = 0.0;
                for xi in &values {
                    acc += stratcv::cv::weight_first(xi, &idxs[a])
                        * stratcv::cv::weight_first(xi, &idxs[b]);
                }
                acc /= values.len() as f64;
                let want = if a == b { 1.0 } else { 0.0 };
                max_err_first = max_err_first.max((acc - want).abs());
            }
        }
    }
    assert!(max_err_first <= 1e-12, "first-order error {max_err_first:e}");

    let mut max_err_second = 0.0f64;
    for m in 1..=2usize {
        let idxs = enumerate_multi_indices_second(m, false);
        let values = enumerate_second_values(m);
        for a in 0..idxs.len() {
            for b in 0..idxs.len() {
                let mut acc = 0.0;
                for (xi, v) in &values {
                    let p = p_m(&xi.iter().map(|&l| l as f64 * SQRT_3).collect::<Vec<_>>())
                        .unwrap();
                    acc += p
                        * stratcv::cv::weight_second(xi, v, &idxs[a])
                        * stratcv::cv::weight_second(xi, v, &idxs[b]);
                }
                let want = if a == b { 1.0 } else { 0.0 };
                max_err_second = max_err_second.max((acc - want).abs());
            }
        }
    }
    assert!(
        max_err_second <= 1e-12,
        "second-order error {max_err_second:e}"
    );

    let mut max_err_mass = 0.0f64;
    for m in 1..=4usize {
        let pair_weight = (1u64 << (m * (m - 1) / 2)) as f64;
        let mut seen = std::collections::BTreeSet::new();
        let mut total = 0.0;
        for (xi, _) in enumerate_second_values(m) {
            if seen.insert(xi.clone()) {
                let p = p_m(&xi.iter().map(|&l| l as f64 * SQRT_3).collect::<Vec<_>>()).unwrap();
                total += pair_weight * p;
            }
        }
        max_err_mass = max_err_mass.max((total - 1.0).abs());
    }
    assert!(max_err_mass <= 1e-14, "probability mass error {max_err_mass:e}");

    pass(
        6,
        "orthonormality and probability mass",
        format!(
            "max errors: order-1 products {max_err_first:.2e}, order-2 products \
             {max_err_second:.2e} (<= 1e-12), p_m mass {max_err_mass:.2e} (<= 1e-14)"
        ),
    );
}

/// Criterion 7: on an enumerable tree with deliberately perturbed
/// coefficients, the exact variance of f - M~ equals the summed exact
/// squared coefficient errors within 1e-10.
#[test]
fn criterion_07_variance_decomposition_identity() {
    let (model, payoff) = builtin_model("gbm1d_highvol").unwrap();
    let oracle = exact_coefficients_enumeration(&model, &payoff, Scheme::Euler1, 2).unwrap();
    let mut tables = oracle.coefficient_tables().to_vec();
    let mut bump = 0.4;
    for level in tables.iter_mut() {
        for coefs in level.values_mut() {
            for c in coefs.iter_mut() {
                *c += bump;
                bump *= -0.7;
            }
        }
    }
    let lhs = oracle.variance_of_corrected(&tables).unwrap();
    let rhs = oracle.l2_coefficient_error(&tables);
    let gap = (lhs - rhs).abs();
    assert!(gap <= 1e-10, "Var(f - M~) = {lhs} vs decomposition {rhs}");
    pass(
        7,
        "variance decomposition identity",
        format!("|Var(f - M~) - sum E|a~ - a|^2| = {gap:.2e} <= 1e-10"),
    );
}

/// Criterion 8: planner checkpoints: complexity exponent exactly 2 at
/// kappa = 9, strictly decreasing in kappa, approaching 7/4.
#[test]
fn criterion_08_planner_checkpoints() {
    let input = |kappa: f64| PlannerInput {
        epsilon: 1e-2,
        kappa,
        c_m: 2.0,
        c_kappa: 1.0,
        c_m_tilde: 0.5,
    };
    let at = |kappa: f64| plan_parameters(&input(kappa)).unwrap().complexity_exponent;
    // the checkpoint values are exact in IEEE arithmetic: (7*9+17)/(4*9+4)
    // = 80/40 and (7*3+17)/(4*3+4) = 38/16 have exactly representable
    // numerators, denominators and quotients
    assert_eq!(at(9.0), 2.0);
    assert_eq!(at(3.0), 2.375);
    let mut prev = f64::INFINITY;
    for kappa in [1.01, 1.5, 2.0, 3.0, 5.0, 9.0, 20.0, 100.0, 1e4, 1e8] {
        let e = at(kappa);
        assert!(e < prev, "exponent not decreasing at kappa {kappa}");
        assert!(e > 1.75);
        prev = e;
    }
    assert!((at(1e10) - 1.75).abs() < 1e-9);
    pass(
        8,
        "planner complexity checkpoints",
        "exponent(9) = 2 exactly, exponent(3) = 2.375 exactly, decreasing to 7/4".to_string(),
    );
}

/// Criterion 9: the weak Euler terminal second moment on 1d GBM matches the
/// closed recursion ((1 + r dt)^2 + sigma^2 dt)^J within five relative
/// standard errors at N = 1e5.
#[test]
fn criterion_09_second_moment_recursion() {
    let (model, _) = builtin_model("gbm1d_highvol").unwrap();
    let (rate, sigma, n_steps, n_paths) = (-1.0f64, 4.0f64, 10usize, 100_000usize);
    let delta = 1.0 / n_steps as f64;
    let factor = (1.0 + rate * delta) * (1.0 + rate * delta) + sigma * sigma * delta;
    let expected = factor.powi(n_steps as i32);
    let paths = simulate_paths(&model, Scheme::Euler1, n_steps, n_paths, 2026).unwrap();
    let sq: Vec<f64> = (0..n_paths)
        .map(|p| {
            let x = paths.terminal_state(p)[0];
            x * x
        })
        .collect();
    let (mean, var) = mean_and_variance(&sq);
    let se = (var / n_paths as f64).sqrt();
    let t = (mean - expected).abs() / se;
    assert!(t <= 5.0, "second moment off by {t:.2} standard errors");
    pass(
        9,
        "weak Euler second-moment recursion",
        format!("empirical {mean:.4e} vs closed {expected:.4e}, {t:.2} standard errors (<= 5)"),
    );
}

/// Criterion 10: recomputing a published theta from its rounded inputs
/// lands within 3 percent of the printed value.
#[test]
fn criterion_10_theta_recomputation() {
    let theta = theta_metric(2.7e16, 65.3, 9.6e15, 15.1).unwrap();
    let rel = (theta - 12.38).abs() / 12.38;
    assert!(rel <= 0.03, "theta {theta} deviates {rel:.3} from 12.38");
    pass(
        10,
        "theta table plumbing",
        format!("recomputed theta {theta:.2} vs printed 12.38 ({:.1}% off)", rel * 100.0),
    );
}
