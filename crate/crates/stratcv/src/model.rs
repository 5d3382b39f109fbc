//! SDE models, payoff functionals, correlation structure and the builtin
//! benchmark instances.
//!
//! A [`ModelSpec`] bundles drift, diffusion, noise dimension and initial
//! state of a time-homogeneous Ito SDE `dX = mu(X) dt + sigma(X) dW`.
//! Correlated driving noise is expressed through the diffusion matrix
//! `sigma(x) = D(x) * A` with `A A^T = rho`, so the scheme innovations stay
//! i.i.d. and can be stratified on directly.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Drift function `x -> mu(x)`, returning a vector of length `dim_state`.
pub type StateFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Diffusion function `x -> sigma(x)`, returning a `dim_state x dim_noise` matrix.
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
/// Per-column diffusion Jacobian `(x, j) -> d sigma[:, j] / dx` as a
/// `dim_state x dim_state` matrix with entry `(i, k) = d sigma_{i,j} / d x_k`.
pub type ColumnJacobianFn = Arc<dyn Fn(&[f64], usize) -> DMatrix<f64> + Send + Sync>;

/// Max tolerated asymmetry `|rho - rho^T|` for correlation inputs.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// A Cholesky pivot below this is rejected as not positive semi-definite.
pub const PSD_PIVOT_TOLERANCE: f64 = 1e-10;
/// Pivots in `[-PSD_PIVOT_TOLERANCE, RANK_PIVOT_TOLERANCE]` are treated as
/// exact zeros, yielding a rank-revealing factor with zero columns.
pub const RANK_PIVOT_TOLERANCE: f64 = 1e-12;

/// First spatial derivatives of the model coefficients, registered
/// analytically. Needed by the second-order weak Taylor stepper.
///
/// The stepper's `L0` correction uses these first derivatives only; for
/// models with affine drift and diffusion (every builtin that supports the
/// second-order scheme) the omitted curvature terms vanish identically.
#[derive(Clone)]
pub struct ModelDerivatives {
    /// `x -> d mu / dx`, entry `(i, k) = d mu_i / d x_k`.
    pub drift_jacobian: MatrixFn,
    /// `(x, j) -> d sigma[:, j] / dx`.
    pub diffusion_jacobian: ColumnJacobianFn,
}

/// Parameters of the truncated Heston discretisation: asset coordinates
/// follow a multiplicative update, the last coordinate is the variance and
/// is truncated at zero under the square root and in the mean reversion.
#[derive(Clone, Debug)]
pub struct HestonTruncSpec {
    pub rate: f64,
    /// Per-asset volatility multipliers, length `dim_state - 1`.
    pub sigma: Vec<f64>,
    /// Mean-reversion speed of the variance coordinate.
    pub reversion: f64,
    /// Long-run variance level.
    pub long_run: f64,
    /// Volatility of variance.
    pub vol_of_vol: f64,
    /// Correlation factor `A` with `A A^T = rho`, `dim_state x dim_noise`.
    pub corr_factor: DMatrix<f64>,
}

/// An SDE model: dimensions, initial state, horizon and coefficient
/// functions. Immutable after construction and safe to share across workers.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    dim_state: usize,
    dim_noise: usize,
    initial_state: Vec<f64>,
    horizon: f64,
    drift: StateFn,
    diffusion: MatrixFn,
    derivatives: Option<ModelDerivatives>,
    heston: Option<Arc<HestonTruncSpec>>,
}

impl ModelSpec {
    /// Build a model and validate its shape contract: `x0` has length
    /// `dim_state`, the horizon is positive, and drift/diffusion evaluated at
    /// `x0` have dimensions `dim_state` and `dim_state x dim_noise`.
    pub fn new(
        name: impl Into<String>,
        dim_state: usize,
        dim_noise: usize,
        initial_state: Vec<f64>,
        horizon: f64,
        drift: StateFn,
        diffusion: MatrixFn,
    ) -> Result<Self> {
        let name = name.into();
        if dim_state == 0 || dim_noise == 0 {
            return Err(Error::DimensionMismatch(format!(
                "model `{name}`: dimensions must be positive (d={dim_state}, m={dim_noise})"
            )));
        }
        if initial_state.len() != dim_state {
            return Err(Error::DimensionMismatch(format!(
                "model `{name}`: x0 has length {}, expected {dim_state}",
                initial_state.len()
            )));
        }
        if horizon.is_nan() || horizon <= 0.0 {
            return Err(Error::DimensionMismatch(format!(
                "model `{name}`: horizon must be positive, got {horizon}"
            )));
        }
        let mu0 = drift(&initial_state);
        if mu0.len() != dim_state {
            return Err(Error::DimensionMismatch(format!(
                "model `{name}`: drift(x0) has length {}, expected {dim_state}",
                mu0.len()
            )));
        }
        let sig0 = diffusion(&initial_state);
        if sig0.nrows() != dim_state || sig0.ncols() != dim_noise {
            return Err(Error::DimensionMismatch(format!(
                "model `{name}`: diffusion(x0) is {}x{}, expected {dim_state}x{dim_noise}",
                sig0.nrows(),
                sig0.ncols()
            )));
        }
        Ok(ModelSpec {
            name,
            dim_state,
            dim_noise,
            initial_state,
            horizon,
            drift,
            diffusion,
            derivatives: None,
            heston: None,
        })
    }

    /// Register analytic coefficient derivatives (enables the second-order
    /// weak Taylor scheme).
    pub fn with_derivatives(mut self, derivatives: ModelDerivatives) -> Self {
        self.derivatives = Some(derivatives);
        self
    }

    /// Attach the truncated Heston discretisation parameters (enables the
    /// `heston_trunc` scheme).
    pub fn with_heston_discretisation(mut self, spec: HestonTruncSpec) -> Self {
        self.heston = Some(Arc::new(spec));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        (self.drift)(x)
    }

    pub fn diffusion(&self, x: &[f64]) -> DMatrix<f64> {
        (self.diffusion)(x)
    }

    pub fn derivatives(&self) -> Option<&ModelDerivatives> {
        self.derivatives.as_ref()
    }

    pub fn heston(&self) -> Option<&HestonTruncSpec> {
        self.heston.as_deref()
    }

    /// Convenience constructor for a correlated geometric Brownian motion
    /// `dX^i = r X^i dt + sigma_i X^i A^i dW` with analytic derivatives.
    pub fn gbm(
        name: impl Into<String>,
        rate: f64,
        sigma: Vec<f64>,
        corr_factor: DMatrix<f64>,
        initial_state: Vec<f64>,
        horizon: f64,
    ) -> Result<Self> {
        let d = sigma.len();
        let m = corr_factor.ncols();
        if corr_factor.nrows() != d {
            return Err(Error::DimensionMismatch(format!(
                "gbm: correlation factor has {} rows, expected {d}",
                corr_factor.nrows()
            )));
        }
        let drift: StateFn = Arc::new(move |x: &[f64]| x.iter().map(|xi| rate * xi).collect());
        let a = corr_factor.clone();
        let sig = sigma.clone();
        let diffusion: MatrixFn = Arc::new(move |x: &[f64]| {
            DMatrix::from_fn(sig.len(), a.ncols(), |i, j| sig[i] * x[i] * a[(i, j)])
        });
        let drift_jac: MatrixFn = Arc::new(move |x: &[f64]| {
            DMatrix::from_fn(x.len(), x.len(), |i, k| if i == k { rate } else { 0.0 })
        });
        let a2 = corr_factor.clone();
        let sig2 = sigma.clone();
        let diffusion_jac: ColumnJacobianFn = Arc::new(move |x: &[f64], j: usize| {
            DMatrix::from_fn(x.len(), x.len(), |i, k| {
                if i == k {
                    sig2[i] * a2[(i, j)]
                } else {
                    0.0
                }
            })
        });
        Ok(
            ModelSpec::new(name, d, m, initial_state, horizon, drift, diffusion)?
                .with_derivatives(ModelDerivatives {
                    drift_jacobian: drift_jac,
                    diffusion_jacobian: diffusion_jac,
                }),
        )
    }
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim_state", &self.dim_state)
            .field("dim_noise", &self.dim_noise)
            .field("horizon", &self.horizon)
            .field("has_derivatives", &self.derivatives.is_some())
            .field("has_heston", &self.heston.is_some())
            .finish()
    }
}

/// Payoff functional `x -> f(x)`.
pub type PayoffFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A deterministic payoff functional on the terminal state, registered under
/// a string name so serialised artifacts can reference it.
#[derive(Clone)]
pub struct Payoff {
    name: String,
    eval: PayoffFn,
}

impl Payoff {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Payoff {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// `f(x) = x_1^2`.
    pub fn square() -> Self {
        Payoff::new("square", |x: &[f64]| x[0] * x[0])
    }

    /// Call on the maximum of the first `active_count` coordinates:
    /// `max(max_i x_i - strike, 0)`.
    pub fn call_on_max(strike: f64, active_count: usize) -> Self {
        let name = if strike == 1.0 {
            format!("call_on_max_{active_count}")
        } else {
            format!("call_on_max_{active_count}_strike_{strike}")
        };
        Payoff::new(name, move |x: &[f64]| {
            payoff_call_on_max(x, strike, active_count)
        })
    }

    /// Look up a registered payoff by name. Understands `square`,
    /// `call_on_max_<count>` and `call_on_max_<count>_strike_<strike>`.
    pub fn by_name(name: &str) -> Result<Payoff> {
        if name == "square" {
            return Ok(Payoff::square());
        }
        if let Some(rest) = name.strip_prefix("call_on_max_") {
            if let Some((count, strike)) = rest.split_once("_strike_") {
                if let (Ok(count), Ok(strike)) = (count.parse::<usize>(), strike.parse::<f64>()) {
                    return Ok(Payoff::call_on_max(strike, count));
                }
            } else if let Ok(count) = rest.parse::<usize>() {
                return Ok(Payoff::call_on_max(1.0, count));
            }
        }
        Err(Error::UnknownPayoff(name.to_string()))
    }
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payoff").field("name", &self.name).finish()
    }
}

/// `max(max over the first active_count coordinates of x - strike, 0)`.
///
/// Coordinates beyond `active_count` are ignored. `active_count` must not
/// exceed `x.len()`.
pub fn payoff_call_on_max(x: &[f64], strike: f64, active_count: usize) -> f64 {
    debug_assert!(active_count <= x.len());
    let best = x[..active_count]
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
    (best - strike).max(0.0)
}

/// A correlation matrix together with a factor `A` satisfying `A A^T = rho`.
#[derive(Clone, Debug)]
pub struct CorrelationSpec {
    rho: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl CorrelationSpec {
    pub fn new(rho: DMatrix<f64>) -> Result<Self> {
        let factor = correlation_factor(&rho)?;
        Ok(CorrelationSpec { rho, factor })
    }

    pub fn rho(&self) -> &DMatrix<f64> {
        &self.rho
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }
}

/// Lower-triangular factor `A` of a correlation matrix with `A A^T = rho`.
///
/// Uses a semidefinite Cholesky sweep: pivots within
/// [`RANK_PIVOT_TOLERANCE`] of zero produce a zero column (rank-revealing
/// behaviour for singular but PSD inputs); pivots below
/// `-`[`PSD_PIVOT_TOLERANCE`] are rejected.
pub fn correlation_factor(rho: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = rho.nrows();
    if rho.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "correlation matrix must be square, got {}x{}",
            n,
            rho.ncols()
        )));
    }
    let mut max_asym = 0.0f64;
    for i in 0..n {
        for k in (i + 1)..n {
            max_asym = max_asym.max((rho[(i, k)] - rho[(k, i)]).abs());
        }
    }
    if max_asym > SYMMETRY_TOLERANCE {
        return Err(Error::AsymmetricInput {
            max_asymmetry: max_asym,
        });
    }
    for i in 0..n {
        if (rho[(i, i)] - 1.0).abs() > SYMMETRY_TOLERANCE {
            return Err(Error::NotUnitDiagonal {
                index: i,
                value: rho[(i, i)],
            });
        }
    }

    // a zero pivot of a PSD matrix forces the rest of its column to zero;
    // residuals above sqrt(pivot_tol * diag_bound) betray indefiniteness
    let column_tolerance = (RANK_PIVOT_TOLERANCE * 4.0).sqrt();

    let mut factor = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut pivot = rho[(k, k)];
        for j in 0..k {
            pivot -= factor[(k, j)] * factor[(k, j)];
        }
        if pivot < -PSD_PIVOT_TOLERANCE {
            return Err(Error::NotPsd { index: k, pivot });
        }
        if pivot <= RANK_PIVOT_TOLERANCE {
            // zero pivot: the whole column stays zero, but only a PSD input
            // has a vanishing residual column
            for i in (k + 1)..n {
                let mut v = rho[(i, k)];
                for j in 0..k {
                    v -= factor[(i, j)] * factor[(k, j)];
                }
                if v.abs() > column_tolerance {
                    return Err(Error::NotPsd { index: k, pivot });
                }
            }
            continue;
        }
        let root = pivot.sqrt();
        factor[(k, k)] = root;
        for i in (k + 1)..n {
            let mut v = rho[(i, k)];
            for j in 0..k {
                v -= factor[(i, j)] * factor[(k, j)];
            }
            factor[(i, k)] = v / root;
        }
    }
    Ok(factor)
}

/// Correlation matrix of the ten-dimensional GBM benchmark: five coupled
/// pairs (0.9, -0.95, 0.5, -0.9, 0.8), zero elsewhere.
pub fn gbm10d_correlation() -> DMatrix<f64> {
    let mut rho = DMatrix::identity(10, 10);
    for &(i, k, v) in &[
        (1usize, 2usize, 0.9),
        (3, 4, -0.95),
        (5, 6, 0.5),
        (7, 8, -0.9),
        (9, 10, 0.8),
    ] {
        rho[(i - 1, k - 1)] = v;
        rho[(k - 1, i - 1)] = v;
    }
    rho
}

/// Correlation matrix of the nine-dimensional Heston benchmark: four coupled
/// asset pairs plus a common coupling of every asset to the variance factor.
pub fn heston9d_correlation() -> DMatrix<f64> {
    let mut rho = DMatrix::identity(9, 9);
    for &(i, k, v) in &[(1usize, 2usize, 0.9), (3, 4, -0.95), (5, 6, 0.5), (7, 8, -0.9)] {
        rho[(i - 1, k - 1)] = v;
        rho[(k - 1, i - 1)] = v;
    }
    for i in [1usize, 2, 3, 5, 6, 7] {
        rho[(i - 1, 8)] = -0.2;
        rho[(8, i - 1)] = -0.2;
    }
    for i in [4usize, 8] {
        rho[(i - 1, 8)] = 0.2;
        rho[(8, i - 1)] = 0.2;
    }
    rho
}

/// The benchmark model instances, by name:
///
/// * `gbm1d_highvol`: 1d GBM with `r = -1`, `sigma = 4`, `x0 = 1`, `T = 1`
///   and payoff `x^2`.
/// * `gbm10d`: 10d correlated GBM with `r = 0.05`, `sigma_i = 2`,
///   `x0 = (1,...,1)`, `T = 1` and a call on the max of all ten coordinates.
/// * `heston9d`: 8 assets with a common CIR variance factor
///   (`lambda = 0.1`, `vbar = 4`, `eta = 1`, `sigma_i = 1`, `r = 0.05`,
///   `x0 = (1,...,1,4)`, `T = 1`) and a call on the max of the first eight
///   coordinates; stepped with the truncated scheme.
pub fn builtin_model(name: &str) -> Result<(ModelSpec, Payoff)> {
    match name {
        "gbm1d_highvol" => {
            let model = ModelSpec::gbm(
                name,
                -1.0,
                vec![4.0],
                DMatrix::identity(1, 1),
                vec![1.0],
                1.0,
            )?;
            Ok((model, Payoff::square()))
        }
        "gbm10d" => {
            let factor = correlation_factor(&gbm10d_correlation())?;
            let model = ModelSpec::gbm(name, 0.05, vec![2.0; 10], factor, vec![1.0; 10], 1.0)?;
            Ok((model, Payoff::call_on_max(1.0, 10)))
        }
        "heston9d" => {
            let factor = correlation_factor(&heston9d_correlation())?;
            let spec = HestonTruncSpec {
                rate: 0.05,
                sigma: vec![1.0; 8],
                reversion: 0.1,
                long_run: 4.0,
                vol_of_vol: 1.0,
                corr_factor: factor.clone(),
            };
            let d = 9usize;
            let rate = spec.rate;
            let reversion = spec.reversion;
            let long_run = spec.long_run;
            let vol_of_vol = spec.vol_of_vol;
            let sigma = spec.sigma.clone();
            let drift: StateFn = Arc::new(move |x: &[f64]| {
                let mut mu: Vec<f64> = x[..d - 1].iter().map(|xi| rate * xi).collect();
                mu.push(reversion * (long_run - x[d - 1].max(0.0)));
                mu
            });
            let a = factor.clone();
            let diffusion: MatrixFn = Arc::new(move |x: &[f64]| {
                let vol = x[d - 1].max(0.0).sqrt();
                DMatrix::from_fn(d, d, |i, j| {
                    if i < d - 1 {
                        sigma[i] * x[i] * vol * a[(i, j)]
                    } else {
                        vol_of_vol * vol * a[(i, j)]
                    }
                })
            });
            let mut x0 = vec![1.0; 9];
            x0[8] = 4.0;
            let model = ModelSpec::new(name, 9, 9, x0, 1.0, drift, diffusion)?
                .with_heston_discretisation(spec);
            Ok((model, Payoff::call_on_max(1.0, 8)))
        }
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn identity_factors_to_identity() {
        let rho = DMatrix::identity(2, 2);
        let a = correlation_factor(&rho).unwrap();
        assert_eq!(a, DMatrix::identity(2, 2));
    }

    #[test]
    fn two_by_two_factor() {
        let rho = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let a = correlation_factor(&rho).unwrap();
        assert!((a[(0, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(a[(0, 1)], 0.0);
        assert!((a[(1, 0)] - 0.9).abs() < 1e-15);
        assert!((a[(1, 1)] - 0.435890).abs() < 5e-7);
        // verify the factorisation by direct multiplication
        assert!(max_abs_diff(&(&a * a.transpose()), &rho) <= 1e-12);
    }

    #[test]
    fn benchmark_correlations_factor_exactly() {
        for rho in [gbm10d_correlation(), heston9d_correlation()] {
            let a = correlation_factor(&rho).unwrap();
            assert!(max_abs_diff(&(&a * a.transpose()), &rho) <= 1e-12);
            // lower triangular
            for i in 0..rho.nrows() {
                for j in (i + 1)..rho.ncols() {
                    assert_eq!(a[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn singular_psd_gets_zero_columns() {
        // all-ones matrix: rank one, PSD
        let rho = DMatrix::from_element(3, 3, 1.0);
        let a = correlation_factor(&rho).unwrap();
        assert!(max_abs_diff(&(&a * a.transpose()), &rho) <= 1e-12);
        for k in 1..3 {
            for i in 0..3 {
                assert_eq!(a[(i, k)], 0.0);
            }
        }
    }

    #[test]
    fn asymmetric_and_indefinite_inputs_are_rejected() {
        let mut rho = DMatrix::identity(2, 2);
        rho[(0, 1)] = 0.5;
        rho[(1, 0)] = 0.5 + 1e-9;
        assert!(matches!(
            correlation_factor(&rho),
            Err(Error::AsymmetricInput { .. })
        ));

        let bad = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        assert!(matches!(correlation_factor(&bad), Err(Error::NotPsd { .. })));

        let mut off = DMatrix::identity(2, 2);
        off[(1, 1)] = 1.0 + 1e-6;
        assert!(matches!(
            correlation_factor(&off),
            Err(Error::NotUnitDiagonal { .. })
        ));
    }

    #[test]
    fn factor_is_idempotent_on_its_gram_matrix() {
        let rho = gbm10d_correlation();
        let a = correlation_factor(&rho).unwrap();
        let gram = &a * a.transpose();
        let b = correlation_factor(&gram).unwrap();
        assert!(max_abs_diff(&(&b * b.transpose()), &gram) <= 1e-12);
    }

    #[test]
    fn call_on_max_examples() {
        assert!((payoff_call_on_max(&[1.2, 0.8], 1.0, 2) - 0.2).abs() < 1e-15);
        assert_eq!(payoff_call_on_max(&[0.5, 0.7], 1.0, 2), 0.0);
        assert_eq!(payoff_call_on_max(&[1.5, 2.0, 0.1], 1.0, 2), 1.0);
    }

    #[test]
    fn builtin_gbm1d_coefficients() {
        let (model, payoff) = builtin_model("gbm1d_highvol").unwrap();
        assert_eq!(model.drift(&[2.0]), vec![-2.0]);
        assert_eq!(model.diffusion(&[2.0])[(0, 0)], 8.0);
        assert_eq!(payoff.eval(&[3.0]), 9.0);
    }

    #[test]
    fn builtin_gbm10d_correlation_entries() {
        let rho = gbm10d_correlation();
        assert_eq!(rho[(0, 1)], 0.9);
        assert_eq!(rho[(2, 3)], -0.95);
    }

    #[test]
    fn builtin_heston_feller_ratio() {
        let (model, payoff) = builtin_model("heston9d").unwrap();
        let h = model.heston().unwrap();
        let feller = 2.0 * h.reversion * h.long_run / (h.vol_of_vol * h.vol_of_vol);
        assert!((feller - 0.8).abs() < 1e-15);
        // payoff only sees the first 8 coordinates
        let mut x = vec![0.0; 9];
        x[8] = 100.0;
        assert_eq!(payoff.eval(&x), 0.0);
    }

    #[test]
    fn builtin_diffusion_shapes() {
        for name in ["gbm1d_highvol", "gbm10d", "heston9d"] {
            let (model, _) = builtin_model(name).unwrap();
            let sig = model.diffusion(model.initial_state());
            assert_eq!(sig.nrows(), model.dim_state());
            assert_eq!(sig.ncols(), model.dim_noise());
        }
    }

    #[test]
    fn unknown_names_error() {
        assert!(matches!(
            builtin_model("nope"),
            Err(Error::UnknownModel(_))
        ));
        assert!(matches!(Payoff::by_name("nope"), Err(Error::UnknownPayoff(_))));
    }

    #[test]
    fn payoff_registry_round_trip() {
        for p in [
            Payoff::square(),
            Payoff::call_on_max(1.0, 8),
            Payoff::call_on_max(2.5, 3),
        ] {
            let q = Payoff::by_name(p.name()).unwrap();
            let x = [0.4, 1.9, 3.2, 0.1, 2.2, 0.3, 0.9, 1.1];
            assert_eq!(p.eval(&x), q.eval(&x));
        }
    }
}
