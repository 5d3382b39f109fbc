//! Polynomial-plus-payoff basis, linear least squares, truncation and
//! stratified sample selection.
//!
//! Basis functions are the monomials of total degree at most `p` in a fixed
//! graded-lexicographic order (grades ascending, exponent tuples within a
//! grade in lexicographically decreasing order, so for d = 2, p = 2 the
//! order is `1, x1, x2, x1^2, x1 x2, x2^2`), optionally followed by the
//! payoff as the last basis function.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Payoff;
use crate::scheme::{InnovationKey, PathSet};

/// Relative singular-value cutoff of the least-squares solver: singular
/// values below `cutoff * sigma_max` (after column equilibration) are
/// treated as zero.
pub const SINGULAR_VALUE_CUTOFF: f64 = 1e-10;

/// The regression basis: monomials of total degree `<= degree` over
/// `dimension` coordinates, optionally augmented with the payoff.
#[derive(Clone, Debug)]
pub struct BasisSet {
    dimension: usize,
    degree: usize,
    payoff: Option<Payoff>,
    exponents: Vec<Vec<u32>>,
}

impl BasisSet {
    /// Pure polynomial basis with `C(degree + dimension, dimension)` members.
    pub fn polynomial(dimension: usize, degree: usize) -> Self {
        BasisSet {
            dimension,
            degree,
            payoff: None,
            exponents: graded_monomials(dimension, degree),
        }
    }

    /// Polynomial basis with the payoff appended as the last member.
    pub fn with_payoff(dimension: usize, degree: usize, payoff: Payoff) -> Self {
        BasisSet {
            dimension,
            degree,
            payoff: Some(payoff),
            exponents: graded_monomials(dimension, degree),
        }
    }

    /// Number of basis functions `K`.
    pub fn len(&self) -> usize {
        self.exponents.len() + usize::from(self.payoff.is_some())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn include_payoff(&self) -> bool {
        self.payoff.is_some()
    }

    pub fn payoff(&self) -> Option<&Payoff> {
        self.payoff.as_ref()
    }

    /// Monomial exponent tuples in evaluation order (payoff excluded).
    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Evaluate all `K` basis functions at `x`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dimension);
        let mut out = Vec::with_capacity(self.len());
        for exps in &self.exponents {
            let mut v = 1.0;
            for (xi, &e) in x.iter().zip(exps) {
                if e > 0 {
                    v *= xi.powi(e as i32);
                }
            }
            out.push(v);
        }
        if let Some(p) = &self.payoff {
            out.push(p.eval(x));
        }
        out
    }

    /// Design matrix with one row per path, basis evaluated at the state
    /// after `step` steps (`step = 0` is the initial state).
    pub fn design_matrix(&self, paths: &PathSet, step: usize) -> DMatrix<f64> {
        let n = paths.n_paths();
        let k = self.len();
        let mut data = vec![0.0; n * k];
        for p in 0..n {
            let row = self.eval(paths.state(p, step));
            data[p * k..(p + 1) * k].copy_from_slice(&row);
        }
        DMatrix::from_row_slice(n, k, &data)
    }
}

/// All exponent tuples with total degree at most `degree`, graded
/// lexicographic: grades ascending, within a grade lexicographically
/// decreasing.
fn graded_monomials(dimension: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut all = Vec::new();
    let mut current = vec![0u32; dimension];
    fn recurse(pos: usize, remaining: u32, current: &mut Vec<u32>, all: &mut Vec<Vec<u32>>) {
        if pos == current.len() {
            all.push(current.clone());
            return;
        }
        for e in 0..=remaining {
            current[pos] = e;
            recurse(pos + 1, remaining - e, current, all);
        }
        current[pos] = 0;
    }
    recurse(0, degree as u32, &mut current, &mut all);
    all.sort_by(|a, b| {
        let da: u32 = a.iter().sum();
        let db: u32 = b.iter().sum();
        da.cmp(&db).then_with(|| b.cmp(a))
    });
    all
}

/// A fitted linear combination of basis functions.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionFit {
    coefficients: Vec<f64>,
    n_samples: usize,
    truncation_bound: Option<f64>,
    condition: Option<f64>,
}

impl RegressionFit {
    /// The zero fit, used as the fallback for empty strata.
    pub fn zero(len: usize, truncation_bound: Option<f64>) -> Self {
        RegressionFit {
            coefficients: vec![0.0; len],
            n_samples: 0,
            truncation_bound,
            condition: None,
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn truncation_bound(&self) -> Option<f64> {
        self.truncation_bound
    }

    /// Ratio of the largest to the smallest retained singular value of the
    /// equilibrated design; `None` for zero fits.
    pub fn condition(&self) -> Option<f64> {
        self.condition
    }

    /// Evaluate the fit on precomputed basis values, applying the truncation
    /// operator when a bound is set.
    #[inline]
    pub fn predict(&self, basis_values: &[f64]) -> f64 {
        debug_assert_eq!(basis_values.len(), self.coefficients.len());
        let mut acc = 0.0;
        for (c, b) in self.coefficients.iter().zip(basis_values) {
            acc += c * b;
        }
        match self.truncation_bound {
            Some(a) => truncate_estimate(acc, a),
            None => acc,
        }
    }
}

/// Minimal-norm least squares of `targets` on the columns of `design`.
///
/// Columns are scaled to unit Euclidean norm before a rank-revealing
/// orthogonal factorisation; singular values below
/// [`SINGULAR_VALUE_CUTOFF`] relative to the largest are treated as zero,
/// so duplicated or nearly collinear columns (for example a payoff that is
/// itself a monomial) degrade to the minimal-norm solution instead of
/// blowing up.
pub fn fit_least_squares(design: &DMatrix<f64>, targets: &DVector<f64>) -> Result<RegressionFit> {
    let fits = fit_multi_scaled(
        design,
        &DMatrix::from_column_slice(targets.len(), 1, targets.as_slice()),
        None,
    )?;
    Ok(fits.into_iter().next().expect("one target column"))
}

/// Least squares of several target columns against one shared design
/// factorisation. Returns one fit per target column.
pub fn fit_least_squares_multi(
    design: &DMatrix<f64>,
    targets: &DMatrix<f64>,
) -> Result<Vec<RegressionFit>> {
    fit_multi_scaled(design, targets, None)
}

/// Core solver. `scales` optionally fixes the column equilibration (the
/// stratified trainer passes scales computed over the whole training set so
/// the minimal-norm tie-break is identical across strata); otherwise each
/// column is scaled by its own norm.
pub(crate) fn fit_multi_scaled(
    design: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    scales: Option<&[f64]>,
) -> Result<Vec<RegressionFit>> {
    let n = design.nrows();
    let k = design.ncols();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if targets.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows but targets have {}",
            targets.nrows()
        )));
    }
    if !design.iter().all(|v| v.is_finite()) || !targets.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }

    let mut scaled = design.clone();
    let col_scales: Vec<f64> = match scales {
        Some(s) => {
            debug_assert_eq!(s.len(), k);
            s.iter().map(|&v| if v > 0.0 { v } else { 1.0 }).collect()
        }
        None => (0..k)
            .map(|c| {
                let norm = scaled.column(c).norm();
                if norm > 0.0 {
                    norm
                } else {
                    1.0
                }
            })
            .collect(),
    };
    for c in 0..k {
        let inv = 1.0 / col_scales[c];
        for r in 0..n {
            scaled[(r, c)] *= inv;
        }
    }

    // tall designs: reduce to the k x k triangular factor first
    let (factor, reduced_targets) = if n > k {
        let qr = scaled.qr();
        let q = qr.q();
        let r = qr.r();
        (r, q.transpose() * targets)
    } else {
        (scaled, targets.clone())
    };

    let (u, sigma, v) = jacobi_svd(&factor);
    let sv_max = sigma.iter().fold(0.0f64, |a, &s| a.max(s));
    let n_targets = targets.ncols();
    if sv_max == 0.0 {
        return Ok((0..n_targets)
            .map(|_| RegressionFit {
                coefficients: vec![0.0; k],
                n_samples: n,
                truncation_bound: None,
                condition: None,
            })
            .collect());
    }
    let eps = SINGULAR_VALUE_CUTOFF * sv_max;
    let sv_min_retained = sigma
        .iter()
        .filter(|&&s| s > eps)
        .fold(sv_max, |a, &s| a.min(s));
    let condition = sv_max / sv_min_retained;

    Ok((0..n_targets)
        .map(|t| {
            // beta = V diag(1/sigma) U^T c over the retained spectrum
            let c_vec = reduced_targets.column(t);
            let mut beta_scaled = vec![0.0f64; k];
            for (i, &s) in sigma.iter().enumerate() {
                if s <= eps {
                    continue;
                }
                let mut ui_c = 0.0;
                for r in 0..u.nrows() {
                    ui_c += u[(r, i)] * c_vec[r];
                }
                let w = ui_c / s;
                for (b, vc) in beta_scaled.iter_mut().zip(v.column(i).iter()) {
                    *b += w * vc;
                }
            }
            let coefficients = (0..k).map(|c| beta_scaled[c] / col_scales[c]).collect();
            RegressionFit {
                coefficients,
                n_samples: n,
                truncation_bound: None,
                condition: Some(condition),
            }
        })
        .collect())
}

/// One-sided Jacobi SVD of an `n x k` matrix with `n <= k` or small `n`:
/// orthogonalises the columns by plane rotations. Returns `(u, sigma, v)`
/// with `a = u * diag(sigma) * v^T`, `u` having unit (or zero) columns.
/// Slow but numerically robust for the small factors it is applied to,
/// including exactly rank-deficient ones.
fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let k = a.ncols();
    let mut u = a.clone();
    let mut v = DMatrix::identity(k, k);
    let n = u.nrows();
    for _sweep in 0..64 {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for r in 0..n {
                    app += u[(r, p)] * u[(r, p)];
                    aqq += u[(r, q)] * u[(r, q)];
                    apq += u[(r, p)] * u[(r, q)];
                }
                if apq == 0.0 || apq.abs() <= 1e-16 * (app * aqq).sqrt() {
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..n {
                    let up = u[(r, p)];
                    let uq = u[(r, q)];
                    u[(r, p)] = c * up - s * uq;
                    u[(r, q)] = s * up + c * uq;
                }
                for r in 0..k {
                    let vp = v[(r, p)];
                    let vq = v[(r, q)];
                    v[(r, p)] = c * vp - s * vq;
                    v[(r, q)] = s * vp + c * vq;
                }
                rotated = true;
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma = vec![0.0f64; k];
    for cidx in 0..k {
        let norm = u.column(cidx).norm();
        sigma[cidx] = norm;
        if norm > 0.0 {
            for r in 0..n {
                u[(r, cidx)] /= norm;
            }
        }
    }
    (u, sigma, v)
}

/// Attach a truncation bound to a fit so every prediction is clipped to
/// `[-bound, bound]`.
pub fn with_truncation(mut fit: RegressionFit, bound: Option<f64>) -> RegressionFit {
    fit.truncation_bound = bound;
    fit
}

/// The truncation operator: `value` on `[-bound, bound]`, else
/// `bound * sign(value)`.
#[inline]
pub fn truncate_estimate(value: f64, bound: f64) -> f64 {
    debug_assert!(bound > 0.0);
    value.clamp(-bound, bound)
}

/// Partition path indices by the exact innovation value at `step`
/// (1-based). Keys are the observed innovations; the lists are disjoint and
/// their union is `0..n_paths`.
pub fn stratify_by_innovation(paths: &PathSet, step: usize) -> BTreeMap<InnovationKey, Vec<usize>> {
    assert!(
        (1..=paths.n_steps()).contains(&step),
        "step {step} out of range 1..={}",
        paths.n_steps()
    );
    let mut map: BTreeMap<InnovationKey, Vec<usize>> = BTreeMap::new();
    for p in 0..paths.n_paths() {
        map.entry(paths.innovation_key(p, step)).or_default().push(p);
    }
    map
}
