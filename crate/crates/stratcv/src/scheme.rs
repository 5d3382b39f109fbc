//! Discrete-innovation weak schemes and path simulation.
//!
//! First-order schemes drive each step with i.i.d. signs `xi in {-1,+1}^m`;
//! the second-order scheme uses three-point variables
//! `xi in {-sqrt3, 0, +sqrt3}^m` together with antisymmetric sign surrogates
//! `V^{kl} in {-1,+1}` for the mixed noise terms. Innovations are stored as
//! small integer levels so they can be stratified on exactly; a level `l`
//! of a second-order `xi` coordinate denotes the value `l * sqrt(3)`.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::rng::CounterRng;

/// `sqrt(3)`, the nonzero magnitude of second-order innovations.
pub const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Time-discretisation scheme selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Simplified weak Euler scheme (order 1).
    Euler1,
    /// Simplified second-order weak Taylor scheme.
    Taylor2,
    /// The truncated Heston update (order 1, model-specific).
    HestonTrunc,
}

impl Scheme {
    /// Weak order of the innovation law (1 or 2).
    pub fn order(self) -> u8 {
        match self {
            Scheme::Euler1 | Scheme::HestonTrunc => 1,
            Scheme::Taylor2 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Euler1 => "euler1",
            Scheme::Taylor2 => "taylor2",
            Scheme::HestonTrunc => "heston_trunc",
        }
    }

    pub fn parse(s: &str) -> Result<Scheme> {
        match s {
            "euler1" => Ok(Scheme::Euler1),
            "taylor2" => Ok(Scheme::Taylor2),
            "heston_trunc" => Ok(Scheme::HestonTrunc),
            other => Err(Error::UnknownScheme(other.to_string())),
        }
    }

    fn id(self) -> u8 {
        match self {
            Scheme::Euler1 => 1,
            Scheme::Taylor2 => 2,
            Scheme::HestonTrunc => 3,
        }
    }

    fn from_id(id: u8) -> Result<Scheme> {
        match id {
            1 => Ok(Scheme::Euler1),
            2 => Ok(Scheme::Taylor2),
            3 => Ok(Scheme::HestonTrunc),
            other => Err(Error::InvalidDump(format!("unknown scheme id {other}"))),
        }
    }

    /// Number of `V` coordinates per step for `m` noise dimensions.
    pub fn pair_count(self, dim_noise: usize) -> usize {
        match self.order() {
            2 => dim_noise * (dim_noise - 1) / 2,
            _ => 0,
        }
    }
}

/// One first-order innovation: `m` signs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InnovationFirst {
    levels: Vec<i8>,
}

impl InnovationFirst {
    pub fn new(levels: Vec<i8>) -> Result<Self> {
        if let Some(&bad) = levels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::InvalidCoordinate { value: bad as f64 });
        }
        Ok(InnovationFirst { levels })
    }

    pub fn levels(&self) -> &[i8] {
        &self.levels
    }

    pub fn values(&self) -> Vec<f64> {
        self.levels.iter().map(|&l| l as f64).collect()
    }
}

/// One second-order innovation: `m` three-point levels (value `level*sqrt3`)
/// plus `m(m-1)/2` pair signs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InnovationSecond {
    xi_levels: Vec<i8>,
    v_levels: Vec<i8>,
}

impl InnovationSecond {
    pub fn new(xi_levels: Vec<i8>, v_levels: Vec<i8>) -> Result<Self> {
        let m = xi_levels.len();
        if let Some(&bad) = xi_levels.iter().find(|&&l| !(-1..=1).contains(&l)) {
            return Err(Error::InvalidCoordinate { value: bad as f64 });
        }
        if let Some(&bad) = v_levels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::InvalidCoordinate { value: bad as f64 });
        }
        if v_levels.len() != m * (m - 1) / 2 {
            return Err(Error::DimensionMismatch(format!(
                "expected {} pair signs for m={m}, got {}",
                m * (m - 1) / 2,
                v_levels.len()
            )));
        }
        Ok(InnovationSecond { xi_levels, v_levels })
    }

    pub fn xi_levels(&self) -> &[i8] {
        &self.xi_levels
    }

    pub fn v_levels(&self) -> &[i8] {
        &self.v_levels
    }

    /// The `xi` coordinates as real values in `{-sqrt3, 0, sqrt3}`.
    pub fn xi_values(&self) -> Vec<f64> {
        self.xi_levels.iter().map(|&l| l as f64 * SQRT_3).collect()
    }
}

/// The innovation observed at one path step, used as a stratification key.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InnovationKey {
    /// Sign levels (order 1) or three-point levels (order 2).
    pub xi: Vec<i8>,
    /// Pair signs; empty for order-1 schemes.
    pub v: Vec<i8>,
}

impl std::fmt::Display for InnovationKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "xi={:?}", self.xi)?;
        if !self.v.is_empty() {
            write!(f, ",v={:?}", self.v)?;
        }
        Ok(())
    }
}

/// Draw one first-order innovation: `m` i.i.d. uniform signs.
pub fn sample_innovation_first(rng: &mut CounterRng, dim_noise: usize) -> InnovationFirst {
    InnovationFirst {
        levels: (0..dim_noise).map(|_| rng.next_sign()).collect(),
    }
}

/// Draw one second-order innovation: `m` i.i.d. three-point levels and
/// `m(m-1)/2` i.i.d. signs, mutually independent.
pub fn sample_innovation_second(rng: &mut CounterRng, dim_noise: usize) -> InnovationSecond {
    let xi_levels = (0..dim_noise).map(|_| rng.next_three_point()).collect();
    let v_levels = (0..dim_noise * (dim_noise - 1) / 2)
        .map(|_| rng.next_sign())
        .collect();
    InnovationSecond { xi_levels, v_levels }
}

/// Flat index of the pair `(k, l)` with `k < l` in lexicographic order.
#[inline]
pub fn pair_index(k: usize, l: usize, m: usize) -> usize {
    debug_assert!(k < l && l < m);
    k * m - k * (k + 1) / 2 + (l - k - 1)
}

/// One simplified weak Euler step `x + mu(x) dt + sigma(x) y sqrt(dt)` with
/// sign innovations `y`.
pub fn step_weak_euler(model: &ModelSpec, x: &[f64], xi: &[i8], delta: f64) -> Vec<f64> {
    debug_assert_eq!(xi.len(), model.dim_noise());
    let mu = model.drift(x);
    let sig = model.diffusion(x);
    let sqrt_dt = delta.sqrt();
    let d = model.dim_state();
    let m = model.dim_noise();
    let mut out = vec![0.0; d];
    for i in 0..d {
        let mut noise = 0.0;
        for (j, &level) in xi.iter().enumerate().take(m) {
            noise += sig[(i, j)] * level as f64;
        }
        out[i] = x[i] + mu[i] * delta + noise * sqrt_dt;
    }
    out
}

/// One simplified second-order weak Taylor step.
///
/// With `DW_j = sqrt(dt) * xi_j` (three-point `xi`) the update is
///
/// ```text
/// x + mu dt + 1/2 (L0 mu) dt^2
///   + sum_j [ sigma_j + dt/2 (L0 sigma_j + L_j mu) ] DW_j
///   + 1/2 sum_{j1,j2} (L_{j1} sigma_{j2}) (DW_{j1} DW_{j2} + V_{j1,j2})
/// ```
///
/// where `V_{jj} = -dt`, `V_{kl} = dt * v_{kl}` for `k < l` and
/// `V_{lk} = -V_{kl}`. The operators use the registered first derivatives;
/// the curvature part of `L0` vanishes for affine coefficients, which covers
/// every builtin model that ships derivatives.
pub fn step_weak_taylor2(
    model: &ModelSpec,
    x: &[f64],
    xi: &[i8],
    v: &[i8],
    delta: f64,
) -> Result<Vec<f64>> {
    let der = model
        .derivatives()
        .ok_or_else(|| Error::DerivativeUnavailable(model.name().to_string()))?;
    let d = model.dim_state();
    let m = model.dim_noise();
    debug_assert_eq!(xi.len(), m);
    debug_assert_eq!(v.len(), m * (m - 1) / 2);

    let mu = model.drift(x);
    let sig = model.diffusion(x);
    let dmu = (der.drift_jacobian)(x);
    let dsig: Vec<_> = (0..m).map(|j| (der.diffusion_jacobian)(x, j)).collect();

    let sqrt_dt = delta.sqrt();
    let dw: Vec<f64> = xi.iter().map(|&l| l as f64 * SQRT_3 * sqrt_dt).collect();

    let mut out = vec![0.0; d];
    for i in 0..d {
        // deterministic part: mu dt + 1/2 (mu . grad mu) dt^2
        let mut l0_mu = 0.0;
        for k in 0..d {
            l0_mu += mu[k] * dmu[(i, k)];
        }
        let mut acc = x[i] + mu[i] * delta + 0.5 * l0_mu * delta * delta;

        // linear noise terms with the dt/2 (L0 sigma + L_j mu) correction
        for j in 0..m {
            let mut l0_sig = 0.0; // mu . grad sigma_{i,j}
            let mut lj_mu = 0.0; // sigma_{.,j} . grad mu_i
            for k in 0..d {
                l0_sig += mu[k] * dsig[j][(i, k)];
                lj_mu += sig[(k, j)] * dmu[(i, k)];
            }
            acc += (sig[(i, j)] + 0.5 * delta * (l0_sig + lj_mu)) * dw[j];
        }

        // mixed terms 1/2 sum L_{j1} sigma_{j2} (DW DW + V)
        for j1 in 0..m {
            for j2 in 0..m {
                let mut l_j1_sig_j2 = 0.0; // sigma_{.,j1} . grad sigma_{i,j2}
                for k in 0..d {
                    l_j1_sig_j2 += sig[(k, j1)] * dsig[j2][(i, k)];
                }
                if l_j1_sig_j2 == 0.0 {
                    continue;
                }
                let v_term = if j1 == j2 {
                    -delta
                } else if j1 < j2 {
                    delta * v[pair_index(j1, j2, m)] as f64
                } else {
                    -delta * v[pair_index(j2, j1, m)] as f64
                };
                acc += 0.5 * l_j1_sig_j2 * (dw[j1] * dw[j2] + v_term);
            }
        }
        out[i] = acc;
    }
    Ok(out)
}

/// One truncated Heston step: asset coordinates update multiplicatively,
/// the variance coordinate truncates at zero under the square root and in
/// the mean-reversion term.
pub fn step_heston_truncated(
    model: &ModelSpec,
    x: &[f64],
    xi: &[i8],
    delta: f64,
) -> Result<Vec<f64>> {
    let spec = model.heston().ok_or_else(|| Error::SchemeModelMismatch {
        scheme: Scheme::HestonTrunc.name(),
        model: model.name().to_string(),
        reason: "model does not carry truncated-Heston parameters".to_string(),
    })?;
    let d = model.dim_state();
    let m = model.dim_noise();
    debug_assert_eq!(xi.len(), m);
    let sqrt_dt = delta.sqrt();
    let vol = x[d - 1].max(0.0).sqrt();
    let mut out = vec![0.0; d];
    for i in 0..d {
        let mut noise = 0.0;
        for (j, &level) in xi.iter().enumerate().take(m) {
            noise += spec.corr_factor[(i, j)] * level as f64;
        }
        if i < d - 1 {
            out[i] = x[i] * (1.0 + spec.rate * delta + spec.sigma[i] * vol * noise * sqrt_dt);
        } else {
            out[i] = x[i]
                + spec.reversion * (spec.long_run - x[i].max(0.0)) * delta
                + spec.vol_of_vol * vol * noise * sqrt_dt;
        }
    }
    Ok(out)
}

/// Dispatch one step of the given scheme. `v` is ignored by order-1 schemes.
pub fn step_scheme(
    model: &ModelSpec,
    scheme: Scheme,
    x: &[f64],
    xi: &[i8],
    v: &[i8],
    delta: f64,
) -> Result<Vec<f64>> {
    match scheme {
        Scheme::Euler1 => Ok(step_weak_euler(model, x, xi, delta)),
        Scheme::Taylor2 => step_weak_taylor2(model, x, xi, v, delta),
        Scheme::HestonTrunc => step_heston_truncated(model, x, xi, delta),
    }
}

/// A set of simulated paths: every intermediate state and every innovation,
/// so that stored states can be reproduced bit-for-bit by re-stepping and
/// control variates can stratify and multiply on the stored innovations.
///
/// Immutable after simulation; safe for concurrent reads.
#[derive(Clone, Debug)]
pub struct PathSet {
    model: ModelSpec,
    scheme: Scheme,
    n_paths: usize,
    n_steps: usize,
    delta: f64,
    seed: u64,
    path_offset: u64,
    states: Vec<f64>,
    xi: Vec<i8>,
    v: Vec<i8>,
}

const DUMP_MAGIC: &[u8; 4] = b"SCVP";
const DUMP_VERSION: u32 = 1;

impl PathSet {
    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Step size `delta = horizon / n_steps`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Absolute index of the first path (nonzero when simulated in chunks).
    pub fn path_offset(&self) -> u64 {
        self.path_offset
    }

    /// State of path `p` after `j` steps (`j = 0` is the initial state).
    #[inline]
    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        let d = self.model.dim_state();
        let base = (path * (self.n_steps + 1) + step) * d;
        &self.states[base..base + d]
    }

    #[inline]
    pub fn terminal_state(&self, path: usize) -> &[f64] {
        self.state(path, self.n_steps)
    }

    /// Innovation levels of path `p` at step `j` (1-based, `1..=n_steps`).
    #[inline]
    pub fn xi_levels(&self, path: usize, step: usize) -> &[i8] {
        debug_assert!((1..=self.n_steps).contains(&step));
        let m = self.model.dim_noise();
        let base = (path * self.n_steps + (step - 1)) * m;
        &self.xi[base..base + m]
    }

    /// Pair-sign levels of path `p` at step `j`; empty for order-1 schemes.
    #[inline]
    pub fn v_levels(&self, path: usize, step: usize) -> &[i8] {
        let pairs = self.scheme.pair_count(self.model.dim_noise());
        if pairs == 0 {
            return &[];
        }
        debug_assert!((1..=self.n_steps).contains(&step));
        let base = (path * self.n_steps + (step - 1)) * pairs;
        &self.v[base..base + pairs]
    }

    /// Stratification key of path `p` at step `j`.
    pub fn innovation_key(&self, path: usize, step: usize) -> InnovationKey {
        InnovationKey {
            xi: self.xi_levels(path, step).to_vec(),
            v: self.v_levels(path, step).to_vec(),
        }
    }

    /// Build a path set from explicitly given innovation levels, stepping the
    /// scheme to fill in the states. `xi` is `n_paths * n_steps * m` levels
    /// (path-major), `v` is `n_paths * n_steps * pairs` levels.
    pub fn from_innovations(
        model: &ModelSpec,
        scheme: Scheme,
        n_steps: usize,
        n_paths: usize,
        seed: u64,
        xi: Vec<i8>,
        v: Vec<i8>,
    ) -> Result<PathSet> {
        let d = model.dim_state();
        let m = model.dim_noise();
        let pairs = scheme.pair_count(m);
        if n_steps == 0 || n_paths == 0 {
            return Err(Error::DimensionMismatch(
                "n_steps and n_paths must be at least 1".to_string(),
            ));
        }
        if xi.len() != n_paths * n_steps * m {
            return Err(Error::DimensionMismatch(format!(
                "expected {} xi levels, got {}",
                n_paths * n_steps * m,
                xi.len()
            )));
        }
        if v.len() != n_paths * n_steps * pairs {
            return Err(Error::DimensionMismatch(format!(
                "expected {} pair-sign levels, got {}",
                n_paths * n_steps * pairs,
                v.len()
            )));
        }
        let delta = model.horizon() / n_steps as f64;
        let states = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let mut path_states = Vec::with_capacity((n_steps + 1) * d);
                let mut x = model.initial_state().to_vec();
                path_states.extend_from_slice(&x);
                for j in 0..n_steps {
                    let xi_j = &xi[(p * n_steps + j) * m..(p * n_steps + j + 1) * m];
                    let v_j = &v[(p * n_steps + j) * pairs..(p * n_steps + j + 1) * pairs];
                    x = step_scheme(model, scheme, &x, xi_j, v_j, delta)?;
                    path_states.extend_from_slice(&x);
                }
                Ok(path_states)
            })
            .collect::<Result<Vec<_>>>()?
            .concat();
        Ok(PathSet {
            model: model.clone(),
            scheme,
            n_paths,
            n_steps,
            delta,
            seed,
            path_offset: 0,
            states,
            xi,
            v,
        })
    }

    /// Recompute all states by re-stepping the stored innovations. Equals the
    /// stored state array bit-for-bit.
    pub fn recompute_states(&self) -> Result<Vec<f64>> {
        let twin = PathSet::from_innovations(
            &self.model,
            self.scheme,
            self.n_steps,
            self.n_paths,
            self.seed,
            self.xi.clone(),
            self.v.clone(),
        )?;
        Ok(twin.states)
    }

    /// Binary dump (debugging aid). Header: magic, version, d, m, J,
    /// n_paths, seed, scheme id, path offset, delta; body: little-endian
    /// f64 states followed by the raw innovation levels as signed bytes
    /// (second-order `xi` bytes are scaled by `sqrt(3)` on use).
    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&(self.model.dim_state() as u32).to_le_bytes())?;
        w.write_all(&(self.model.dim_noise() as u32).to_le_bytes())?;
        w.write_all(&(self.n_steps as u64).to_le_bytes())?;
        w.write_all(&(self.n_paths as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&[self.scheme.id()])?;
        w.write_all(&self.path_offset.to_le_bytes())?;
        w.write_all(&self.delta.to_le_bytes())?;
        for s in &self.states {
            w.write_all(&s.to_le_bytes())?;
        }
        let xi_bytes: Vec<u8> = self.xi.iter().map(|&l| l as u8).collect();
        w.write_all(&xi_bytes)?;
        let v_bytes: Vec<u8> = self.v.iter().map(|&l| l as u8).collect();
        w.write_all(&v_bytes)?;
        Ok(())
    }

    /// Read a binary dump back. The model is supplied by the caller and must
    /// match the dumped dimensions.
    pub fn read_binary<R: Read>(r: &mut R, model: ModelSpec) -> Result<PathSet> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::InvalidDump("bad magic".to_string()));
        }
        let version = read_u32(r)?;
        if version != DUMP_VERSION {
            return Err(Error::InvalidDump(format!("unsupported version {version}")));
        }
        let d = read_u32(r)? as usize;
        let m = read_u32(r)? as usize;
        let n_steps = read_u64(r)? as usize;
        let n_paths = read_u64(r)? as usize;
        let seed = read_u64(r)?;
        let mut id = [0u8; 1];
        r.read_exact(&mut id)?;
        let scheme = Scheme::from_id(id[0])?;
        let path_offset = read_u64(r)?;
        let delta = f64::from_le_bytes(read_array(r)?);
        if d != model.dim_state() || m != model.dim_noise() {
            return Err(Error::InvalidDump(format!(
                "dump dimensions {d}x{m} do not match model {}x{}",
                model.dim_state(),
                model.dim_noise()
            )));
        }
        let n_states = n_paths * (n_steps + 1) * d;
        let mut states = Vec::with_capacity(n_states);
        for _ in 0..n_states {
            states.push(f64::from_le_bytes(read_array(r)?));
        }
        let mut xi_bytes = vec![0u8; n_paths * n_steps * m];
        r.read_exact(&mut xi_bytes)?;
        let xi: Vec<i8> = xi_bytes.iter().map(|&b| b as i8).collect();
        let pairs = scheme.pair_count(m);
        let mut v_bytes = vec![0u8; n_paths * n_steps * pairs];
        r.read_exact(&mut v_bytes)?;
        let v: Vec<i8> = v_bytes.iter().map(|&b| b as i8).collect();
        let admissible = |l: i8| match scheme.order() {
            1 => l == 1 || l == -1,
            _ => (-1..=1).contains(&l),
        };
        if !xi.iter().all(|&l| admissible(l)) || !v.iter().all(|&l| l == 1 || l == -1) {
            return Err(Error::InvalidDump("inadmissible innovation level".to_string()));
        }
        Ok(PathSet {
            model,
            scheme,
            n_paths,
            n_steps,
            delta,
            seed,
            path_offset,
            states,
            xi,
            v,
        })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Simulate `n_paths` independent paths of the scheme.
///
/// Innovations come from counter-mode streams keyed by
/// `(seed, path_index, step_index)`, so the result is bit-identical for any
/// worker count and any chunking of the path range.
pub fn simulate_paths(
    model: &ModelSpec,
    scheme: Scheme,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet> {
    simulate_paths_offset(model, scheme, n_steps, 0, n_paths, seed)
}

/// Simulate the absolute path range `[first_path, first_path + n_paths)`.
/// Concatenating chunked calls reproduces a single [`simulate_paths`] call
/// exactly.
pub fn simulate_paths_offset(
    model: &ModelSpec,
    scheme: Scheme,
    n_steps: usize,
    first_path: u64,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet> {
    if n_steps == 0 || n_paths == 0 {
        return Err(Error::DimensionMismatch(
            "n_steps and n_paths must be at least 1".to_string(),
        ));
    }
    let m = model.dim_noise();
    let pairs = scheme.pair_count(m);
    if scheme == Scheme::Taylor2 && model.derivatives().is_none() {
        return Err(Error::DerivativeUnavailable(model.name().to_string()));
    }
    if scheme == Scheme::HestonTrunc && model.heston().is_none() {
        return Err(Error::SchemeModelMismatch {
            scheme: scheme.name(),
            model: model.name().to_string(),
            reason: "model does not carry truncated-Heston parameters".to_string(),
        });
    }

    let per_path: Vec<(Vec<f64>, Vec<i8>, Vec<i8>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let d = model.dim_state();
            let delta = model.horizon() / n_steps as f64;
            let mut states = Vec::with_capacity((n_steps + 1) * d);
            let mut xi = Vec::with_capacity(n_steps * m);
            let mut v = Vec::with_capacity(n_steps * pairs);
            let mut x = model.initial_state().to_vec();
            states.extend_from_slice(&x);
            for j in 0..n_steps {
                let mut rng = CounterRng::new(seed, first_path + p as u64, j as u64);
                let start_xi = xi.len();
                let start_v = v.len();
                match scheme.order() {
                    1 => {
                        for _ in 0..m {
                            xi.push(rng.next_sign());
                        }
                    }
                    _ => {
                        for _ in 0..m {
                            xi.push(rng.next_three_point());
                        }
                        for _ in 0..pairs {
                            v.push(rng.next_sign());
                        }
                    }
                }
                x = step_scheme(model, scheme, &x, &xi[start_xi..], &v[start_v..], delta)?;
                states.extend_from_slice(&x);
            }
            Ok((states, xi, v))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut states = Vec::with_capacity(n_paths * (n_steps + 1) * model.dim_state());
    let mut xi = Vec::with_capacity(n_paths * n_steps * m);
    let mut v = Vec::with_capacity(n_paths * n_steps * pairs);
    for (s, a, b) in per_path {
        states.extend_from_slice(&s);
        xi.extend_from_slice(&a);
        v.extend_from_slice(&b);
    }
    Ok(PathSet {
        model: model.clone(),
        scheme,
        n_paths,
        n_steps,
        delta: model.horizon() / n_steps as f64,
        seed,
        path_offset: first_path,
        states,
        xi,
        v,
    })
}
