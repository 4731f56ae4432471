//! Gaussian-process kernels, the σ²-integrated marginal likelihood, and
//! Student-t kriging prediction.
//!
//! The covariance between two inputs is `σ²·[exp(−Σ_ℓ (x_jℓ − x_kℓ)²/d_ℓ) + g·δ_jk]`.
//! Responses are standardized to mean 0 / sd 1 and modeled with a zero mean;
//! σ² carries an Inverse-Gamma(a, b) prior and is integrated out, so the
//! marginal of `y` is multivariate Student-t and so is every prediction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{chol_shifted, chol_with_jitter, dot, CholFactor};

const BOUNDS_TOL: f64 = 1e-12;
/// Most negative eigenvalue tolerated in a joint predictive correlation.
const PSD_TOL: f64 = 1e-8;

/// Per-dimension `(lo, hi)` ranges of the raw inputs.
pub type Bounds = Vec<(f64, f64)>;

/// Maps raw inputs onto the unit cube: `(raw − lo)/(hi − lo)` per column.
///
/// Values outside `bounds` (beyond a `1e-12` tolerance) are rejected; use
/// [`scale_points`] for test locations that may extrapolate.
pub fn scale_inputs(raw: &DMatrix<f64>, bounds: &[(f64, f64)]) -> Result<DMatrix<f64>> {
    let (scaled, outside) = scale_points(raw, bounds)?;
    if let Some((i, l)) = outside {
        return Err(Error::invalid(format!(
            "input ({i},{l}) = {} lies outside bounds {:?}",
            raw[(i, l)],
            bounds[l]
        )));
    }
    Ok(scaled.map(|v| v.clamp(0.0, 1.0)))
}

/// `(row, column)` of an input entry.
pub type Entry = (usize, usize);

/// Like [`scale_inputs`] but lets points fall outside the bounds, reporting the
/// first offending entry.
pub fn scale_points(
    raw: &DMatrix<f64>,
    bounds: &[(f64, f64)],
) -> Result<(DMatrix<f64>, Option<Entry>)> {
    validate_bounds(bounds)?;
    if raw.ncols() != bounds.len() {
        return Err(Error::invalid(format!(
            "inputs have {} columns but {} bounds were given",
            raw.ncols(),
            bounds.len()
        )));
    }
    let mut outside = None;
    let mut scaled = raw.clone();
    for (l, &(lo, hi)) in bounds.iter().enumerate() {
        let width = hi - lo;
        for i in 0..raw.nrows() {
            let v = raw[(i, l)];
            if !v.is_finite() {
                return Err(Error::invalid(format!("input ({i},{l}) is not finite")));
            }
            let tol = BOUNDS_TOL * (1.0 + lo.abs().max(hi.abs()));
            if outside.is_none() && (v < lo - tol || v > hi + tol) {
                outside = Some((i, l));
            }
            scaled[(i, l)] = (v - lo) / width;
        }
    }
    Ok((scaled, outside))
}

/// Inverse of [`scale_inputs`].
pub fn unscale_inputs(scaled: &DMatrix<f64>, bounds: &[(f64, f64)]) -> DMatrix<f64> {
    let mut raw = scaled.clone();
    for (l, &(lo, hi)) in bounds.iter().enumerate() {
        for i in 0..raw.nrows() {
            raw[(i, l)] = lo + scaled[(i, l)] * (hi - lo);
        }
    }
    raw
}

pub(crate) fn validate_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::invalid("at least one input dimension is required"));
    }
    for (l, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::invalid(format!(
                "degenerate bound for dimension {l}: ({lo}, {hi})"
            )));
        }
    }
    Ok(())
}

/// Training data: unit-cube inputs and standardized responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    bounds: Bounds,
    y: DVector<f64>,
    y_mean: f64,
    y_sd: f64,
}

impl Dataset {
    /// Scales `raw_x` by `bounds` and standardizes `raw_y`.
    ///
    /// With a single observation, or a constant response, the standard
    /// deviation is set to 1 so the transformation stays invertible.
    pub fn new(raw_x: &DMatrix<f64>, bounds: Bounds, raw_y: &[f64]) -> Result<Self> {
        if raw_x.nrows() == 0 {
            return Err(Error::invalid("dataset needs at least one row"));
        }
        if raw_x.nrows() != raw_y.len() {
            return Err(Error::invalid(format!(
                "{} input rows but {} responses",
                raw_x.nrows(),
                raw_y.len()
            )));
        }
        if let Some(i) = raw_y.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("response {i} is not finite")));
        }
        let x = scale_inputs(raw_x, &bounds)?;
        let n = raw_y.len() as f64;
        let y_mean = raw_y.iter().sum::<f64>() / n;
        let y_sd = if raw_y.len() >= 2 {
            let ss: f64 = raw_y.iter().map(|v| (v - y_mean).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let y_sd = if y_sd > 0.0 { y_sd } else { 1.0 };
        let y = DVector::from_iterator(raw_y.len(), raw_y.iter().map(|v| (v - y_mean) / y_sd));
        Ok(Self {
            x,
            bounds,
            y,
            y_mean,
            y_sd,
        })
    }

    /// Bounds taken from the per-column min/max of the inputs.
    pub fn with_data_bounds(raw_x: &DMatrix<f64>, raw_y: &[f64]) -> Result<Self> {
        let bounds = (0..raw_x.ncols())
            .map(|l| {
                let col = raw_x.column(l);
                (col.min(), col.max())
            })
            .collect();
        Self::new(raw_x, bounds, raw_y)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    /// Scaled inputs, one row per observation.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Standardized responses.
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn y_sd(&self) -> f64 {
        self.y_sd
    }

    pub fn raw_x(&self) -> DMatrix<f64> {
        unscale_inputs(&self.x, &self.bounds)
    }

    pub fn raw_y(&self) -> Vec<f64> {
        self.y.iter().map(|&v| self.destandardize(v)).collect()
    }

    pub fn standardize(&self, raw: f64) -> f64 {
        (raw - self.y_mean) / self.y_sd
    }

    pub fn destandardize(&self, v: f64) -> f64 {
        v * self.y_sd + self.y_mean
    }

    /// Scales test locations with this dataset's bounds. The flag is true when
    /// any location falls outside them.
    pub fn scale_test_points(&self, raw: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
        let (scaled, outside) = scale_points(raw, &self.bounds)?;
        Ok((scaled, outside.is_some()))
    }
}

/// Range parameters `d` (one per input dimension) and nugget `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    d: Vec<f64>,
    g: f64,
    isotropic: bool,
}

impl Hyperparams {
    pub fn new(d: Vec<f64>, g: f64, isotropic: bool) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::invalid("range vector d is empty"));
        }
        if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(format!(
                "range parameters must be positive: {d:?}"
            )));
        }
        if !(g.is_finite() && g >= 0.0) {
            return Err(Error::invalid(format!("nugget must be nonnegative: {g}")));
        }
        if isotropic && d.iter().any(|&v| v != d[0]) {
            return Err(Error::invalid(
                "isotropic range parameters must all be equal",
            ));
        }
        Ok(Self { d, g, isotropic })
    }

    /// A single range `d` shared by all `m` dimensions.
    pub fn isotropic(m: usize, d: f64, g: f64) -> Result<Self> {
        Self::new(vec![d; m], g, true)
    }

    pub fn separable(d: Vec<f64>, g: f64) -> Result<Self> {
        Self::new(d, g, false)
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn is_isotropic(&self) -> bool {
        self.isotropic
    }

    pub fn m(&self) -> usize {
        self.d.len()
    }

    pub(crate) fn set_g(&mut self, g: f64) {
        debug_assert!(g >= 0.0);
        self.g = g;
    }

    /// Sets `d_ℓ`, or every component when isotropic.
    pub(crate) fn set_d(&mut self, l: usize, v: f64) {
        debug_assert!(v > 0.0);
        if self.isotropic {
            self.d.iter_mut().for_each(|d| *d = v);
        } else {
            self.d[l] = v;
        }
    }
}

#[inline]
fn scaled_sq_dist(x: &DMatrix<f64>, j: usize, z: &DMatrix<f64>, k: usize, inv_d: &[f64]) -> f64 {
    inv_d
        .iter()
        .enumerate()
        .map(|(l, w)| {
            let diff = x[(j, l)] - z[(k, l)];
            diff * diff * w
        })
        .sum()
}

/// Training correlation `K_jk = exp(−Σ_ℓ Δ²/d_ℓ) + g·δ_jk`.
pub fn correlation_matrix(x: &DMatrix<f64>, hp: &Hyperparams) -> DMatrix<f64> {
    assert_eq!(
        x.ncols(),
        hp.m(),
        "input dimension does not match hyperparameters"
    );
    let n = x.nrows();
    let inv_d: Vec<f64> = hp.d.iter().map(|d| d.recip()).collect();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = 1.0 + hp.g;
        for i in (j + 1)..n {
            let v = (-scaled_sq_dist(x, i, x, j, &inv_d)).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Correlation between test rows and training rows (`p × n`), with no nugget
/// term even where a test point coincides with a training point.
pub fn cross_correlation(
    x: &DMatrix<f64>,
    xstar: &DMatrix<f64>,
    hp: &Hyperparams,
) -> Result<DMatrix<f64>> {
    if x.ncols() != xstar.ncols() || x.ncols() != hp.m() {
        return Err(Error::invalid(format!(
            "dimension mismatch: training m={}, test m={}, hyperparameters m={}",
            x.ncols(),
            xstar.ncols(),
            hp.m()
        )));
    }
    let inv_d: Vec<f64> = hp.d.iter().map(|d| d.recip()).collect();
    let (p, n) = (xstar.nrows(), x.nrows());
    Ok(DMatrix::from_fn(p, n, |i, j| {
        (-scaled_sq_dist(xstar, i, x, j, &inv_d)).exp()
    }))
}

/// Pairwise squared coordinate differences of the training inputs, cached so
/// that repeated likelihood evaluations only pay for the exponentials.
#[derive(Debug, Clone)]
pub struct PairwiseSq {
    n: usize,
    m: usize,
    // pair (i, j), i > j, in column-major lower-triangle order; m entries each
    diffs: Vec<f64>,
}

impl PairwiseSq {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let (n, m) = (x.nrows(), x.ncols());
        let mut diffs = Vec::with_capacity(n * n.saturating_sub(1) / 2 * m);
        for j in 0..n {
            for i in (j + 1)..n {
                for l in 0..m {
                    let d = x[(i, l)] - x[(j, l)];
                    diffs.push(d * d);
                }
            }
        }
        Self { n, m, diffs }
    }

    /// Same matrix as [`correlation_matrix`] on the cached inputs.
    pub fn correlation(&self, hp: &Hyperparams) -> DMatrix<f64> {
        assert_eq!(self.m, hp.m());
        let n = self.n;
        let inv_d: Vec<f64> = hp.d.iter().map(|d| d.recip()).collect();
        let mut k = DMatrix::zeros(n, n);
        let mut chunks = self.diffs.chunks_exact(self.m.max(1));
        for j in 0..n {
            k[(j, j)] = 1.0 + hp.g;
            for i in (j + 1)..n {
                let c = chunks.next().expect("pair count");
                let s: f64 = c.iter().zip(&inv_d).map(|(a, b)| a * b).sum();
                let v = (-s).exp();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

/// Log of the multivariate Student-t marginal obtained by integrating the
/// zero-mean Gaussian likelihood against an Inverse-Gamma(a, b) prior on σ².
pub fn log_marginal(data: &Dataset, hp: &Hyperparams, a: f64, b: f64) -> Result<f64> {
    check_ig(a, b)?;
    let k = correlation_matrix(data.x(), hp);
    let chol = chol_with_jitter(&k)?;
    Ok(log_marginal_from_factor(&chol, data.y().as_slice(), a, b))
}

pub(crate) fn log_marginal_from_factor(chol: &CholFactor, y: &[f64], a: f64, b: f64) -> f64 {
    let n = y.len() as f64;
    let q = chol.quad_form(y);
    let a_post = a + 0.5 * n;
    a * b.ln() + ln_gamma(a_post)
        - ln_gamma(a)
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * chol.log_det()
        - a_post * (b + 0.5 * q).ln()
}

pub(crate) fn check_ig(a: f64, b: f64) -> Result<()> {
    if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "Inverse-Gamma parameters must be positive: a={a}, b={b}"
        )))
    }
}

/// Student-t predictive distribution over a set of test locations, in
/// standardized units.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDist {
    pub df: f64,
    pub loc: Vec<f64>,
    /// Squared scale per point (the variance is `scale·df/(df−2)`).
    pub scale: Vec<f64>,
    pub joint_scale: Option<DMatrix<f64>>,
    pub includes_noise: bool,
    pub y_mean: f64,
    pub y_sd: f64,
}

impl PredictiveDist {
    /// Pointwise predictive variance; `None` when `df ≤ 2`.
    pub fn variance(&self) -> Option<Vec<f64>> {
        (self.df > 2.0).then(|| {
            let c = self.df / (self.df - 2.0);
            self.scale.iter().map(|s| s * c).collect()
        })
    }

    /// Predictive means in original response units.
    pub fn mean_original(&self) -> Vec<f64> {
        self.loc
            .iter()
            .map(|v| v * self.y_sd + self.y_mean)
            .collect()
    }
}

/// A model whose training correlation has been factored once, ready for
/// repeated predictions.
#[derive(Debug, Clone)]
pub struct FittedGp<'a> {
    data: &'a Dataset,
    hp: Hyperparams,
    chol: CholFactor,
    // L⁻¹ y
    z: Vec<f64>,
    s2: f64,
    df: f64,
}

impl<'a> FittedGp<'a> {
    pub fn new(data: &'a Dataset, hp: &Hyperparams, a: f64, b: f64) -> Result<Self> {
        check_ig(a, b)?;
        if hp.m() != data.m() {
            return Err(Error::invalid(format!(
                "hyperparameters have m={} but data has m={}",
                hp.m(),
                data.m()
            )));
        }
        let k = correlation_matrix(data.x(), hp);
        let chol = chol_with_jitter(&k)?;
        Ok(Self::from_factor(data, hp.clone(), chol, a, b))
    }

    pub(crate) fn from_factor(
        data: &'a Dataset,
        hp: Hyperparams,
        chol: CholFactor,
        a: f64,
        b: f64,
    ) -> Self {
        let mut z = data.y().as_slice().to_vec();
        chol.solve_lower_in_place(&mut z);
        let q = dot(&z, &z);
        let n = data.n() as f64;
        let df = 2.0 * a + n;
        Self {
            data,
            hp,
            chol,
            z,
            s2: (2.0 * b + q) / df,
            df,
        }
    }

    pub fn jitter_used(&self) -> f64 {
        self.chol.jitter_used()
    }

    /// Posterior scale factor `s² = (2b + yᵀK⁻¹y)/(2a + n)`.
    pub fn s2(&self) -> f64 {
        self.s2
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn predict(
        &self,
        xstar: &DMatrix<f64>,
        include_noise: bool,
        want_joint: bool,
    ) -> Result<PredictiveDist> {
        if !want_joint {
            let (loc, v) = self.loc_and_projection(xstar)?;
            let nugget = if include_noise { self.hp.g } else { 0.0 };
            let scale = v
                .column_iter()
                .map(|c| {
                    let r = 1.0 + nugget - dot(c.as_slice(), c.as_slice());
                    self.s2 * r.max(0.0)
                })
                .collect();
            return Ok(self.dist(loc, scale, None, include_noise));
        }
        let (loc, mut m) = self.joint_correlation(xstar, include_noise)?;
        if chol_shifted(&m, PSD_TOL).is_none() {
            return Err(Error::Numerical(format!(
                "joint predictive correlation has an eigenvalue below -{PSD_TOL:e}"
            )));
        }
        m *= self.s2;
        let p = xstar.nrows();
        let scale = (0..p).map(|i| m[(i, i)].max(0.0)).collect();
        Ok(self.dist(loc, scale, Some(m), include_noise))
    }

    /// Predictive location only, as `k* K⁻¹ y` (standardized units).
    pub fn predict_loc(&self, xstar: &DMatrix<f64>) -> Result<Vec<f64>> {
        let mut alpha = self.z.clone();
        self.chol.solve_upper_in_place(&mut alpha);
        let kstar = cross_correlation(self.data.x(), xstar, &self.hp)?;
        Ok(kstar
            .row_iter()
            .map(|r| r.iter().zip(&alpha).map(|(k, a)| k * a).sum())
            .collect())
    }

    /// Predictive location and `V = L⁻¹ k*ᵀ` (one column per test point).
    fn loc_and_projection(&self, xstar: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let kstar = cross_correlation(self.data.x(), xstar, &self.hp)?;
        let mut v = kstar.transpose();
        self.chol.solve_lower_columns(&mut v);
        let loc = v
            .column_iter()
            .map(|c| dot(c.as_slice(), &self.z))
            .collect();
        Ok((loc, v))
    }

    /// Location and the joint predictive correlation `K** (+ gI) − k* K⁻¹ k*ᵀ`
    /// (the scale matrix divided by `s²`), without any definiteness check.
    pub(crate) fn joint_correlation(
        &self,
        xstar: &DMatrix<f64>,
        include_noise: bool,
    ) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (loc, v) = self.loc_and_projection(xstar)?;
        let p = xstar.nrows();
        let nugget = if include_noise { self.hp.g } else { 0.0 };
        let inv_d: Vec<f64> = self.hp.d.iter().map(|d| d.recip()).collect();
        let mut m = DMatrix::zeros(p, p);
        for j in 0..p {
            let vj = v.column(j);
            for i in j..p {
                let prior = if i == j {
                    1.0 + nugget
                } else {
                    (-scaled_sq_dist(xstar, i, xstar, j, &inv_d)).exp()
                };
                let val = prior - dot(v.column(i).as_slice(), vj.as_slice());
                m[(i, j)] = val;
                m[(j, i)] = val;
            }
        }
        Ok((loc, m))
    }

    fn dist(
        &self,
        loc: Vec<f64>,
        scale: Vec<f64>,
        joint_scale: Option<DMatrix<f64>>,
        includes_noise: bool,
    ) -> PredictiveDist {
        PredictiveDist {
            df: self.df,
            loc,
            scale,
            joint_scale,
            includes_noise,
            y_mean: self.data.y_mean(),
            y_sd: self.data.y_sd(),
        }
    }
}

/// Kriging prediction at scaled test inputs `xstar`.
///
/// `include_noise` adds the nugget to the test-point variance (predicting a new
/// observation rather than the latent surface); `want_joint` also returns the
/// full scale matrix over the test set.
pub fn predict(
    data: &Dataset,
    hp: &Hyperparams,
    xstar: &DMatrix<f64>,
    a: f64,
    b: f64,
    include_noise: bool,
    want_joint: bool,
) -> Result<PredictiveDist> {
    FittedGp::new(data, hp, a, b)?.predict(xstar, include_noise, want_joint)
}

/// Above this many degrees of freedom the incomplete-beta inversion loses
/// accuracy and a Cornish-Fisher expansion around the normal is used instead.
const LARGE_DF: f64 = 1e4;

/// Two-sided `t_{df, (1+level)/2}` quantile.
pub fn t_quantile(df: f64, level: f64) -> Result<f64> {
    check_level(level)?;
    let p = 0.5 * (1.0 + level);
    if df.is_finite() && df > LARGE_DF {
        let z = Normal::standard().inverse_cdf(p);
        let (z3, z5) = (z.powi(3), z.powi(5));
        return Ok(z + (z3 + z) / (4.0 * df) + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * df * df));
    }
    let t = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::invalid(format!("invalid degrees of freedom {df}: {e}")))?;
    Ok(t.inverse_cdf(p))
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "credible level must lie in (0,1), got {level}"
        )))
    }
}

/// Central equal-tailed Student-t intervals, in original response units.
pub fn credible_bounds(pd: &PredictiveDist, level: f64) -> Result<Vec<(f64, f64)>> {
    let q = t_quantile(pd.df, level)?;
    Ok(pd
        .loc
        .iter()
        .zip(&pd.scale)
        .map(|(&loc, &s)| {
            let half = q * s.max(0.0).sqrt();
            (
                (loc - half) * pd.y_sd + pd.y_mean,
                (loc + half) * pd.y_sd + pd.y_mean,
            )
        })
        .collect())
}
