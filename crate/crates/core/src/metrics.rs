//! Fit-quality measures: MSE, pointwise coverage, Mahalanobis distance, and
//! the paired t-test, plus six-number summaries.
//!
//! Quantiles everywhere in this crate use linear interpolation between order
//! statistics: the `q`-quantile of `n` sorted values is read at position
//! `(n − 1)·q` (R's default "type 7").

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::linalg::chol_with_jitter;

/// Linear-interpolation quantile; reorders `v`. Panics on an empty slice.
pub fn quantile_in_place(v: &mut [f64], q: f64) -> f64 {
    assert!(!v.is_empty(), "quantile of an empty sample");
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let k = h.floor() as usize;
    let frac = h - k as f64;
    let (_, &mut lower, right) = v.select_nth_unstable_by(k, f64::total_cmp);
    if frac == 0.0 || right.is_empty() {
        return lower;
    }
    let upper = right.iter().copied().fold(f64::INFINITY, f64::min);
    lower + frac * (upper - lower)
}

/// Min., 1st Qu., Median, Mean, 3rd Qu., Max. of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryTable {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

impl SummaryTable {
    pub const ROW_LABELS: [&'static str; 6] =
        ["Min.", "1st Qu.", "Median", "Mean", "3rd Qu.", "Max."];

    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("cannot summarize an empty sample"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("cannot summarize a sample containing NaN"));
        }
        let mut v = values.to_vec();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let q1 = quantile_in_place(&mut v, 0.25);
        let median = quantile_in_place(&mut v, 0.5);
        let q3 = quantile_in_place(&mut v, 0.75);
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            min,
            q1,
            median,
            mean,
            q3,
            max,
        })
    }

    /// The statistics in table row order.
    pub fn rows(&self) -> [f64; 6] {
        [self.min, self.q1, self.median, self.mean, self.q3, self.max]
    }
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::invalid("empty input"));
    }
    Ok(())
}

/// Mean squared difference between predictions and the truth.
pub fn mse(pred_mean: &[f64], truth: &[f64]) -> Result<f64> {
    same_len(pred_mean.len(), truth.len())?;
    let ss: f64 = pred_mean
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(ss / truth.len() as f64)
}

/// Fraction of points whose true value lies in `[lo, hi]`.
pub fn pointwise_coverage(bounds: &[(f64, f64)], truth: &[f64]) -> Result<f64> {
    same_len(bounds.len(), truth.len())?;
    if let Some(i) = bounds.iter().position(|(lo, hi)| lo > hi) {
        return Err(Error::invalid(format!("interval {i} has lo > hi")));
    }
    let hits = bounds
        .iter()
        .zip(truth)
        .filter(|((lo, hi), t)| lo <= *t && *t <= hi)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Square root of the Mahalanobis distance of `truth` under a multivariate
/// Student-t with location `loc`, scale matrix `joint_scale` and `df` degrees
/// of freedom, using the predictive covariance `joint_scale·df/(df−2)`.
pub fn mahalanobis_distance(
    truth: &[f64],
    loc: &[f64],
    joint_scale: &DMatrix<f64>,
    df: f64,
) -> Result<f64> {
    mahalanobis_with_jitter(truth, loc, joint_scale, df).map(|(d, _)| d)
}

/// [`mahalanobis_distance`] that also reports the jitter the covariance needed.
pub fn mahalanobis_with_jitter(
    truth: &[f64],
    loc: &[f64],
    joint_scale: &DMatrix<f64>,
    df: f64,
) -> Result<(f64, f64)> {
    let (d, jitter) = mahalanobis_many(&[truth], loc, joint_scale, df)?;
    Ok((d[0], jitter))
}

/// Distances of several truth vectors under one predictive distribution,
/// factoring the covariance once.
pub fn mahalanobis_many(
    truths: &[&[f64]],
    loc: &[f64],
    joint_scale: &DMatrix<f64>,
    df: f64,
) -> Result<(Vec<f64>, f64)> {
    for t in truths {
        same_len(t.len(), loc.len())?;
    }
    let p = loc.len();
    if joint_scale.nrows() != p || joint_scale.ncols() != p {
        return Err(Error::invalid(format!(
            "scale matrix is {}x{} for {p} points",
            joint_scale.nrows(),
            joint_scale.ncols(),
        )));
    }
    if !(df > 2.0) {
        return Err(Error::invalid(format!(
            "predictive covariance undefined for df = {df} <= 2"
        )));
    }
    let cov = joint_scale * (df / (df - 2.0));
    let chol = chol_with_jitter(&cov)?;
    let dists = truths
        .iter()
        .map(|t| {
            let r: Vec<f64> = t.iter().zip(loc).map(|(t, l)| t - l).collect();
            chol.quad_form(&r).sqrt()
        })
        .collect();
    Ok((dists, chol.jitter_used()))
}

/// Paired t statistic and two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub p_two_sided: f64,
    pub df: f64,
    /// Mean of `a − b`.
    pub mean_diff: f64,
}

/// Paired t-test of `mean(a − b) = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    same_len(a.len(), b.len())?;
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("paired t-test needs at least two pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if !(var > 0.0) {
        return Err(Error::Degenerate(
            "paired differences have zero variance".into(),
        ));
    }
    let t = mean / (var / nf).sqrt();
    let df = nf - 1.0;
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest {
        t,
        p_two_sided: p,
        df,
        mean_diff: mean,
    })
}
