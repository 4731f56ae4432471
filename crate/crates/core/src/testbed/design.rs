//! Space-filling and random designs over a rectangular domain.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::validate_bounds;

/// Which design generator to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Uniform,
    Lhs,
    Grid,
}

impl std::str::FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "lhs" => Ok(Self::Lhs),
            "grid" => Ok(Self::Grid),
            other => Err(Error::Config(format!(
                "unknown design kind '{other}' (expected uniform, lhs, grid)"
            ))),
        }
    }
}

/// Generates `n` points of the given kind. A grid needs `n` to be a perfect
/// `m`-th power and uses `n^(1/m)` levels per dimension.
pub fn design(
    kind: DesignKind,
    n: usize,
    domain: &[(f64, f64)],
    seed: u64,
) -> Result<DMatrix<f64>> {
    match kind {
        DesignKind::Uniform => uniform_design(n, domain, seed),
        DesignKind::Lhs => lhs_design(n, domain, seed),
        DesignKind::Grid => grid_design(grid_levels(n, domain.len())?, domain),
    }
}

/// Levels per dimension of an `n`-point grid in `m` dimensions.
pub fn grid_levels(n: usize, m: usize) -> Result<usize> {
    if m == 0 {
        return Err(Error::invalid("domain has no dimensions"));
    }
    let root = (n as f64).powf(1.0 / m as f64).round() as usize;
    match (root.saturating_sub(1)..=root + 1).find(|r| r.checked_pow(m as u32) == Some(n)) {
        Some(r) if r > 0 => Ok(r),
        _ => Err(Error::invalid(format!(
            "a grid in {m} dimensions needs a perfect {m}-th power of points, got {n}"
        ))),
    }
}

fn check(n: usize, domain: &[(f64, f64)]) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("design size must be at least 1"));
    }
    validate_bounds(domain)
}

/// Independent uniform coordinates.
pub fn uniform_design(n: usize, domain: &[(f64, f64)], seed: u64) -> Result<DMatrix<f64>> {
    check(n, domain)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = domain.len();
    let mut x = DMatrix::zeros(n, m);
    for i in 0..n {
        for (l, &(lo, hi)) in domain.iter().enumerate() {
            x[(i, l)] = lo + (hi - lo) * rng.random::<f64>();
        }
    }
    Ok(x)
}

/// Random Latin hypercube: each of the `n` equal strata of every coordinate
/// holds exactly one point, at a uniform position inside the stratum.
pub fn lhs_design(n: usize, domain: &[(f64, f64)], seed: u64) -> Result<DMatrix<f64>> {
    check(n, domain)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, domain.len());
    let mut perm: Vec<usize> = (0..n).collect();
    for (l, &(lo, hi)) in domain.iter().enumerate() {
        perm.shuffle(&mut rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let u = (stratum as f64 + rng.random::<f64>()) / n as f64;
            x[(i, l)] = lo + (hi - lo) * u;
        }
    }
    Ok(x)
}

/// Full lattice with `n_per_dim` equispaced levels per coordinate, endpoints
/// included; the last coordinate varies fastest. A single level sits at the
/// domain midpoint.
pub fn grid_design(n_per_dim: usize, domain: &[(f64, f64)]) -> Result<DMatrix<f64>> {
    check(n_per_dim, domain)?;
    let m = domain.len();
    let total = n_per_dim
        .checked_pow(m as u32)
        .filter(|&t| t <= 10_000_000)
        .ok_or_else(|| Error::invalid("grid too large"))?;
    let level = |l: usize, k: usize| {
        let (lo, hi) = domain[l];
        if n_per_dim == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (n_per_dim - 1) as f64
        }
    };
    let mut x = DMatrix::zeros(total, m);
    for i in 0..total {
        let mut rest = i;
        for l in (0..m).rev() {
            x[(i, l)] = level(l, rest % n_per_dim);
            rest /= n_per_dim;
        }
    }
    Ok(x)
}
