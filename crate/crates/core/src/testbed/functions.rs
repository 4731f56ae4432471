//! Closed-form test functions.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `sin(10πx)/(2x) + (x−1)⁴`, a rapidly oscillating 1-d function with a pole at 0.
pub fn gramacy1d(x: f64) -> Result<f64> {
    if x == 0.0 {
        return Err(Error::invalid("gramacy1d has a pole at x = 0"));
    }
    Ok((10.0 * PI * x).sin() / (2.0 * x) + (x - 1.0).powi(4))
}

/// Cauchy density with location `mu` and spread `sigma`.
pub fn cauchy_density(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    1.0 / (PI * sigma * (1.0 + z * z))
}

/// `sin(x) − 0.02·c(x; 1.57, 0.05)`: a sine with a sharp, heavy-tailed dip
/// near π/2 that breaks stationarity.
pub fn cauchysine(x: f64) -> f64 {
    x.sin() - 0.02 * cauchy_density(x, 1.57, 0.05)
}

/// `x1·exp(−x1² − x2²)`.
pub fn exp2d(x1: f64, x2: f64) -> f64 {
    x1 * (-x1 * x1 - x2 * x2).exp()
}

/// First Friedman function: `10 sin(π x1 x2) + 20(x3 − 0.5)² + 10 x4 + 5 x5`.
pub fn friedman5(x: &[f64; 5]) -> f64 {
    10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
}

/// Bumpy 1-d profile whose product forms [`f2d`].
pub fn w(y: f64) -> f64 {
    (-(y - 1.0).powi(2)).exp() + (-0.8 * (y + 1.0).powi(2)).exp() - 0.05 * (8.0 * (y + 0.1)).sin()
}

/// `−w(x1)·w(x2)`, a 2-d surface with about a dozen local minima.
pub fn f2d(x1: f64, x2: f64) -> f64 {
    -w(x1) * w(x2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gramacy_examples() {
        assert!(gramacy1d(1.0).unwrap().abs() < 1e-14);
        assert!((gramacy1d(0.5).unwrap() - 0.0625).abs() < 1e-14);
        assert!((gramacy1d(2.5).unwrap() - 5.0625).abs() < 1e-13);
        assert!(gramacy1d(0.0).is_err());
    }

    #[test]
    fn cauchysine_examples() {
        // frozen from a scalar evaluation: sin(1.57) − 0.02/(π·0.05)
        assert!((cauchysine(1.57) - 0.8726757284583183).abs() < 1e-12);
        assert!((cauchysine(1.57) - 0.872676).abs() < 1e-6);
        // −0.02/(π·0.05·(1 + 31.4²))
        assert!((cauchysine(0.0) + 1.290061952597028e-4).abs() < 1e-15);
        for x in [1e3, 1e5, -1e5] {
            assert!((cauchysine(x) - x.sin()).abs() < 1e-6 * (1e3 / x.abs()).max(1e-3));
        }
    }

    #[test]
    fn exp2d_examples() {
        assert_eq!(exp2d(0.0, 3.0), 0.0);
        assert!((exp2d(1.0, 0.0) - (-1.0f64).exp()).abs() < 1e-15);
        for (a, b) in [(0.3, -1.2), (1.7, 0.4), (-2.0, 5.0)] {
            assert_eq!(exp2d(-a, b), -exp2d(a, b));
        }
    }

    #[test]
    fn friedman_examples() {
        assert_eq!(friedman5(&[0.0, 0.0, 0.5, 0.0, 0.0]), 0.0);
        assert!((friedman5(&[1.0, 0.5, 0.5, 1.0, 1.0]) - 25.0).abs() < 1e-12);
        assert!((friedman5(&[0.5; 5]) - 14.571067811865476).abs() < 1e-12);
    }

    #[test]
    fn w_and_f2d_examples() {
        assert!((w(0.0) - 0.7813406007436877).abs() < 1e-13);
        assert!((f2d(1.0, 1.0) + 1.0231653148543702).abs() < 1e-12);
        for (u, v) in [(0.2, -0.7), (1.4, 0.0), (-1.5, 1.5)] {
            assert_eq!(f2d(u, v), f2d(v, u));
        }
    }
}
