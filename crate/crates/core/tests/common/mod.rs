//! Reference computations shared by the integration tests. Nothing here calls
//! the library's own factorization or likelihood code.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use nugget::{Dataset, Hyperparams};

/// Gaussian correlation `exp(−Σ Δ²/d)` plus `g` on the diagonal, written out
/// entry by entry.
pub fn correlation(x: &DMatrix<f64>, d: &[f64], g: f64) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let s: f64 = (0..x.ncols())
            .map(|l| (x[(i, l)] - x[(j, l)]).powi(2) / d[l])
            .sum();
        (-s).exp() + if i == j { g } else { 0.0 }
    })
}

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `log ∫ N(y; 0, σ²K) · IG(σ²; a, b) dσ²` by quadrature over `t = log σ²`.
///
/// `K` is inverted by LU rather than Cholesky.
pub fn log_marginal_quadrature(k: &DMatrix<f64>, y: &[f64], a: f64, b: f64) -> f64 {
    let n = y.len() as f64;
    let lu = k.clone().lu();
    let logdet = lu.determinant().ln();
    let yv = DVector::from_column_slice(y);
    let q = yv.dot(&lu.solve(&yv).expect("nonsingular"));
    // log integrand in t, up to the constant c
    let c = -0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet + a * b.ln() - ln_gamma(a);
    let shape = a + 0.5 * n;
    let rate = b + 0.5 * q;
    let h = |t: f64| -shape * t - rate * (-t).exp();
    let t_star = (rate / shape).ln();
    let peak = h(t_star);
    let f = |t: f64| (h(t) - peak).exp();
    // unit panels, so the first Simpson estimate on each already sees the peak
    let area: f64 = (-8..60)
        .map(|k| simpson(&f, t_star + k as f64, t_star + k as f64 + 1.0, 1e-15))
        .sum();
    c + peak + area.ln()
}

/// Random training set with `n ≤ 5` points in `m ≤ 3` dims plus hyperparameters.
pub fn random_instance(seed: u64) -> (Dataset, Hyperparams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=5);
    let m = rng.random_range(1..=3);
    let raw_x = DMatrix::from_fn(n, m, |_, _| rng.random::<f64>());
    let raw_y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let data = Dataset::new(&raw_x, vec![(0.0, 1.0); m], &raw_y).unwrap();
    let d: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..2.0)).collect();
    let g = rng.random_range(0.001..0.5);
    (data, Hyperparams::separable(d, g).unwrap())
}

/// One draw of `y ~ N(0, σ²(K + gI))` at the rows of `x`, factoring with
/// nalgebra's own Cholesky.
pub fn gp_draw(x: &DMatrix<f64>, d: &[f64], g: f64, sigma2: f64, seed: u64) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let k = correlation(x, d, g) * sigma2;
    let n = k.nrows();
    let l = k
        .clone()
        .cholesky()
        .or_else(|| (k + DMatrix::identity(n, n) * 1e-10 * sigma2).cholesky())
        .expect("simulation covariance factors")
        .unpack();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    (l * z).iter().copied().collect()
}

/// Training and held-out data from a 1-d GP with range `d` and nugget `g`:
/// `n_train` uniform inputs and `n_test` further points, all observed with
/// noise. Inputs lie in `[0, 1]`.
pub struct Simulated {
    pub train: Dataset,
    pub test_x: DMatrix<f64>,
    pub test_y: Vec<f64>,
}

pub fn simulate_1d(n_train: usize, n_test: usize, d: f64, g: f64, seed: u64) -> Simulated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_train + n_test;
    let mut xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    // pin the ends so every test point lies inside the training bounds
    xs[0] = 0.0;
    xs[1] = 1.0;
    let x = DMatrix::from_column_slice(n, 1, &xs);
    let y = gp_draw(&x, &[d], g, 1.0, seed ^ 0x5eed);
    let train_x = x.rows(0, n_train).into_owned();
    let train = Dataset::new(&train_x, vec![(0.0, 1.0)], &y[..n_train]).unwrap();
    Simulated {
        train,
        test_x: x.rows(n_train, n_test).into_owned(),
        test_y: y[n_train..].to_vec(),
    }
}
