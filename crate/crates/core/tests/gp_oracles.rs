mod common;

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use statrs::function::gamma::ln_gamma;

use nugget::gp::{
    correlation_matrix, credible_bounds, log_marginal, predict, t_quantile, FittedGp,
};
use nugget::linalg::chol_with_jitter;
use nugget::{Dataset, Error, Hyperparams};

const A: f64 = 1.5;
const B: f64 = 1.5;

#[test]
fn log_marginal_matches_quadrature() {
    for seed in 0..20 {
        let (data, hp) = common::random_instance(seed);
        let k = common::correlation(data.x(), hp.d(), hp.g());
        let oracle = common::log_marginal_quadrature(&k, data.y().as_slice(), A, B);
        let got = log_marginal(&data, &hp, A, B).unwrap();
        assert_relative_eq!(got, oracle, max_relative = 1e-8);
    }
}

#[test]
fn log_marginal_quadrature_other_priors() {
    let (data, hp) = common::random_instance(99);
    let k = common::correlation(data.x(), hp.d(), hp.g());
    for (a, b) in [(0.5, 0.1), (3.0, 7.0), (10.0, 0.5)] {
        let oracle = common::log_marginal_quadrature(&k, data.y().as_slice(), a, b);
        assert_relative_eq!(
            log_marginal(&data, &hp, a, b).unwrap(),
            oracle,
            max_relative = 1e-8
        );
    }
}

fn single_point(g: f64) -> (Dataset, Hyperparams) {
    let raw_x = DMatrix::from_row_slice(1, 1, &[0.4]);
    let data = Dataset::new(&raw_x, vec![(0.0, 1.0)], &[3.7]).unwrap();
    (data, Hyperparams::separable(vec![0.3], g).unwrap())
}

// With one observation the standardized response is 0 and y_sd is 1, so
// s² = 2b/(2a+1) and the predictive location is 0 everywhere.
#[test]
fn single_observation_by_hand() {
    for g in [0.0, 0.05, 0.7] {
        let (data, hp) = single_point(g);
        let s2 = 2.0 * B / (2.0 * A + 1.0);
        let lm = A * B.ln() + ln_gamma(A + 0.5)
            - ln_gamma(A)
            - 0.5 * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * (1.0 + g).ln()
            - (A + 0.5) * B.ln();
        assert_relative_eq!(log_marginal(&data, &hp, A, B).unwrap(), lm, epsilon = 1e-12);

        let gp = FittedGp::new(&data, &hp, A, B).unwrap();
        assert_relative_eq!(gp.s2(), s2, epsilon = 1e-12);
        assert_eq!(gp.df(), 2.0 * A + 1.0);

        let xs = DMatrix::from_row_slice(3, 1, &[0.4, 0.9, 0.0]);
        for noise in [false, true] {
            let pd = gp.predict(&xs, noise, true).unwrap();
            let extra = if noise { g } else { 0.0 };
            for (i, &x) in [0.4_f64, 0.9, 0.0].iter().enumerate() {
                let k = (-(x - 0.4).powi(2) / 0.3).exp();
                let want = s2 * (1.0 + extra - k * k / (1.0 + g));
                assert_relative_eq!(pd.scale[i], want, epsilon = 1e-12);
                assert!(pd.loc[i].abs() < 1e-12);
            }
            let js = pd.joint_scale.as_ref().unwrap();
            let k1 = (-(0.5_f64).powi(2) / 0.3).exp();
            let k2 = (-(0.4_f64).powi(2) / 0.3).exp();
            let cross = s2 * ((-(0.9_f64).powi(2) / 0.3).exp() - k1 * k2 / (1.0 + g));
            assert_relative_eq!(js[(1, 2)], cross, epsilon = 1e-12);
            for (i, m) in pd.mean_original().iter().enumerate() {
                assert_relative_eq!(*m, 3.7, epsilon = 1e-12, max_relative = 0.0);
                let (lo, hi) = credible_bounds(&pd, 0.9).unwrap()[i];
                let half = t_quantile(2.0 * A + 1.0, 0.9).unwrap() * pd.scale[i].sqrt();
                assert_relative_eq!(lo, 3.7 - half, epsilon = 1e-12);
                assert_relative_eq!(hi, 3.7 + half, epsilon = 1e-12);
            }
        }
    }
}

#[test]
fn dense_grid_without_nugget_is_numerically_singular() {
    let n = 100;
    let x = DMatrix::from_fn(n, 1, |i, _| i as f64 / (n - 1) as f64);
    let k = common::correlation(&x, &[1.0], 0.0);
    // independent check of numerical rank: eigenvalues below n·ε·λmax are
    // indistinguishable from zero in double precision
    let eig = k.clone().symmetric_eigen().eigenvalues;
    let lmax = eig.max();
    let tiny = eig
        .iter()
        .filter(|&&l| l < n as f64 * f64::EPSILON * lmax)
        .count();
    assert!(tiny > n / 2, "only {tiny} negligible eigenvalues");

    let hp = Hyperparams::separable(vec![1.0], 0.0).unwrap();
    match chol_with_jitter(&correlation_matrix(&x, &hp)) {
        Ok(f) => assert!(f.jitter_used() > 0.0),
        Err(Error::Factorization { .. }) => {}
        Err(e) => panic!("{e}"),
    }
}

fn instance(seed: u64, n: usize, m: usize, g: f64) -> (Dataset, Hyperparams) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let raw_x = DMatrix::from_fn(n, m, |_, _| rng.random::<f64>());
    let raw_y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let data = Dataset::new(&raw_x, vec![(0.0, 1.0); m], &raw_y).unwrap();
    let d = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    (data, Hyperparams::separable(d, g).unwrap())
}

fn permuted(data: &Dataset, perm: &[usize]) -> Dataset {
    let x = data.raw_x();
    let y = data.raw_y();
    let px = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(perm[i], j)]);
    let py: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
    Dataset::new(&px, data.bounds().to_vec(), &py).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correlation_is_symmetric_with_nugget_diagonal(
        seed in any::<u64>(), n in 1usize..12, m in 1usize..4, g in 0.0..1.0f64,
    ) {
        let (data, hp) = instance(seed, n, m, g);
        let k = correlation_matrix(data.x(), &hp);
        for i in 0..n {
            prop_assert_eq!(k[(i, i)], 1.0 + g);
            for j in 0..n {
                prop_assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
    }

    #[test]
    fn permutation_invariance(
        seed in any::<u64>(), n in 2usize..8, m in 1usize..3, g in 0.01..0.5f64,
        shuffle in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let (data, hp) = instance(seed, n, m, g);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle));
        let other = permuted(&data, &perm);
        let l1 = log_marginal(&data, &hp, A, B).unwrap();
        let l2 = log_marginal(&other, &hp, A, B).unwrap();
        prop_assert!((l1 - l2).abs() <= 1e-10 * l1.abs().max(1.0));

        let xs = DMatrix::from_fn(5, m, |i, j| (i as f64 * 0.23 + j as f64 * 0.31) % 1.0);
        let p1 = predict(&data, &hp, &xs, A, B, true, true).unwrap();
        let p2 = predict(&other, &hp, &xs, A, B, true, true).unwrap();
        for i in 0..5 {
            prop_assert!((p1.loc[i] - p2.loc[i]).abs() < 1e-8);
            prop_assert!((p1.scale[i] - p2.scale[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn duplicate_point_needs_nugget(
        seed in any::<u64>(), n in 2usize..8, m in 1usize..3, g in 0.01..1.0f64, dup in 0usize..8,
    ) {
        let (data, hp) = instance(seed, n, m, g);
        let dup = dup % n;
        let x = data.raw_x();
        let y = data.raw_y();
        let x2 = DMatrix::from_fn(n + 1, m, |i, j| x[(if i == n { dup } else { i }, j)]);
        let mut y2 = y.clone();
        y2.push(y[dup]);
        let with_dup = Dataset::new(&x2, data.bounds().to_vec(), &y2).unwrap();

        let k = correlation_matrix(with_dup.x(), &hp);
        prop_assert_eq!(chol_with_jitter(&k).unwrap().jitter_used(), 0.0);

        let hp0 = Hyperparams::separable(hp.d().to_vec(), 0.0).unwrap();
        match chol_with_jitter(&correlation_matrix(with_dup.x(), &hp0)) {
            Ok(f) => prop_assert!(f.jitter_used() > 0.0),
            Err(Error::Factorization { .. }) => {}
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn interpolates_at_training_points(seed in any::<u64>(), n in 2usize..7) {
        // spread-out 1-d inputs with short ranges keep the g = 0 matrix well conditioned
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let raw_x = DMatrix::from_fn(n, 1, |i, _| (i as f64 + rng.random_range(0.0..0.5)) / n as f64);
        let raw_y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let data = Dataset::new(&raw_x, vec![(0.0, 1.0)], &raw_y).unwrap();
        let hp = Hyperparams::separable(vec![rng.random_range(0.005..0.05)], 0.0).unwrap();
        let gp = FittedGp::new(&data, &hp, A, B).unwrap();
        prop_assume!(gp.jitter_used() == 0.0);
        let pd = gp.predict(data.x(), false, false).unwrap();
        for (m, y) in pd.mean_original().iter().zip(&raw_y) {
            prop_assert!((m - y).abs() < 1e-6);
        }
        for s in &pd.scale {
            prop_assert!(*s <= 1e-8);
        }
    }

    #[test]
    fn noisy_scale_at_training_input_shrinks_with_nugget(seed in any::<u64>(), n in 2usize..6) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let raw_x = DMatrix::from_fn(n, 1, |i, _| (i as f64 + rng.random_range(0.0..0.5)) / n as f64);
        let raw_y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let data = Dataset::new(&raw_x, vec![(0.0, 1.0)], &raw_y).unwrap();
        let d = rng.random_range(0.005..0.05);
        let x0 = data.x().rows(0, 1).into_owned();
        let mut last = f64::INFINITY;
        for g in [1.0, 0.3, 0.1, 0.03, 0.01, 1e-3, 1e-4, 1e-6] {
            let hp = Hyperparams::separable(vec![d], g).unwrap();
            let s = predict(&data, &hp, &x0, A, B, true, false).unwrap().scale[0];
            prop_assert!(s > 0.0);
            prop_assert!(s < last, "g={} scale={} previous={}", g, s, last);
            last = s;
        }
        prop_assert!(last < 1e-4);
    }
}
