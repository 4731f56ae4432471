use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use nugget::metrics::{mahalanobis_distance, mse, paired_t_test, pointwise_coverage, SummaryTable};

#[test]
fn t_test_is_calibrated_under_the_null() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let reps = 10_000;
    let mut rejections = 0;
    for _ in 0..reps {
        let a: Vec<f64> = (0..10).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..10).map(|_| StandardNormal.sample(&mut rng)).collect();
        if paired_t_test(&a, &b).unwrap().p_two_sided < 0.05 {
            rejections += 1;
        }
    }
    let frac = rejections as f64 / reps as f64;
    assert!((0.03..=0.07).contains(&frac), "{frac}");
}

#[test]
fn t_test_detects_a_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
    let b: Vec<f64> = a
        .iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            v + 0.5 + 0.1 * e
        })
        .collect();
    let t = paired_t_test(&a, &b).unwrap();
    assert!(t.t < 0.0 && t.p_two_sided < 1e-10);
}

/// Random orthogonal matrix from the QR factorization of a Gaussian matrix.
fn rotation(p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
    g.qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mahalanobis_is_rotation_invariant(seed in any::<u64>(), p in 1usize..8, df in 2.5..50.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::<f64>::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
        let sigma = &a * a.transpose() + DMatrix::identity(p, p) * 0.5;
        let loc: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let truth: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let base = mahalanobis_distance(&truth, &loc, &sigma, df).unwrap();

        let q = rotation(p, seed.wrapping_add(1));
        let r = DVector::from_iterator(p, truth.iter().zip(&loc).map(|(t, l)| t - l));
        let rr = &q * r;
        let rsigma = &q * &sigma * q.transpose();
        let rsigma = (&rsigma + rsigma.transpose()) * 0.5;
        let zero = vec![0.0; p];
        let rotated = mahalanobis_distance(rr.as_slice(), &zero, &rsigma, df).unwrap();
        prop_assert!((base - rotated).abs() <= 1e-8 * base.max(1.0), "{} vs {}", base, rotated);
    }

    #[test]
    fn mse_and_coverage_ignore_point_order(
        vals in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, 0.0..2.0f64), 1..40),
        shift in 0usize..40,
    ) {
        let pred: Vec<f64> = vals.iter().map(|v| v.0).collect();
        let truth: Vec<f64> = vals.iter().map(|v| v.1).collect();
        let bounds: Vec<(f64, f64)> = vals.iter().map(|v| (v.0 - v.2, v.0 + v.2)).collect();
        let k = shift % vals.len();
        let rot = |v: &[f64]| -> Vec<f64> { v[k..].iter().chain(&v[..k]).copied().collect() };
        let rb: Vec<(f64, f64)> = bounds[k..].iter().chain(&bounds[..k]).copied().collect();
        let m1 = mse(&pred, &truth).unwrap();
        let m2 = mse(&rot(&pred), &rot(&truth)).unwrap();
        prop_assert!((m1 - m2).abs() <= 1e-12 * m1.max(1.0));
        prop_assert_eq!(
            pointwise_coverage(&bounds, &truth).unwrap(),
            pointwise_coverage(&rb, &rot(&truth)).unwrap()
        );
    }

    #[test]
    fn summary_quantiles_are_ordered(v in prop::collection::vec(-1e3..1e3f64, 1..60)) {
        let r = SummaryTable::from_values(&v).unwrap().rows();
        let [min, q1, med, mean, q3, max] = r;
        prop_assert!(min <= q1 && q1 <= med && med <= q3 && q3 <= max);
        prop_assert!(min <= mean && mean <= max);
    }
}
