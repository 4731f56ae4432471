//! Randomness keyed by the input value: the same `x` always gets the same draw.
//!
//! This stands in for a simulator that reseeds its generator from its input,
//! making the output "deterministic" yet erratic.

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const UNIFORM_STREAM: u64 = 0x6A09_E667_F3BC_C908;
const NORMAL_STREAM: u64 = 0xBB67_AE85_84CA_A73B;

fn key(x: f64) -> u64 {
    // fold −0.0 onto 0.0 so equal inputs share a key
    let x = if x == 0.0 { 0.0 } else { x };
    x.to_bits()
}

fn unit_open(h: u64) -> f64 {
    // (h>>11 + 0.5)/2^53 lies strictly inside (0, 1)
    ((h >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on `(0, 1)` determined by `x`.
pub fn keyed_uniform(x: f64) -> f64 {
    unit_open(splitmix64(key(x) ^ UNIFORM_STREAM))
}

/// Standard normal determined by `x` (Box–Muller on two keyed uniforms).
pub fn keyed_normal(x: f64) -> f64 {
    let h1 = splitmix64(key(x) ^ NORMAL_STREAM);
    let h2 = splitmix64(h1);
    let (u1, u2) = (unit_open(h1), unit_open(h2));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `base(x) + sd·z(x)` with `z` a keyed standard normal.
pub fn seeded_noise_sim<F: Fn(f64) -> f64>(base: F, x: f64, sd: f64) -> f64 {
    assert!(sd >= 0.0, "noise sd must be nonnegative");
    if sd == 0.0 {
        return base(x);
    }
    base(x) + sd * keyed_normal(x)
}

/// Returns `h_fn(x)` for the keyed fraction `p_bad` of inputs and `g_fn(x)`
/// otherwise, mimicking a solver that sometimes settles on a wrong solution.
pub fn mixture_sim<G, H>(g_fn: G, h_fn: H, x: f64, p_bad: f64) -> f64
where
    G: Fn(f64) -> f64,
    H: Fn(f64) -> f64,
{
    assert!((0.0..=1.0).contains(&p_bad), "p_bad must lie in [0, 1]");
    if keyed_uniform(x) < p_bad {
        h_fn(x)
    } else {
        g_fn(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| -3.0 + 6.0 * (i as f64 + 0.5) / n as f64)
    }

    #[test]
    fn zero_sd_is_exact() {
        for x in points(50) {
            assert_eq!(seeded_noise_sim(f64::sin, x, 0.0), x.sin());
        }
    }

    #[test]
    fn same_input_same_output() {
        for x in points(50) {
            assert_eq!(
                seeded_noise_sim(f64::cos, x, 0.3).to_bits(),
                seeded_noise_sim(f64::cos, x, 0.3).to_bits()
            );
        }
        assert_eq!(keyed_normal(0.0), keyed_normal(-0.0));
    }

    #[test]
    fn noise_moments() {
        let sd = 0.7;
        let z: Vec<f64> = points(10_000)
            .map(|x| (seeded_noise_sim(|t| t * t, x, sd) - x * x) / sd)
            .collect();
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((0.9..=1.1).contains(&var), "var {var}");
    }

    #[test]
    fn mixture_extremes_and_frequency() {
        let g = |x: f64| x;
        let h = |x: f64| x + 100.0;
        for x in points(100) {
            assert_eq!(mixture_sim(g, h, x, 0.0), x);
            assert_eq!(mixture_sim(g, h, x, 1.0), x + 100.0);
        }
        let n = 100_000;
        let bad = points(n)
            .filter(|&x| mixture_sim(g, h, x, 0.1) != x)
            .count();
        let frac = bad as f64 / n as f64;
        assert!((frac - 0.1).abs() < 0.005, "bad fraction {frac}");
    }
}
