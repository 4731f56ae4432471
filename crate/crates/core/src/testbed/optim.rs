//! One-dimensional Nelder-Mead and the optimizer-backed simulator built on it.

use std::cell::Cell;

use crate::error::{Error, Result};

use super::functions::f2d;

const REFLECT: f64 = 1.0;
const CONTRACT: f64 = 0.5;
const EXPAND: f64 = 2.0;
/// `sqrt(f64::EPSILON)`, rounded as in common optimizer defaults.
pub const REL_TOL: f64 = 1.49e-8;
pub const MAX_EVALS: usize = 500;

/// Outcome of a Nelder-Mead search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadResult {
    pub argmin: f64,
    pub value: f64,
    pub n_evals: usize,
    pub converged: bool,
}

#[derive(Clone, Copy)]
struct Vertex {
    x: f64,
    f: f64,
}

/// Minimizes a 1-d function with a two-vertex simplex started at
/// `{init, init + step}`, `step = 0.1·|init|` (0.1 at zero).
///
/// Stops once the simplex's function-value spread falls below
/// `1.49e-8·(|best| + 1.49e-8)` or after 500 evaluations. This is a local
/// search: it returns whichever minimum the start leads into.
pub fn nelder_mead_min<F>(mut objective: F, init: f64) -> Result<NelderMeadResult>
where
    F: FnMut(f64) -> f64,
{
    let n_evals = Cell::new(0usize);
    let mut eval = |x: f64| -> Result<Vertex> {
        n_evals.set(n_evals.get() + 1);
        let f = objective(x);
        if f.is_finite() {
            Ok(Vertex { x, f })
        } else {
            Err(Error::Numerical(format!("objective is {f} at x = {x}")))
        }
    };
    let step = if init == 0.0 { 0.1 } else { 0.1 * init.abs() };
    let start = eval(init)?;
    let other = eval(init + step)?;
    // best first; ties keep the start point in front
    let (mut best, mut worst) = if other.f < start.f {
        (other, start)
    } else {
        (start, other)
    };
    let mut converged = false;
    loop {
        let spread = worst.f - best.f;
        if spread <= REL_TOL * (best.f.abs() + REL_TOL) {
            converged = true;
            break;
        }
        if n_evals.get() >= MAX_EVALS {
            break;
        }
        // with two vertices the centroid of all but the worst is the best vertex
        let c = best.x;
        let r = eval(c + REFLECT * (c - worst.x))?;
        if r.f < best.f {
            let e = eval(c + EXPAND * (r.x - c))?;
            worst = best;
            best = if e.f < r.f { e } else { r };
        } else {
            let reflected_improves = r.f < worst.f;
            if reflected_improves {
                worst = r;
            }
            let k = eval(worst.x + CONTRACT * (c - worst.x))?;
            if k.f < worst.f {
                worst = k;
            } else if !reflected_improves {
                // shrink toward the best vertex
                worst = eval(best.x + CONTRACT * (worst.x - best.x))?;
            }
        }
        if worst.f < best.f {
            std::mem::swap(&mut best, &mut worst);
        }
    }
    Ok(NelderMeadResult {
        argmin: best.x,
        value: best.f,
        n_evals: n_evals.get(),
        converged,
    })
}

/// The optimizer-backed "deterministic" simulator: the value Nelder-Mead reports
/// when minimizing `x1 ↦ f2d(x1, x)` started from `x1 = x`.
///
/// Depending on where it starts the search lands in different local minima, so
/// the output jumps even though the underlying minimum is smooth in `x`.
pub fn fsim(x: f64) -> Result<f64> {
    nelder_mead_min(|x1| f2d(x1, x), x).map(|r| r.value)
}

const TRUTH_GRID: usize = 2000;
const TRUTH_LO: f64 = -3.0;
const TRUTH_HI: f64 = 3.0;
const TRUTH_REFINE: usize = 5;

/// Global minimum over `x1 ∈ [−3, 3]` of `f2d(x1, x)`: a 2000-point grid scan,
/// then golden-section refinement around the five best grid points.
pub fn true_fmin(x: f64) -> f64 {
    let h = (TRUTH_HI - TRUTH_LO) / (TRUTH_GRID - 1) as f64;
    let mut grid: Vec<(f64, f64)> = (0..TRUTH_GRID)
        .map(|i| {
            let x1 = TRUTH_LO + i as f64 * h;
            (f2d(x1, x), x1)
        })
        .collect();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    grid.iter()
        .take(TRUTH_REFINE)
        .map(|&(f, x1)| golden_section(|t| f2d(t, x), x1 - h, x1 + h).min(f))
        .fold(f64::INFINITY, f64::min)
}

/// Minimum value of a unimodal function on `[lo, hi]`.
fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-12 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    fa.min(fb)
}

#[cfg(test)]
mod tests {
    use super::super::functions::w;
    use super::*;

    #[test]
    fn convex_quadratic() {
        let r = nelder_mead_min(|x| (x - 2.0).powi(2), 0.37).unwrap();
        assert!(r.converged);
        assert!((r.argmin - 2.0).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn symmetric_simplex_stalls() {
        // vertices straddle the minimum at equal height, so the value spread is zero
        let r = nelder_mead_min(|x| (x - 2.0).powi(2), 0.0).unwrap();
        assert!(r.converged);
        assert!((r.argmin - 2.0).abs() > 0.05, "{r:?}");
    }

    #[test]
    fn stays_in_local_basin() {
        // tilted double well: global minimum near −2 (≈ −0.2), local near +2 (≈ +0.2)
        let f = |x: f64| (x * x - 4.0).powi(2) / 16.0 + 0.1 * x;
        let r = nelder_mead_min(f, 2.5).unwrap();
        assert!(r.argmin > 1.5, "{r:?}");
        assert!(r.value > 0.1);
    }

    #[test]
    fn constant_objective_stops_at_start() {
        let r = nelder_mead_min(|_| 3.0, 1.7).unwrap();
        assert!(r.converged);
        assert_eq!(r.argmin, 1.7);
        assert_eq!(r.n_evals, 2);
    }

    #[test]
    fn non_finite_objective_fails() {
        let r = nelder_mead_min(|x| if x > 0.05 { f64::NAN } else { x * x }, 0.0);
        assert!(matches!(r, Err(Error::Numerical(_))));
    }

    #[test]
    fn eval_budget_respected() {
        // unbounded below: never converges
        let r = nelder_mead_min(|x| -x, 1.0).unwrap();
        assert!(!r.converged);
        assert!(r.n_evals <= MAX_EVALS + 2);
    }

    #[test]
    fn fsim_deterministic_and_below_start() {
        for i in 0..200 {
            let x = -1.5 + 3.0 * i as f64 / 199.0;
            let a = fsim(x).unwrap();
            assert_eq!(a.to_bits(), fsim(x).unwrap().to_bits());
            assert!(a <= f2d(x, x));
        }
    }

    #[test]
    fn true_fmin_at_one() {
        // max of w from a fine grid scan
        let wmax = (0..=600_000)
            .map(|i| w(-3.0 + i as f64 * 1e-5))
            .fold(f64::NEG_INFINITY, f64::max);
        let expect = -w(1.0) * wmax;
        assert!(
            (true_fmin(1.0) - expect).abs() < 1e-9,
            "{} vs {expect}",
            true_fmin(1.0)
        );
    }

    fn grid(n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| -1.5 + 3.0 * i as f64 / (n - 1) as f64)
    }

    #[test]
    fn fsim_jumps_but_truth_is_continuous() {
        let xs: Vec<f64> = grid(1000).collect();
        let sim: Vec<f64> = xs.iter().map(|&x| fsim(x).unwrap()).collect();
        let truth: Vec<f64> = xs.iter().map(|&x| true_fmin(x)).collect();
        let sim_jumps = sim
            .windows(2)
            .filter(|p| (p[1] - p[0]).abs() > 0.05)
            .count();
        assert!(sim_jumps >= 2, "only {sim_jumps} jumps");
        // Lipschitz bound: |w'| ≤ √(2/e) + √(1.6/e) + 0.4 < 2.05 and w < 1.07
        let h = 3.0 / 999.0;
        let max_step = truth
            .windows(2)
            .map(|p| (p[1] - p[0]).abs())
            .fold(0.0, f64::max);
        assert!(max_step < 2.2 * h, "truth step {max_step}");
        for (s, t) in sim.iter().zip(&truth) {
            assert!(t <= &(s + 1e-9), "truth {t} above simulator {s}");
        }
        // starts left of the local maximum of w near −0.42 descend to the global
        // minimum; most starts to the right are caught by one of the local ones
        let (mut right, mut biased) = (0, 0);
        for ((x, s), t) in xs.iter().zip(&sim).zip(&truth) {
            if *x < -0.6 {
                assert!((s - t).abs() < 1e-5, "x = {x}: {s} vs {t}");
            } else if *x > -0.3 {
                right += 1;
                biased += usize::from(s - t > 0.01);
            }
        }
        assert!(
            biased as f64 > 0.8 * right as f64,
            "{biased} of {right} biased"
        );
    }
}
