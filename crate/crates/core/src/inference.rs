//! Bayesian inference for the ranges `d` and nugget `g`.
//!
//! Each parameter is updated in turn (Metropolis-within-Gibbs). A proposal is
//! a log-normal random walk with probability 0.9 and an independence draw from
//! the parameter's Gamma prior with probability 0.1; the latter lets the chain
//! jump between the modes that a nugget often induces in the posterior.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::gp::{check_ig, check_level, log_marginal_from_factor, Dataset, FittedGp, Hyperparams};
use crate::gp::{PairwiseSq, PredictiveDist};
use crate::linalg::chol_with_jitter;
use crate::metrics::quantile_in_place;

/// Probability of drawing a proposal from the prior instead of the random walk.
pub const INDEPENDENCE_PROB: f64 = 0.1;
/// Consecutive non-finite iterations tolerated before giving up on a start.
pub const INIT_PATIENCE: usize = 1000;
/// Fraction of failed posterior samples above which a fit is flagged degraded.
pub const DEGRADED_FRACTION: f64 = 0.1;

const INIT_D: f64 = 0.5;
const INIT_G: f64 = 0.01;

/// Gamma priors on each `d_ℓ` and on `g`, and the Inverse-Gamma `(a, b)` on σ².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub d_shape: f64,
    pub d_rate: f64,
    pub g_shape: f64,
    pub g_rate: f64,
    pub a: f64,
    pub b: f64,
    /// Hold `g` at exactly zero (the interpolating, no-nugget model).
    pub fix_g_zero: bool,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            d_shape: 1.5,
            d_rate: 1.5,
            g_shape: 1.0,
            g_rate: 10.0,
            a: 1.5,
            b: 1.5,
            fix_g_zero: false,
        }
    }
}

impl PriorSpec {
    /// Default priors with the nugget pinned at zero.
    pub fn no_nugget() -> Self {
        Self {
            fix_g_zero: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("d_shape", self.d_shape),
            ("d_rate", self.d_rate),
            ("g_shape", self.g_shape),
            ("g_rate", self.g_rate),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "prior {name} must be positive, got {v}"
                )));
            }
        }
        check_ig(self.a, self.b)
    }
}

/// `log Gamma(x; shape, rate)` with density `rate^shape x^(shape−1) e^(−rate x) / Γ(shape)`.
pub fn log_gamma_density(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)
}

/// Log prior density of `(d, g)`. A shared isotropic range contributes one term.
/// Returns −∞ for `g = 0` under a continuous nugget prior, and for `g ≠ 0`
/// when the nugget is fixed.
pub fn log_prior(hp: &Hyperparams, prior: &PriorSpec) -> f64 {
    let d = hp.d();
    let ranges: f64 = if hp.is_isotropic() {
        log_gamma_density(d[0], prior.d_shape, prior.d_rate)
    } else {
        d.iter()
            .map(|&v| log_gamma_density(v, prior.d_shape, prior.d_rate))
            .sum()
    };
    let nugget = if prior.fix_g_zero {
        if hp.g() == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        log_gamma_density(hp.g(), prior.g_shape, prior.g_rate)
    };
    ranges + nugget
}

/// Result of evaluating an unnormalized log posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub log_post: f64,
    /// Diagonal jitter needed to factor the correlation matrix.
    pub jitter: f64,
}

/// Anything the sampler can target.
pub trait LogTarget {
    fn evaluate(&self, hp: &Hyperparams) -> Evaluation;
}

/// The GP posterior `p(d, g | y) ∝ p(y | d, g) p(d) p(g)` with σ² integrated out.
#[derive(Debug, Clone)]
pub struct GpPosterior<'a> {
    data: &'a Dataset,
    prior: &'a PriorSpec,
    pairs: PairwiseSq,
}

impl<'a> GpPosterior<'a> {
    pub fn new(data: &'a Dataset, prior: &'a PriorSpec) -> Self {
        Self {
            data,
            prior,
            pairs: PairwiseSq::new(data.x()),
        }
    }
}

impl LogTarget for GpPosterior<'_> {
    fn evaluate(&self, hp: &Hyperparams) -> Evaluation {
        let lp = log_prior(hp, self.prior);
        if !lp.is_finite() {
            return Evaluation {
                log_post: f64::NEG_INFINITY,
                jitter: 0.0,
            };
        }
        let k = self.pairs.correlation(hp);
        match chol_with_jitter(&k) {
            Ok(chol) => {
                let lm = log_marginal_from_factor(
                    &chol,
                    self.data.y().as_slice(),
                    self.prior.a,
                    self.prior.b,
                );
                let log_post = lm + lp;
                Evaluation {
                    log_post: if log_post.is_nan() {
                        f64::NEG_INFINITY
                    } else {
                        log_post
                    },
                    jitter: chol.jitter_used(),
                }
            }
            Err(Error::Factorization { jitter }) => Evaluation {
                log_post: f64::NEG_INFINITY,
                jitter,
            },
            Err(_) => Evaluation {
                log_post: f64::NEG_INFINITY,
                jitter: 0.0,
            },
        }
    }
}

/// Current position of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub hp: Hyperparams,
    pub log_post: f64,
    pub jitter: f64,
}

impl ChainState {
    pub fn new<T: LogTarget>(hp: Hyperparams, target: &T) -> Self {
        let e = target.evaluate(&hp);
        Self {
            hp,
            log_post: e.log_post,
            jitter: e.jitter,
        }
    }
}

/// Accept/reject bookkeeping for one sweep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutcome {
    /// One flag per updated range block (a single block when isotropic).
    pub accepted_d: Vec<bool>,
    /// `None` when the nugget is fixed.
    pub accepted_g: Option<bool>,
}

#[derive(Clone, Copy)]
enum Param {
    Range(usize),
    Nugget,
}

/// `log α` for a move from `current` to `proposed`, given the log proposal
/// correction. Non-finite proposals are never accepted; a finite proposal from
/// a non-finite start always is.
fn accept<R: Rng>(current: f64, proposed: f64, correction: f64, rng: &mut R) -> bool {
    if !proposed.is_finite() {
        return false;
    }
    if !current.is_finite() {
        return true;
    }
    let log_alpha = proposed - current + correction;
    if log_alpha >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_alpha
}

/// Proposes a new value for one parameter and returns it with the
/// Metropolis-Hastings correction `log q(x|x') − log q(x'|x)`.
fn propose<R: Rng>(x: f64, shape: f64, rate: f64, proposal_sd: f64, rng: &mut R) -> (f64, f64) {
    let pick: f64 = rng.random();
    if pick < INDEPENDENCE_PROB {
        let draw = Gamma::new(shape, 1.0 / rate)
            .expect("validated prior")
            .sample(rng);
        // keep strictly positive; a zero draw only happens on underflow
        let draw = draw.max(f64::MIN_POSITIVE);
        let correction = log_gamma_density(x, shape, rate) - log_gamma_density(draw, shape, rate);
        (draw, correction)
    } else {
        let z: f64 = StandardNormal.sample(rng);
        let step = proposal_sd * z;
        // log-normal walk: q(x|x')/q(x'|x) = x'/x
        (x * step.exp(), step)
    }
}

fn update<T: LogTarget, R: Rng>(
    state: &mut ChainState,
    param: Param,
    target: &T,
    prior: &PriorSpec,
    proposal_sd: f64,
    rng: &mut R,
) -> bool {
    let (x, shape, rate) = match param {
        Param::Range(l) => (state.hp.d()[l], prior.d_shape, prior.d_rate),
        Param::Nugget => (state.hp.g(), prior.g_shape, prior.g_rate),
    };
    let (x_new, correction) = propose(x, shape, rate, proposal_sd, rng);
    if !(x_new.is_finite() && x_new > 0.0) {
        return false;
    }
    let mut candidate = state.hp.clone();
    match param {
        Param::Range(l) => candidate.set_d(l, x_new),
        Param::Nugget => candidate.set_g(x_new),
    }
    let e = target.evaluate(&candidate);
    if accept(state.log_post, e.log_post, correction, rng) {
        state.hp = candidate;
        state.log_post = e.log_post;
        state.jitter = e.jitter;
        true
    } else {
        false
    }
}

/// One Metropolis-within-Gibbs sweep: each `d_ℓ` in turn (or the shared range
/// when isotropic), then `g` unless it is fixed at zero.
pub fn mwg_step<T: LogTarget, R: Rng>(
    state: &mut ChainState,
    target: &T,
    prior: &PriorSpec,
    proposal_sd: f64,
    rng: &mut R,
) -> StepOutcome {
    let blocks = if state.hp.is_isotropic() {
        1
    } else {
        state.hp.m()
    };
    let accepted_d = (0..blocks)
        .map(|l| update(state, Param::Range(l), target, prior, proposal_sd, rng))
        .collect();
    let accepted_g =
        (!prior.fix_g_zero).then(|| update(state, Param::Nugget, target, prior, proposal_sd, rng));
    StepOutcome {
        accepted_d,
        accepted_g,
    }
}

/// Length, burn-in, thinning and step size of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcSettings {
    pub n_iter: usize,
    pub burn: usize,
    pub thin: usize,
    #[serde(default = "default_proposal_sd")]
    pub proposal_sd: f64,
}

fn default_proposal_sd() -> f64 {
    0.5
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            n_iter: 6000,
            burn: 1000,
            thin: 10,
            proposal_sd: default_proposal_sd(),
        }
    }
}

impl McmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.burn {
            return Err(Error::invalid(format!(
                "n_iter ({}) must exceed burn ({})",
                self.n_iter, self.burn
            )));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thin must be at least 1"));
        }
        if !(self.proposal_sd.is_finite() && self.proposal_sd > 0.0) {
            return Err(Error::invalid("proposal_sd must be positive"));
        }
        Ok(())
    }

    /// Number of states a chain with these settings stores.
    pub fn n_stored(&self) -> usize {
        (self.n_iter - self.burn) / self.thin
    }
}

/// Thinned posterior draws of `(d, g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub samples: Vec<Hyperparams>,
    pub log_posts: Vec<f64>,
    /// Jitter the correlation matrix needed at each stored state.
    pub jitters: Vec<f64>,
    pub accept_d: f64,
    pub accept_g: f64,
    pub seed: u64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_jitter(&self) -> f64 {
        self.jitters.iter().copied().fold(0.0, f64::max)
    }

    /// Posterior median of `g`.
    pub fn median_g(&self) -> f64 {
        let mut g: Vec<f64> = self.samples.iter().map(|s| s.g()).collect();
        quantile_in_place(&mut g, 0.5)
    }

    /// Posterior median of each `d_ℓ`.
    pub fn median_d(&self) -> Vec<f64> {
        let m = self.samples.first().map_or(0, |s| s.m());
        (0..m)
            .map(|l| {
                let mut v: Vec<f64> = self.samples.iter().map(|s| s.d()[l]).collect();
                quantile_in_place(&mut v, 0.5)
            })
            .collect()
    }

    /// Writes one row per stored state: `d_1..d_m, g, log_post, jitter`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let m = self.samples.first().map_or(0, |s| s.m());
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=m).map(|l| format!("d_{l}")).collect();
        header.extend(["g", "log_post", "jitter"].map(String::from));
        w.write_record(&header)?;
        for ((hp, lp), j) in self.samples.iter().zip(&self.log_posts).zip(&self.jitters) {
            let mut row: Vec<String> = hp.d().iter().map(|v| v.to_string()).collect();
            row.push(hp.g().to_string());
            row.push(lp.to_string());
            row.push(j.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the table written by [`Chain::write_csv`]. Acceptance rates and
    /// seed are not part of the table and must be supplied.
    pub fn read_csv<R: Read>(
        input: R,
        isotropic: bool,
        accept_d: f64,
        accept_g: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let m = header.iter().filter(|h| h.starts_with("d_")).count();
        if m == 0 || header.len() < m + 2 {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected chain header {header:?}"),
            });
        }
        let has_jitter = header.get(m + 2) == Some("jitter");
        let mut chain = Chain {
            samples: Vec::new(),
            log_posts: Vec::new(),
            jitters: Vec::new(),
            accept_d,
            accept_g,
            seed,
        };
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse {
                        line,
                        msg: format!("bad number in column {}", i + 1),
                    })
            };
            let d = (0..m).map(parse).collect::<Result<Vec<_>>>()?;
            let g = parse(m)?;
            let hp = Hyperparams::new(d, g, isotropic).map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
            chain.samples.push(hp);
            chain.log_posts.push(parse(m + 1)?);
            chain
                .jitters
                .push(if has_jitter { parse(m + 2)? } else { 0.0 });
        }
        Ok(chain)
    }
}

/// Runs a sampler on any target from `init`.
///
/// Stores the state after every `thin`-th sweep once `burn` sweeps are done.
/// If the start has a non-finite log posterior and no proposal is accepted for
/// [`INIT_PATIENCE`] consecutive sweeps, the run fails.
pub fn run_sampler<T: LogTarget>(
    target: &T,
    prior: &PriorSpec,
    init: Hyperparams,
    settings: &McmcSettings,
    seed: u64,
) -> Result<Chain> {
    settings.validate()?;
    prior.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ChainState::new(init, target);
    let mut stuck = 0usize;
    let (mut d_acc, mut d_tot, mut g_acc, mut g_tot) = (0usize, 0usize, 0usize, 0usize);
    let cap = settings.n_stored();
    let mut chain = Chain {
        samples: Vec::with_capacity(cap),
        log_posts: Vec::with_capacity(cap),
        jitters: Vec::with_capacity(cap),
        accept_d: 0.0,
        accept_g: 0.0,
        seed,
    };
    for t in 1..=settings.n_iter {
        let out = mwg_step(&mut state, target, prior, settings.proposal_sd, &mut rng);
        d_tot += out.accepted_d.len();
        d_acc += out.accepted_d.iter().filter(|&&a| a).count();
        if let Some(a) = out.accepted_g {
            g_tot += 1;
            g_acc += usize::from(a);
        }
        if state.log_post.is_finite() {
            stuck = 0;
        } else {
            stuck += 1;
            if stuck >= INIT_PATIENCE {
                return Err(Error::Initialization(format!(
                    "no finite log posterior after {INIT_PATIENCE} sweeps (last jitter tried {:e})",
                    state.jitter
                )));
            }
        }
        if t > settings.burn && (t - settings.burn).is_multiple_of(settings.thin) {
            if !state.log_post.is_finite() {
                return Err(Error::Initialization(
                    "chain still at a non-finite log posterior when sampling began".into(),
                ));
            }
            chain.samples.push(state.hp.clone());
            chain.log_posts.push(state.log_post);
            chain.jitters.push(state.jitter);
        }
    }
    chain.accept_d = if d_tot > 0 {
        d_acc as f64 / d_tot as f64
    } else {
        0.0
    };
    chain.accept_g = if g_tot > 0 {
        g_acc as f64 / g_tot as f64
    } else {
        0.0
    };
    Ok(chain)
}

/// Initial state: every `d_ℓ = 0.5` and `g = 0.01` (or 0 when fixed).
pub fn initial_state(m: usize, isotropic: bool, prior: &PriorSpec) -> Hyperparams {
    let g = if prior.fix_g_zero { 0.0 } else { INIT_G };
    Hyperparams::new(vec![INIT_D; m], g, isotropic).expect("valid initial state")
}

/// Samples the GP posterior of `(d, g)` given the data; deterministic in `seed`.
pub fn run_chain(
    data: &Dataset,
    prior: &PriorSpec,
    settings: &McmcSettings,
    isotropic: bool,
    seed: u64,
) -> Result<Chain> {
    let target = GpPosterior::new(data, prior);
    run_sampler(
        &target,
        prior,
        initial_state(data.m(), isotropic, prior),
        settings,
        seed,
    )
}

/// Pooled posterior predictive summaries over a chain.
#[derive(Debug, Clone)]
pub struct PosteriorPrediction {
    /// Average of the per-sample predictive means, original units.
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// One predictive distribution per retained posterior sample.
    pub per_sample: Vec<PredictiveDist>,
    pub dropped: usize,
    /// More than 10% of samples failed to produce a prediction.
    pub degraded: bool,
}

/// Mixture-of-Student-t posterior predictive at scaled locations `xstar`.
///
/// For every stored `(d, g)` the conditional predictive is computed; the pooled
/// mean averages their locations, and the pooled `level` interval is read off
/// the empirical quantiles of `draws_per_sample` t draws per sample and point.
/// The standard-t variates are drawn once and shared by all points, so each
/// point's draws have the right marginal while the bands stay smooth in `x`.
#[allow(clippy::too_many_arguments)]
pub fn posterior_predict<R: Rng>(
    data: &Dataset,
    chain: &Chain,
    prior: &PriorSpec,
    xstar: &DMatrix<f64>,
    level: f64,
    draws_per_sample: usize,
    include_noise: bool,
    rng: &mut R,
) -> Result<PosteriorPrediction> {
    check_level(level)?;
    if chain.is_empty() {
        return Err(Error::invalid("chain has no samples"));
    }
    if draws_per_sample == 0 {
        return Err(Error::invalid("draws_per_sample must be at least 1"));
    }
    let mut per_sample = Vec::with_capacity(chain.len());
    let mut dropped = 0usize;
    let mut last_err = None;
    for hp in &chain.samples {
        match FittedGp::new(data, hp, prior.a, prior.b)
            .and_then(|fit| fit.predict(xstar, include_noise, false))
        {
            Ok(pd) => per_sample.push(pd),
            Err(e) => {
                dropped += 1;
                last_err = Some(e);
            }
        }
    }
    if per_sample.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::Numerical("all samples failed".into())));
    }
    let p = xstar.nrows();
    let k = per_sample.len();
    let df = per_sample[0].df;
    let t = StudentT::new(df).map_err(|e| Error::Numerical(format!("student-t df={df}: {e}")))?;
    let draws: Vec<f64> = (0..k * draws_per_sample).map(|_| t.sample(rng)).collect();

    let (y_mean, y_sd) = (data.y_mean(), data.y_sd());
    let mut mean = vec![0.0; p];
    let mut lo = vec![0.0; p];
    let mut hi = vec![0.0; p];
    let q_lo = 0.5 * (1.0 - level);
    let q_hi = 0.5 * (1.0 + level);
    let mut buf = vec![0.0; k * draws_per_sample];
    for i in 0..p {
        let mut loc_sum = 0.0;
        for (s, pd) in per_sample.iter().enumerate() {
            let (loc, sd) = (pd.loc[i], pd.scale[i].sqrt());
            loc_sum += loc;
            let chunk = &mut buf[s * draws_per_sample..(s + 1) * draws_per_sample];
            for (b, z) in chunk
                .iter_mut()
                .zip(&draws[s * draws_per_sample..(s + 1) * draws_per_sample])
            {
                *b = loc + sd * z;
            }
        }
        mean[i] = (loc_sum / k as f64) * y_sd + y_mean;
        lo[i] = quantile_in_place(&mut buf, q_lo) * y_sd + y_mean;
        hi[i] = quantile_in_place(&mut buf, q_hi) * y_sd + y_mean;
    }
    Ok(PosteriorPrediction {
        mean,
        lo,
        hi,
        per_sample,
        dropped,
        degraded: dropped as f64 > DEGRADED_FRACTION * chain.len() as f64,
    })
}

/// Posterior mean over a chain in original units, skipping interval draws.
/// Returns the mean and the number of samples that could not predict.
pub fn posterior_mean(
    data: &Dataset,
    chain: &Chain,
    prior: &PriorSpec,
    xstar: &DMatrix<f64>,
) -> Result<(Vec<f64>, usize)> {
    if chain.is_empty() {
        return Err(Error::invalid("chain has no samples"));
    }
    let mut sum = vec![0.0; xstar.nrows()];
    let mut used = 0usize;
    let mut last_err = None;
    for hp in &chain.samples {
        match FittedGp::new(data, hp, prior.a, prior.b).and_then(|fit| fit.predict_loc(xstar)) {
            Ok(loc) => {
                used += 1;
                for (s, l) in sum.iter_mut().zip(&loc) {
                    *s += l;
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    if used == 0 {
        return Err(last_err.unwrap_or_else(|| Error::Numerical("all samples failed".into())));
    }
    let mean = sum
        .iter()
        .map(|s| data.destandardize(s / used as f64))
        .collect();
    Ok((mean, chain.len() - used))
}
