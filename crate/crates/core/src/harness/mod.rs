//! Replicated nugget vs. no-nugget experiments.
//!
//! Each replicate draws a design, runs the simulator on it, fits every
//! requested model by MCMC and scores the pooled posterior predictive on a
//! fixed metric grid. Replicates are independent: every random stream is
//! derived from `(master_seed, replicate, purpose)`.

mod report;
mod tables;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{Dataset, FittedGp};
use crate::inference::{
    posterior_mean, posterior_predict, run_chain, McmcSettings, PriorSpec, DEGRADED_FRACTION,
};
use crate::metrics::{mahalanobis_many, mse, pointwise_coverage};
use crate::testbed::design::grid_levels;
use crate::testbed::keyed::splitmix64;
use crate::testbed::{design, grid_design, lhs_design, DesignKind, Simulator};

pub use report::{
    render_summary, summarize_experiment, write_plot_csv, write_raw_csv, write_summary_csv,
    write_ttest_csv, ColumnSummary, ExperimentSummary, PairedTest,
};
pub use tables::{reproduce, table_config, TableId};

/// Cap on the number of grid points used for the joint (Mahalanobis) metric.
pub const MAHALANOBIS_POINTS: usize = 300;
/// Grid points per axis for 1-d and 2-d metric grids.
pub const GRID_1D: usize = 1000;
pub const GRID_2D_PER_AXIS: usize = 40;
/// Latin-hypercube size of the metric grid in three or more dimensions.
pub const LHS_POINTS: usize = 2000;

/// Environment variable consulted for the default worker count.
pub const WORKERS_ENV: &str = "NUGGET_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Nugget estimated alongside the ranges.
    Nug,
    /// Nugget fixed at zero.
    Nonug,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Nug => "nug",
            ModelKind::Nonug => "nonug",
        }
    }

    pub fn prior(self, base: &PriorSpec) -> PriorSpec {
        PriorSpec {
            fix_g_zero: self == ModelKind::Nonug,
            ..base.clone()
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Coverage,
    Mahalanobis,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Coverage => "coverage",
            Metric::Mahalanobis => "mahalanobis",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(Metric::Mse),
            "coverage" => Ok(Metric::Coverage),
            "mahalanobis" => Ok(Metric::Mahalanobis),
            _ => Err(Error::Config(format!(
                "unknown metric '{s}'; valid: mse, coverage, mahalanobis"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub size: usize,
}

fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::Nug, ModelKind::Nonug]
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Mse, Metric::Coverage, Metric::Mahalanobis]
}

fn default_level() -> f64 {
    0.9
}

fn default_draws() -> usize {
    20
}

fn default_true() -> bool {
    true
}

/// One experiment: a simulator, a design protocol, and the models and metrics
/// to compare. See `docs/config.md` for the JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub simulator: String,
    pub design: DesignSpec,
    pub n_replicates: usize,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub mcmc: McmcSettings,
    #[serde(default = "default_level")]
    pub level: f64,
    pub master_seed: u64,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    /// One shared range parameter for all inputs.
    #[serde(default)]
    pub isotropic: bool,
    /// Student-t draws per posterior sample when pooling intervals.
    #[serde(default = "default_draws")]
    pub draws_per_sample: usize,
    /// Prior for the nugget model; the no-nugget model uses the same priors
    /// with `g` pinned at zero.
    #[serde(default)]
    pub prior: PriorSpec,
    /// Score predictions of a new observation (nugget included in the
    /// predictive variance) rather than of the latent surface.
    #[serde(default = "default_true")]
    pub include_noise: bool,
    /// Replicates whose grid predictions are kept for plotting.
    #[serde(default)]
    pub plot_replicates: Vec<usize>,
    /// Worker threads; `None` defers to `NUGGET_WORKERS` or the core count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn simulator(&self) -> Result<Simulator> {
        Simulator::from_name(&self.simulator)
    }

    pub fn validate(&self) -> Result<()> {
        let sim = self.simulator()?;
        let cfg_err = |m: String| Err(Error::Config(m));
        if self.n_replicates == 0 {
            return cfg_err("n_replicates must be at least 1".into());
        }
        if self.design.size == 0 {
            return cfg_err("design size must be at least 1".into());
        }
        if self.design.kind == DesignKind::Grid {
            grid_levels(self.design.size, sim.dims()).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.models.is_empty() {
            return cfg_err("at least one model is required".into());
        }
        if self.metrics.is_empty() {
            return cfg_err("at least one metric is required".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return cfg_err(format!("level must lie in (0,1), got {}", self.level));
        }
        if self.draws_per_sample == 0 {
            return cfg_err("draws_per_sample must be at least 1".into());
        }
        if self.workers == Some(0) {
            return cfg_err("workers must be at least 1".into());
        }
        if let Some(&k) = self
            .plot_replicates
            .iter()
            .find(|&&k| k >= self.n_replicates)
        {
            return cfg_err(format!("plot replicate {k} out of range"));
        }
        self.mcmc
            .validate()
            .and_then(|_| self.prior.validate())
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Requested models in canonical order (nug before nonug), deduplicated.
    pub fn model_list(&self) -> Vec<ModelKind> {
        let mut v = self.models.clone();
        v.sort();
        v.dedup();
        v
    }

    /// Requested metrics in canonical order, deduplicated.
    pub fn metric_list(&self) -> Vec<Metric> {
        let mut v = self.metrics.clone();
        v.sort();
        v.dedup();
        v
    }

    fn wants(&self, m: Metric) -> bool {
        self.metrics.contains(&m)
    }
}

/// Resolves the worker count: explicit value, then `NUGGET_WORKERS`, then
/// the number of available cores.
pub fn resolve_workers(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var(WORKERS_ENV).ok()?.trim().parse().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Seed for one random stream of one replicate.
pub fn derive_seed(master: u64, replicate: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(replicate)) ^ splitmix64(stream ^ 0xA5A5))
}

const STREAM_DESIGN: u64 = 1;
const STREAM_CHAIN: u64 = 2;
const STREAM_PREDICT: u64 = 3;
// experiment-level streams use replicate index u64::MAX
const STREAM_GRID: u64 = 10;
const STREAM_SUBSAMPLE: u64 = 11;

fn model_stream(base: u64, model: ModelKind) -> u64 {
    base * 16
        + match model {
            ModelKind::Nug => 0,
            ModelKind::Nonug => 1,
        }
}

/// Everything shared by all replicates of one experiment.
#[derive(Debug, Clone)]
pub struct MetricGrid {
    pub simulator: Simulator,
    /// Grid inputs in simulator units, one row per point.
    pub x: DMatrix<f64>,
    /// Simulator output on the grid.
    pub output: Vec<f64>,
    /// Indices of the grid points used for Mahalanobis distances.
    pub joint_idx: Vec<usize>,
    /// The separate "true" function on the joint subset, when the simulator has one.
    pub joint_truth: Option<Vec<f64>>,
}

impl MetricGrid {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let sim = cfg.simulator()?;
        let spec = sim.spec();
        let x = match spec.dims {
            1 => grid_design(GRID_1D, &spec.domain)?,
            2 => grid_design(GRID_2D_PER_AXIS, &spec.domain)?,
            _ => lhs_design(
                LHS_POINTS,
                &spec.domain,
                derive_seed(cfg.master_seed, u64::MAX, STREAM_GRID),
            )?,
        };
        let output = eval_rows(sim, &x)?;
        let p = x.nrows();
        let mut joint_idx = if p <= MAHALANOBIS_POINTS {
            (0..p).collect()
        } else {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, u64::MAX, STREAM_SUBSAMPLE));
            sample(&mut rng, p, MAHALANOBIS_POINTS).into_vec()
        };
        joint_idx.sort_unstable();
        let joint_truth = if spec.truth_available {
            let t = joint_idx
                .iter()
                .map(|&i| {
                    let row: Vec<f64> = x.row(i).iter().copied().collect();
                    sim.truth(&row).expect("truth available")
                })
                .collect::<Result<Vec<_>>>()?;
            Some(t)
        } else {
            None
        };
        Ok(Self {
            simulator: sim,
            x,
            output,
            joint_idx,
            joint_truth,
        })
    }

    fn joint_x(&self) -> DMatrix<f64> {
        self.x.select_rows(&self.joint_idx)
    }
}

fn eval_rows(sim: Simulator, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    (0..x.nrows())
        .map(|i| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            sim.eval(&row)
        })
        .collect()
}

/// Outcome of one model on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelOutcome {
    pub model: ModelKind,
    /// Set when the chain could not be run or no posterior sample could predict.
    pub failure: Option<String>,
    pub mse: Option<f64>,
    pub coverage: Option<f64>,
    /// Mean over posterior samples of √Mahalanobis against the simulator output.
    pub mahalanobis: Option<f64>,
    /// Same, against the simulator's smooth "true" function.
    pub mahalanobis_truth: Option<f64>,
    pub median_g: Option<f64>,
    /// Largest jitter any stored chain state needed.
    pub fit_jitter: f64,
    /// Largest jitter any joint predictive covariance needed.
    pub metric_jitter: f64,
    /// Posterior samples that could not be used for prediction.
    pub dropped_samples: usize,
    /// Posterior samples whose joint covariance could not be factored.
    pub mahalanobis_failures: usize,
    pub degraded: bool,
}

impl ModelOutcome {
    pub(crate) fn blank(model: ModelKind) -> Self {
        Self {
            model,
            failure: None,
            mse: None,
            coverage: None,
            mahalanobis: None,
            mahalanobis_truth: None,
            median_g: None,
            fit_jitter: 0.0,
            metric_jitter: 0.0,
            dropped_samples: 0,
            mahalanobis_failures: 0,
            degraded: false,
        }
    }

    fn failed(model: ModelKind, msg: String) -> Self {
        Self {
            failure: Some(msg),
            ..Self::blank(model)
        }
    }

    /// Fit failure, or any jitter needed while fitting or scoring.
    pub fn flagged(&self) -> bool {
        self.failure.is_some()
            || self.fit_jitter > 0.0
            || self.metric_jitter > 0.0
            || self.mahalanobis_failures > 0
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Mse => self.mse,
            Metric::Coverage => self.coverage,
            Metric::Mahalanobis => self.mahalanobis,
        }
    }
}

/// Grid predictions of one model on one replicate, for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub replicate: usize,
    pub model: ModelKind,
    pub x: DMatrix<f64>,
    pub output: Vec<f64>,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub outcomes: Vec<ModelOutcome>,
    pub wall_time_secs: f64,
    pub plots: Vec<PlotData>,
}

impl ReplicateResult {
    pub fn outcome(&self, model: ModelKind) -> Option<&ModelOutcome> {
        self.outcomes.iter().find(|o| o.model == model)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub replicates: Vec<ReplicateResult>,
}

/// Runs every replicate, in parallel up to the configured worker count.
/// Results come back ordered by replicate index.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let grid = MetricGrid::new(cfg)?;
    let workers = resolve_workers(cfg.workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let replicates = pool.install(|| {
        (0..cfg.n_replicates)
            .into_par_iter()
            .map(|k| replicate_on(cfg, &grid, k))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(ExperimentResults {
        config: cfg.clone(),
        replicates,
    })
}

/// Runs replicate `k` alone; identical to row `k` of [`run_experiment`].
pub fn run_replicate(cfg: &ExperimentConfig, k: usize) -> Result<ReplicateResult> {
    cfg.validate()?;
    if k >= cfg.n_replicates {
        return Err(Error::Config(format!(
            "replicate {k} out of range (n_replicates = {})",
            cfg.n_replicates
        )));
    }
    let grid = MetricGrid::new(cfg)?;
    replicate_on(cfg, &grid, k)
}

fn replicate_on(cfg: &ExperimentConfig, grid: &MetricGrid, k: usize) -> Result<ReplicateResult> {
    let start = Instant::now();
    let sim = grid.simulator;
    let domain = sim.spec().domain;
    let master = cfg.master_seed;
    let kk = k as u64;
    let x = design(
        cfg.design.kind,
        cfg.design.size,
        &domain,
        derive_seed(master, kk, STREAM_DESIGN),
    )?;
    let y = eval_rows(sim, &x)?;
    let data = Dataset::new(&x, domain, &y)?;
    let want_plot = cfg.plot_replicates.contains(&k);
    let mut outcomes = Vec::new();
    let mut plots = Vec::new();
    for model in cfg.model_list() {
        let (outcome, plot) = score_model(cfg, grid, &data, model, k, want_plot)?;
        outcomes.push(outcome);
        plots.extend(plot);
    }
    Ok(ReplicateResult {
        replicate: k,
        outcomes,
        wall_time_secs: start.elapsed().as_secs_f64(),
        plots,
    })
}

/// Fits one model and computes its metrics. Numerical trouble is recorded in
/// the outcome; only caller mistakes become errors.
fn score_model(
    cfg: &ExperimentConfig,
    grid: &MetricGrid,
    data: &Dataset,
    model: ModelKind,
    k: usize,
    want_plot: bool,
) -> Result<(ModelOutcome, Option<PlotData>)> {
    let prior = model.prior(&cfg.prior);
    let kk = k as u64;
    let chain_seed = derive_seed(cfg.master_seed, kk, model_stream(STREAM_CHAIN, model));
    let chain = match run_chain(data, &prior, &cfg.mcmc, cfg.isotropic, chain_seed) {
        Ok(c) => c,
        Err(e) if e.is_numerical() => {
            return Ok((ModelOutcome::failed(model, e.to_string()), None))
        }
        Err(e) => return Err(e),
    };
    let mut out = ModelOutcome {
        median_g: Some(chain.median_g()),
        fit_jitter: chain.max_jitter(),
        ..ModelOutcome::blank(model)
    };

    let mut plot = None;
    let needs_bounds = cfg.wants(Metric::Coverage) || want_plot;
    if needs_bounds {
        let (xs, _) = data.scale_test_points(&grid.x)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.master_seed,
            kk,
            model_stream(STREAM_PREDICT, model),
        ));
        let pred = match posterior_predict(
            data,
            &chain,
            &prior,
            &xs,
            cfg.level,
            cfg.draws_per_sample,
            cfg.include_noise,
            &mut rng,
        ) {
            Ok(p) => p,
            Err(e) if e.is_numerical() => {
                return Ok((ModelOutcome::failed(model, e.to_string()), None))
            }
            Err(e) => return Err(e),
        };
        out.dropped_samples = pred.dropped;
        out.degraded = pred.degraded;
        if cfg.wants(Metric::Mse) {
            out.mse = Some(mse(&pred.mean, &grid.output)?);
        }
        if cfg.wants(Metric::Coverage) {
            let bounds: Vec<(f64, f64)> = pred
                .lo
                .iter()
                .copied()
                .zip(pred.hi.iter().copied())
                .collect();
            out.coverage = Some(pointwise_coverage(&bounds, &grid.output)?);
        }
        if want_plot {
            plot = Some(PlotData {
                replicate: k,
                model,
                x: grid.x.clone(),
                output: grid.output.clone(),
                mean: pred.mean,
                lo: pred.lo,
                hi: pred.hi,
            });
        }
    } else if cfg.wants(Metric::Mse) {
        // the mean needs no interval draws
        let (xs, _) = data.scale_test_points(&grid.x)?;
        let (mean, dropped) = match posterior_mean(data, &chain, &prior, &xs) {
            Ok(r) => r,
            Err(e) if e.is_numerical() => {
                return Ok((ModelOutcome::failed(model, e.to_string()), None))
            }
            Err(e) => return Err(e),
        };
        out.dropped_samples = dropped;
        out.degraded = dropped as f64 > DEGRADED_FRACTION * chain.len() as f64;
        out.mse = Some(mse(&mean, &grid.output)?);
    }

    if cfg.wants(Metric::Mahalanobis) {
        let (xs, _) = data.scale_test_points(&grid.joint_x())?;
        let std = |v: &[f64]| -> Vec<f64> { v.iter().map(|&t| data.standardize(t)).collect() };
        let out_sub: Vec<f64> = grid.joint_idx.iter().map(|&i| grid.output[i]).collect();
        let truths_std: Vec<Vec<f64>> = std::iter::once(std(&out_sub))
            .chain(grid.joint_truth.as_deref().map(std))
            .collect();
        let truth_refs: Vec<&[f64]> = truths_std.iter().map(Vec::as_slice).collect();
        let mut sums = vec![0.0; truth_refs.len()];
        let mut used = 0usize;
        for hp in &chain.samples {
            let res = FittedGp::new(data, hp, prior.a, prior.b).and_then(|fit| {
                let (loc, mut m) = fit.joint_correlation(&xs, cfg.include_noise)?;
                m *= fit.s2();
                mahalanobis_many(&truth_refs, &loc, &m, fit.df())
            });
            match res {
                Ok((d, jitter)) => {
                    used += 1;
                    out.metric_jitter = out.metric_jitter.max(jitter);
                    for (s, v) in sums.iter_mut().zip(d) {
                        *s += v;
                    }
                }
                Err(e) if e.is_numerical() => out.mahalanobis_failures += 1,
                Err(e) => return Err(e),
            }
        }
        if used > 0 {
            out.mahalanobis = Some(sums[0] / used as f64);
            if sums.len() > 1 {
                out.mahalanobis_truth = Some(sums[1] / used as f64);
            }
        }
    }
    Ok((out, plot))
}
