//! Canned configurations for the published comparison tables.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::inference::{McmcSettings, PriorSpec};
use crate::testbed::DesignKind;

use super::{
    default_models, run_experiment, summarize_experiment, DesignSpec, ExperimentConfig,
    ExperimentResults, ExperimentSummary, Metric,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TableId {
    /// MSE on sparse gramacy1d designs.
    Fig1,
    /// Coverage and Mahalanobis on cauchysine.
    Fig2,
    Table1Exp,
    Table1Fried,
    /// The optimizer-backed simulator.
    Table2,
}

impl TableId {
    pub const ALL: [TableId; 5] = [
        TableId::Fig1,
        TableId::Fig2,
        TableId::Table1Exp,
        TableId::Table1Fried,
        TableId::Table2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableId::Fig1 => "fig1",
            TableId::Fig2 => "fig2",
            TableId::Table1Exp => "table1_exp",
            TableId::Table1Fried => "table1_fried",
            TableId::Table2 => "table2",
        }
    }

    /// Replicate count at full scale.
    pub fn full_count(self) -> usize {
        match self {
            TableId::Fig1 => 10_000,
            _ => 100,
        }
    }

    /// Scale used when none is given: fig1 runs a tenth of its replicates.
    pub fn default_scale(self) -> f64 {
        match self {
            TableId::Fig1 => 0.1,
            _ => 1.0,
        }
    }

    /// `ceil(scale × full count)`.
    pub fn replicates_at(self, scale: f64) -> Result<usize> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::Config(format!(
                "scale must lie in (0, 1], got {scale}"
            )));
        }
        Ok(((scale * self.full_count() as f64).ceil() as usize).max(1))
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|t| t.name()).collect();
                Error::Config(format!(
                    "unknown table '{s}'; valid ids: {}",
                    names.join(", ")
                ))
            })
    }
}

/// The experiment behind a table, with the given replicate count and seed.
pub fn table_config(id: TableId, n_replicates: usize, master_seed: u64) -> ExperimentConfig {
    let (simulator, size, metrics, isotropic) = match id {
        TableId::Fig1 => ("gramacy1d", 20, vec![Metric::Mse], false),
        TableId::Fig2 => (
            "cauchysine",
            10,
            vec![Metric::Coverage, Metric::Mahalanobis],
            false,
        ),
        TableId::Table1Exp => (
            "exp2d",
            20,
            vec![Metric::Coverage, Metric::Mahalanobis],
            false,
        ),
        TableId::Table1Fried => (
            "friedman5",
            25,
            vec![Metric::Coverage, Metric::Mahalanobis],
            true,
        ),
        TableId::Table2 => (
            "fsim",
            20,
            vec![Metric::Coverage, Metric::Mahalanobis],
            false,
        ),
    };
    let plot_replicates = match id {
        TableId::Fig1 | TableId::Fig2 | TableId::Table2 => vec![0],
        _ => vec![],
    };
    ExperimentConfig {
        simulator: simulator.into(),
        design: DesignSpec {
            kind: DesignKind::Uniform,
            size,
        },
        n_replicates,
        models: default_models(),
        mcmc: McmcSettings::default(),
        level: 0.9,
        master_seed,
        metrics,
        isotropic,
        draws_per_sample: 20,
        prior: PriorSpec::default(),
        include_noise: true,
        plot_replicates,
        workers: None,
    }
}

/// Runs a table's experiment at `scale` of its full replicate count.
pub fn reproduce(
    id: TableId,
    scale: f64,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<(ExperimentResults, ExperimentSummary)> {
    let mut cfg = table_config(id, id.replicates_at(scale)?, master_seed);
    cfg.workers = workers;
    let results = run_experiment(&cfg)?;
    let summary = summarize_experiment(&results)?;
    Ok((results, summary))
}
