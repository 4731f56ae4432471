//! Saved fits: one text file holding the training data, priors, sampler
//! settings and the posterior chain.
//!
//! Layout:
//!
//! ```text
//! nugget-model 1
//! [metadata]
//! { ...JSON: names, bounds, prior, mcmc, isotropic, seed, acceptance... }
//! [dataset]
//! x1,...,xm,y        (CSV, raw units)
//! [chain]
//! d_1,...,d_m,g,log_post,jitter   (CSV)
//! ```

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{Bounds, Dataset};
use crate::inference::{Chain, McmcSettings, PriorSpec};
use crate::io::read_table;

const MAGIC: &str = "nugget-model";
const VERSION: u32 = 1;
const META: &str = "[metadata]";
const DATA: &str = "[dataset]";
const CHAIN: &str = "[chain]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub input_names: Vec<String>,
    pub response_name: String,
    pub bounds: Bounds,
    pub prior: PriorSpec,
    pub mcmc: McmcSettings,
    pub isotropic: bool,
    pub seed: u64,
    pub accept_d: f64,
    pub accept_g: f64,
}

/// A fitted model together with the raw data it was fit to.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub meta: ModelMeta,
    /// Training inputs as given, one row per observation.
    pub raw_x: DMatrix<f64>,
    pub raw_y: Vec<f64>,
    pub chain: Chain,
}

impl ModelFile {
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::new(&self.raw_x, self.meta.bounds.clone(), &self.raw_y)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{MAGIC} {VERSION}")?;
        writeln!(out, "{META}")?;
        serde_json::to_writer_pretty(&mut out, &self.meta)?;
        writeln!(out)?;
        writeln!(out, "{DATA}")?;
        {
            let mut w = csv::Writer::from_writer(&mut out);
            let mut header = self.meta.input_names.clone();
            header.push(self.meta.response_name.clone());
            w.write_record(&header)?;
            for (i, y) in self.raw_y.iter().enumerate() {
                let mut row: Vec<String> =
                    self.raw_x.row(i).iter().map(|v| v.to_string()).collect();
                row.push(y.to_string());
                w.write_record(&row)?;
            }
            w.flush()?;
        }
        writeln!(out, "{CHAIN}")?;
        self.chain.write_csv(&mut out)?;
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let lines: Vec<&str> = text.lines().collect();
        let first = lines.first().copied().unwrap_or_default();
        match first.split_once(' ') {
            Some((MAGIC, v)) if v.trim() == VERSION.to_string() => {}
            Some((MAGIC, v)) => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("unsupported model file version {v}"),
                })
            }
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "not a model file".into(),
                })
            }
        }
        let find = |marker: &str| -> Result<usize> {
            lines
                .iter()
                .position(|l| l.trim() == marker)
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    msg: format!("missing section {marker}"),
                })
        };
        let (m_at, d_at, c_at) = (find(META)?, find(DATA)?, find(CHAIN)?);
        if !(m_at < d_at && d_at < c_at) {
            return Err(Error::Parse {
                line: 0,
                msg: "sections out of order".into(),
            });
        }
        let section = |a: usize, b: usize| lines[a + 1..b].join("\n");
        let offset = |e: Error, base: usize| match e {
            Error::Parse { line, msg } => Error::Parse {
                line: line + base as u64,
                msg,
            },
            other => other,
        };

        let meta: ModelMeta =
            serde_json::from_str(&section(m_at, d_at)).map_err(|e| Error::Parse {
                line: (m_at + 1 + e.line()) as u64,
                msg: format!("metadata: {e}"),
            })?;
        let table = read_table(section(d_at, c_at).as_bytes()).map_err(|e| offset(e, d_at + 1))?;
        let m = meta.input_names.len();
        if table.header.len() != m + 1 || meta.bounds.len() != m {
            return Err(Error::Parse {
                line: (d_at + 2) as u64,
                msg: format!("dataset does not have {m} inputs plus a response"),
            });
        }
        let chain_text = lines[c_at + 1..].join("\n");
        let chain = Chain::read_csv(
            chain_text.as_bytes(),
            meta.isotropic,
            meta.accept_d,
            meta.accept_g,
            meta.seed,
        )
        .map_err(|e| offset(e, c_at + 1))?;
        if chain.is_empty() {
            return Err(Error::Parse {
                line: (c_at + 2) as u64,
                msg: "chain has no samples".into(),
            });
        }
        if chain.samples[0].m() != m {
            return Err(Error::Parse {
                line: (c_at + 2) as u64,
                msg: format!("chain has {} ranges for {m} inputs", chain.samples[0].m()),
            });
        }
        let file = Self {
            raw_x: table.rows.columns(0, m).into_owned(),
            raw_y: table.rows.column(m).iter().copied().collect(),
            meta,
            chain,
        };
        file.dataset()?;
        Ok(file)
    }
}
