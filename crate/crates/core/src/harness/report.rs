//! Summaries of an experiment and the CSV/text forms written to disk.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{paired_t_test, SummaryTable, TTest};

use super::{ExperimentResults, Metric, ModelKind, ModelOutcome, PlotData};

/// Six-number summary of one metric for one model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnSummary {
    /// `mse`, `coverage`, `mahalanobis` or `mahalanobis_truth`.
    pub metric: String,
    pub model: ModelKind,
    /// Replicates that contributed a value.
    pub n: usize,
    pub table: SummaryTable,
}

impl ColumnSummary {
    pub fn label(&self) -> String {
        format!("{}_{}", self.metric, self.model)
    }
}

/// Paired comparison `nug − nonug` over replicates where both models succeeded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedTest {
    pub metric: String,
    pub n_pairs: usize,
    pub test: TTest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub simulator: String,
    pub n_replicates: usize,
    pub columns: Vec<ColumnSummary>,
    pub t_tests: Vec<PairedTest>,
    /// Replicates on which each model could not be fit.
    pub fit_failures: Vec<(ModelKind, usize)>,
    /// Replicates on which each model failed or needed jitter.
    pub flagged: Vec<(ModelKind, usize)>,
}

impl ExperimentSummary {
    pub fn column(&self, metric: &str, model: ModelKind) -> Option<&ColumnSummary> {
        self.columns
            .iter()
            .find(|c| c.metric == metric && c.model == model)
    }

    pub fn t_test(&self, metric: &str) -> Option<&PairedTest> {
        self.t_tests.iter().find(|t| t.metric == metric)
    }

    pub fn flagged_count(&self, model: ModelKind) -> usize {
        self.flagged
            .iter()
            .find(|(m, _)| *m == model)
            .map_or(0, |(_, c)| *c)
    }
}

/// Metric columns present in the results: requested metrics, plus
/// `mahalanobis_truth` when the simulator has a separate true function.
fn metric_names(results: &ExperimentResults) -> Vec<&'static str> {
    let cfg = &results.config;
    let mut names: Vec<&'static str> = cfg.metric_list().iter().map(|m| m.name()).collect();
    let has_truth = cfg
        .simulator()
        .map(|s| s.spec().truth_available)
        .unwrap_or(false);
    if has_truth && cfg.metrics.contains(&Metric::Mahalanobis) {
        names.push("mahalanobis_truth");
    }
    names
}

fn value_of(o: &ModelOutcome, name: &str) -> Option<f64> {
    match name {
        "mse" => o.mse,
        "coverage" => o.coverage,
        "mahalanobis" => o.mahalanobis,
        "mahalanobis_truth" => o.mahalanobis_truth,
        _ => None,
    }
}

/// Six-number summaries per model and metric, and a paired t-test on MSE.
///
/// Fails if some model could not be fit on any replicate.
pub fn summarize_experiment(results: &ExperimentResults) -> Result<ExperimentSummary> {
    let cfg = &results.config;
    let models = cfg.model_list();
    let mut fit_failures = Vec::new();
    let mut flagged = Vec::new();
    for &model in &models {
        let outcomes: Vec<&ModelOutcome> = results
            .replicates
            .iter()
            .filter_map(|r| r.outcome(model))
            .collect();
        let failures = outcomes.iter().filter(|o| o.failure.is_some()).count();
        if failures == outcomes.len() {
            return Err(Error::Degenerate(format!(
                "model {model} failed on all {} replicates",
                outcomes.len()
            )));
        }
        fit_failures.push((model, failures));
        flagged.push((model, outcomes.iter().filter(|o| o.flagged()).count()));
    }

    let mut columns = Vec::new();
    for name in metric_names(results) {
        for &model in &models {
            let values: Vec<f64> = results
                .replicates
                .iter()
                .filter_map(|r| r.outcome(model).and_then(|o| value_of(o, name)))
                .collect();
            if values.is_empty() {
                continue;
            }
            columns.push(ColumnSummary {
                metric: name.to_string(),
                model,
                n: values.len(),
                table: SummaryTable::from_values(&values)?,
            });
        }
    }

    let mut t_tests = Vec::new();
    if cfg.metrics.contains(&Metric::Mse) && models.len() == 2 {
        let (a, b): (Vec<f64>, Vec<f64>) = results
            .replicates
            .iter()
            .filter_map(|r| {
                let nug = r.outcome(ModelKind::Nug)?.mse?;
                let nonug = r.outcome(ModelKind::Nonug)?.mse?;
                Some((nug, nonug))
            })
            .unzip();
        if a.len() >= 2 {
            t_tests.push(PairedTest {
                metric: "mse".into(),
                n_pairs: a.len(),
                test: paired_t_test(&a, &b)?,
            });
        }
    }

    Ok(ExperimentSummary {
        simulator: cfg.simulator.clone(),
        n_replicates: results.replicates.len(),
        columns,
        t_tests,
        fit_failures,
        flagged,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per replicate, one column group per model. Missing values are
/// empty fields. Wall time is left out so reruns produce identical bytes.
pub fn write_raw_csv<W: Write>(results: &ExperimentResults, out: W) -> Result<()> {
    let models = results.config.model_list();
    let names = metric_names(results);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["replicate".to_string()];
    for m in &models {
        header.push(format!("status_{m}"));
        header.extend(names.iter().map(|n| format!("{n}_{m}")));
        for extra in [
            "median_g",
            "fit_jitter",
            "metric_jitter",
            "dropped_samples",
            "mahalanobis_failures",
            "flagged",
        ] {
            header.push(format!("{extra}_{m}"));
        }
    }
    w.write_record(&header)?;
    for rep in &results.replicates {
        let mut row = vec![rep.replicate.to_string()];
        for &m in &models {
            let o = rep
                .outcome(m)
                .expect("every requested model has an outcome");
            let status = match (&o.failure, o.degraded) {
                (Some(_), _) => "failed",
                (None, true) => "degraded",
                (None, false) => "ok",
            };
            row.push(status.into());
            row.extend(names.iter().map(|n| opt(value_of(o, n))));
            row.push(opt(o.median_g));
            row.push(o.fit_jitter.to_string());
            row.push(o.metric_jitter.to_string());
            row.push(o.dropped_samples.to_string());
            row.push(o.mahalanobis_failures.to_string());
            row.push(u8::from(o.flagged()).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows `Min.`, `1st Qu.`, `Median`, `Mean`, `3rd Qu.`, `Max.`; one column per
/// model and metric.
pub fn write_summary_csv<W: Write>(summary: &ExperimentSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["stat".to_string()];
    header.extend(summary.columns.iter().map(ColumnSummary::label));
    w.write_record(&header)?;
    for (i, label) in SummaryTable::ROW_LABELS.iter().enumerate() {
        let mut row = vec![label.to_string()];
        row.extend(
            summary
                .columns
                .iter()
                .map(|c| c.table.rows()[i].to_string()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ttest_csv<W: Write>(summary: &ExperimentSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "n_pairs", "mean_diff", "t", "df", "p_two_sided"])?;
    for t in &summary.t_tests {
        w.write_record([
            t.metric.clone(),
            t.n_pairs.to_string(),
            t.test.mean_diff.to_string(),
            t.test.t.to_string(),
            t.test.df.to_string(),
            t.test.p_two_sided.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Grid inputs, simulator output, posterior mean and interval bounds.
pub fn write_plot_csv<W: Write>(plot: &PlotData, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let m = plot.x.ncols();
    let mut header: Vec<String> = (1..=m).map(|l| format!("x{l}")).collect();
    header.extend(["output", "mean", "lo", "hi"].map(String::from));
    w.write_record(&header)?;
    for i in 0..plot.x.nrows() {
        let mut row: Vec<String> = plot.x.row(i).iter().map(|v| v.to_string()).collect();
        for v in [plot.output[i], plot.mean[i], plot.lo[i], plot.hi[i]] {
            row.push(v.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text tables in the layout of a printed six-number summary.
pub fn render_summary(summary: &ExperimentSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{}: {} replicates",
        summary.simulator, summary.n_replicates
    );
    let mut metrics: Vec<&str> = summary.columns.iter().map(|c| c.metric.as_str()).collect();
    metrics.dedup();
    for metric in metrics {
        let cols: Vec<&ColumnSummary> = summary
            .columns
            .iter()
            .filter(|c| c.metric == metric)
            .collect();
        let title = match metric {
            "mahalanobis" => "sqrt Mahalanobis",
            "mahalanobis_truth" => "sqrt Mahalanobis (true f)",
            other => other,
        };
        let _ = writeln!(s, "\n{title}");
        let _ = write!(s, "{:<10}", "");
        for c in &cols {
            let _ = write!(s, "{:>14}", c.model.name());
        }
        s.push('\n');
        for (i, label) in SummaryTable::ROW_LABELS.iter().enumerate() {
            let _ = write!(s, "{label:<10}");
            for c in &cols {
                let _ = write!(s, "{:>14.4}", c.table.rows()[i]);
            }
            s.push('\n');
        }
    }
    for t in &summary.t_tests {
        let _ = writeln!(
            s,
            "\npaired t-test on {} (nug - nonug, {} pairs): t = {:.4}, df = {}, p = {:.4e}",
            t.metric, t.n_pairs, t.test.t, t.test.df, t.test.p_two_sided
        );
    }
    let _ = writeln!(s);
    for ((model, failed), (_, flagged)) in summary.fit_failures.iter().zip(&summary.flagged) {
        let _ = writeln!(
            s,
            "{model}: {failed} fit failures, {flagged} replicates failed or needed jitter"
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::super::tests::small_config;
    use super::super::{ExperimentResults, ReplicateResult};
    use super::*;

    fn outcome(model: ModelKind, mse: Option<f64>, failed: bool) -> ModelOutcome {
        let mut o = ModelOutcome::blank(model);
        o.mse = mse;
        if failed {
            o.failure = Some("boom".into());
        }
        o
    }

    fn results(rows: Vec<(Option<f64>, Option<f64>)>) -> ExperimentResults {
        let mut cfg = small_config();
        cfg.metrics = vec![Metric::Mse];
        cfg.n_replicates = rows.len();
        let replicates = rows
            .into_iter()
            .enumerate()
            .map(|(k, (a, b))| ReplicateResult {
                replicate: k,
                outcomes: vec![
                    outcome(ModelKind::Nug, a, a.is_none()),
                    outcome(ModelKind::Nonug, b, b.is_none()),
                ],
                wall_time_secs: 0.0,
                plots: vec![],
            })
            .collect();
        ExperimentResults {
            config: cfg,
            replicates,
        }
    }

    #[test]
    fn single_replicate_summary() {
        let s = summarize_experiment(&results(vec![(Some(0.3), Some(0.5))])).unwrap();
        let c = s.column("mse", ModelKind::Nug).unwrap();
        assert!(c.table.rows().iter().all(|&v| v == 0.3));
        assert!(s.t_tests.is_empty());
    }

    #[test]
    fn failed_replicate_is_excluded_from_pairs() {
        let r = results(vec![
            (Some(0.1), Some(0.3)),
            (Some(0.2), None),
            (Some(0.15), Some(0.35)),
            (Some(0.12), Some(0.4)),
        ]);
        let s = summarize_experiment(&r).unwrap();
        assert_eq!(s.column("mse", ModelKind::Nug).unwrap().n, 4);
        assert_eq!(s.column("mse", ModelKind::Nonug).unwrap().n, 3);
        let t = s.t_test("mse").unwrap();
        assert_eq!(t.n_pairs, 3);
        assert!(t.test.t < 0.0);
        assert_eq!(
            s.fit_failures,
            vec![(ModelKind::Nug, 0), (ModelKind::Nonug, 1)]
        );
        assert_eq!(s.flagged_count(ModelKind::Nonug), 1);
    }

    #[test]
    fn all_failed_model_is_an_error() {
        let r = results(vec![(Some(0.1), None), (Some(0.2), None)]);
        assert!(matches!(
            summarize_experiment(&r),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn degenerate_t_test_propagates() {
        let r = results(vec![(Some(0.5), Some(0.25)), (Some(0.75), Some(0.5))]);
        assert!(matches!(
            summarize_experiment(&r),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn csv_layouts() {
        let r = results(vec![(Some(0.1), Some(0.3)), (Some(0.2), None)]);
        let mut raw = Vec::new();
        write_raw_csv(&r, &mut raw).unwrap();
        let raw = String::from_utf8(raw).unwrap();
        let mut lines = raw.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("replicate,status_nug,mse_nug,"));
        assert!(header.contains("mse_nonug"));
        assert!(lines.nth(1).unwrap().contains(",failed,,"));

        let s = summarize_experiment(&r).unwrap();
        let mut out = Vec::new();
        write_summary_csv(&s, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let firsts: Vec<&str> = text.lines().map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(
            firsts,
            ["stat", "Min.", "1st Qu.", "Median", "Mean", "3rd Qu.", "Max."]
        );
        assert!(render_summary(&s).contains("3rd Qu."));
    }
}
