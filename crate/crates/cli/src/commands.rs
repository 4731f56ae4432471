use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nugget::harness::{
    render_summary, run_experiment, summarize_experiment, table_config, write_plot_csv,
    write_raw_csv, write_summary_csv, write_ttest_csv, ExperimentConfig, ExperimentResults,
    TableId,
};
use nugget::inference::{posterior_predict, run_chain, McmcSettings, PriorSpec};
use nugget::io::{coordinate_names, read_inputs, read_table, read_training, write_table};
use nugget::model_file::{ModelFile, ModelMeta};
use nugget::testbed::{design as make_design, grid_design, DesignKind, Simulator};
use nugget::{Dataset, Error, Result};

use crate::{DesignArgs, ExperimentArgs, FitArgs, PredictArgs, ReproduceArgs, SimulateArgs};

/// Parses `lo:hi`.
pub fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got '{s}'"))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|_| format!("bad lower bound in '{s}'"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|_| format!("bad upper bound in '{s}'"))?;
    if !(lo < hi) {
        return Err(format!("need lo < hi in '{s}'"));
    }
    Ok((lo, hi))
}

fn seed_or_entropy(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn fit(a: FitArgs) -> Result<()> {
    let train = read_training(open(&a.data)?)?;
    let m = train.x.ncols();
    let from_data = a.bounds.is_empty();
    let bounds = if from_data {
        (0..m)
            .map(|l| {
                let col = train.x.column(l);
                (col.min(), col.max())
            })
            .collect()
    } else {
        a.bounds
    };
    if bounds.len() != m {
        return Err(Error::Config(format!(
            "{} bounds given for {m} inputs",
            bounds.len()
        )));
    }
    let prior = PriorSpec {
        d_shape: a.prior.d_shape,
        d_rate: a.prior.d_rate,
        g_shape: a.prior.g_shape,
        g_rate: a.prior.g_rate,
        a: a.prior.a,
        b: a.prior.b,
        fix_g_zero: a.no_nugget,
    };
    prior.validate()?;
    let mcmc = McmcSettings {
        n_iter: a.mcmc.n_iter,
        burn: a.mcmc.burn,
        thin: a.mcmc.thin,
        proposal_sd: a.mcmc.proposal_sd,
    };
    mcmc.validate()?;
    let data = Dataset::new(&train.x, bounds.clone(), &train.y).map_err(|e| match e {
        Error::InvalidInput(msg) if from_data && msg.contains("bound") => Error::InvalidInput(
            format!("{msg}; pass --bounds when an input column is constant"),
        ),
        other => other,
    })?;
    let seed = seed_or_entropy(a.seed);
    let chain = run_chain(&data, &prior, &mcmc, a.isotropic, seed)?;

    let file = ModelFile {
        meta: ModelMeta {
            input_names: train.input_names,
            response_name: train.response_name,
            bounds,
            prior,
            mcmc,
            isotropic: a.isotropic,
            seed,
            accept_d: chain.accept_d,
            accept_g: chain.accept_g,
        },
        raw_x: train.x,
        raw_y: train.y,
        chain,
    };
    let mut w = create(&a.out)?;
    file.write(&mut w)?;
    w.flush()?;
    if let Some(p) = &a.chain {
        let mut w = create(p)?;
        file.chain.write_csv(&mut w)?;
        w.flush()?;
    }

    let chain = &file.chain;
    let d: Vec<String> = chain.median_d().iter().map(|v| format!("{v:.4}")).collect();
    let mut out = io::stdout().lock();
    writeln!(out, "samples: {}", chain.len())?;
    writeln!(
        out,
        "acceptance: d {:.3}, g {:.3}",
        chain.accept_d, chain.accept_g
    )?;
    writeln!(out, "posterior median d: [{}]", d.join(", "))?;
    writeln!(out, "posterior median g: {:.6}", chain.median_g())?;
    let jitter = chain.max_jitter();
    if jitter > 0.0 {
        eprintln!(
            "warning: the correlation matrix needed jitter up to {jitter:e} to factor; \
             the data may be too dense or duplicated for this model"
        );
    }
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<()> {
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(Error::Config(format!(
            "level must lie in (0,1), got {}",
            a.level
        )));
    }
    if a.draws == 0 {
        return Err(Error::Config("--draws must be at least 1".into()));
    }
    let model = ModelFile::read(open(&a.model)?)?;
    let data = model.dataset()?;
    let m = data.m();
    let (raw, names) = match (&a.test, a.grid) {
        (Some(p), _) => {
            let t = read_inputs(open(p)?, m)?;
            (t.rows, t.header)
        }
        (None, Some(n)) => (
            grid_design(n, &model.meta.bounds)?,
            model.meta.input_names.clone(),
        ),
        (None, None) => return Err(Error::Config("give --test or --grid".into())),
    };
    let (xs, outside) = data.scale_test_points(&raw)?;
    if outside {
        eprintln!("warning: some test inputs lie outside the training bounds; those predictions extrapolate");
    }
    let seed = seed_or_entropy(a.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred = posterior_predict(
        &data,
        &model.chain,
        &model.meta.prior,
        &xs,
        a.level,
        a.draws,
        a.include_noise,
        &mut rng,
    )?;
    if pred.dropped > 0 {
        eprintln!(
            "warning: {} of {} posterior samples could not predict{}",
            pred.dropped,
            model.chain.len(),
            if pred.degraded { " (degraded)" } else { "" }
        );
    }
    let p = raw.nrows();
    let mut header = names;
    header.extend(["mean", "lo", "hi"].map(String::from));
    let mut out = DMatrix::zeros(p, m + 3);
    out.columns_mut(0, m).copy_from(&raw);
    for i in 0..p {
        out[(i, m)] = pred.mean[i];
        out[(i, m + 1)] = pred.lo[i];
        out[(i, m + 2)] = pred.hi[i];
    }
    let mut w = create(&a.out)?;
    write_table(&mut w, &header, &out)?;
    w.flush()?;
    Ok(())
}

fn print_catalog() -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "{:<16} {:>4}  {:<28} {:<6} description",
        "name", "dims", "domain", "truth"
    )?;
    for sim in Simulator::ALL {
        let spec = sim.spec();
        let domain: Vec<String> = spec
            .domain
            .iter()
            .map(|(lo, hi)| format!("[{lo}, {hi}]"))
            .collect();
        let domain = if domain.iter().all(|d| *d == domain[0]) && domain.len() > 1 {
            format!("{}^{}", domain[0], domain.len())
        } else {
            domain.join("x")
        };
        writeln!(
            out,
            "{:<16} {:>4}  {:<28} {:<6} {}",
            spec.name,
            spec.dims,
            domain,
            if spec.truth_available { "yes" } else { "no" },
            spec.description
        )?;
    }
    Ok(())
}

fn design_kind(s: &str) -> Result<DesignKind> {
    s.parse()
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    if a.list {
        return print_catalog();
    }
    let sim = Simulator::from_name(a.name.as_deref().unwrap_or_default())?;
    let spec = sim.spec();
    let (x, names) = match (&a.design, &a.kind, a.n) {
        (Some(p), _, _) => {
            let t = read_table(open(p)?)?;
            if t.header.len() != spec.dims {
                return Err(Error::Config(format!(
                    "{} takes {} inputs but the design has {} columns",
                    spec.name,
                    spec.dims,
                    t.header.len()
                )));
            }
            (t.rows, t.header)
        }
        (None, Some(kind), Some(n)) => {
            let kind = design_kind(kind)?;
            let seed = if kind == DesignKind::Grid {
                0
            } else {
                seed_or_entropy(a.seed)
            };
            (
                make_design(kind, n, &spec.domain, seed)?,
                coordinate_names(spec.dims),
            )
        }
        _ => {
            return Err(Error::Config(
                "give --design FILE, or --kind and --n".into(),
            ))
        }
    };
    let rows: Vec<Vec<f64>> = (0..x.nrows())
        .map(|i| x.row(i).iter().copied().collect())
        .collect();
    let y = rows
        .iter()
        .map(|r| sim.eval(r))
        .collect::<Result<Vec<_>>>()?;
    let truth = if spec.truth_available {
        Some(
            rows.iter()
                .map(|r| sim.truth(r).expect("truth available"))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let extra = 1 + usize::from(truth.is_some());
    let mut header = names;
    header.push("y".into());
    if truth.is_some() {
        header.push("truth".into());
    }
    let m = spec.dims;
    let mut out = DMatrix::zeros(x.nrows(), m + extra);
    out.columns_mut(0, m).copy_from(&x);
    for i in 0..x.nrows() {
        out[(i, m)] = y[i];
        if let Some(t) = &truth {
            out[(i, m + 1)] = t[i];
        }
    }
    let mut w = sink(a.out.as_deref())?;
    write_table(&mut w, &header, &out)?;
    w.flush()?;
    Ok(())
}

pub fn design(a: DesignArgs) -> Result<()> {
    let kind = design_kind(&a.kind)?;
    let domain = match &a.simulator {
        Some(name) => Simulator::from_name(name)?.spec().domain,
        None => a.domain.clone(),
    };
    if domain.is_empty() {
        return Err(Error::Config(
            "give --domain lo:hi (once per dimension) or --simulator".into(),
        ));
    }
    let seed = if kind == DesignKind::Grid {
        0
    } else {
        seed_or_entropy(a.seed)
    };
    let x = make_design(kind, a.n, &domain, seed).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::Config(msg),
        other => other,
    })?;
    let mut w = sink(a.out.as_deref())?;
    write_table(&mut w, &coordinate_names(domain.len()), &x)?;
    w.flush()?;
    Ok(())
}

/// Writes `config.json`, `raw.csv`, `summary.csv`, `ttest.csv`,
/// `summary.txt` and one plot CSV per kept replicate and model.
fn write_outputs(dir: &Path, results: &ExperimentResults) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut cfg = results.config.clone();
    cfg.workers = None;
    let mut w = create(&dir.join("config.json"))?;
    serde_json::to_writer_pretty(&mut w, &cfg)?;
    writeln!(w)?;
    w.flush()?;

    let mut w = create(&dir.join("raw.csv"))?;
    write_raw_csv(results, &mut w)?;
    w.flush()?;
    for rep in &results.replicates {
        for plot in &rep.plots {
            let name = format!("plot_rep{}_{}.csv", plot.replicate, plot.model);
            let mut w = create(&dir.join(name))?;
            write_plot_csv(plot, &mut w)?;
            w.flush()?;
        }
    }

    let summary = summarize_experiment(results)?;
    let mut w = create(&dir.join("summary.csv"))?;
    write_summary_csv(&summary, &mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("ttest.csv"))?;
    write_ttest_csv(&summary, &mut w)?;
    w.flush()?;
    let text = render_summary(&summary);
    fs::write(dir.join("summary.txt"), &text)?;
    io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}

pub fn experiment(a: ExperimentArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| Error::Config(format!("{}: {e}", a.config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if a.workers.is_some() {
        cfg.workers = a.workers;
    }
    cfg.validate()?;
    let results = run_experiment(&cfg)?;
    write_outputs(&a.out_dir, &results)
}

pub fn reproduce(a: ReproduceArgs) -> Result<()> {
    let id: TableId = a.table.parse()?;
    let scale = a.scale.unwrap_or_else(|| id.default_scale());
    let n = id.replicates_at(scale)?;
    let seed = seed_or_entropy(a.seed);
    let mut cfg = table_config(id, n, seed);
    cfg.workers = a.workers;
    cfg.validate()?;
    eprintln!("{id}: {n} replicates on {}", cfg.simulator);
    let results = run_experiment(&cfg)?;
    write_outputs(&a.out_dir, &results)
}
