use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dethetgp::core_math::Matrix;
use dethetgp::experiment_harness::{
    cross_section, fit_model_file, prepare_replication, run_experiment, write_cross_section_csv,
    write_replications_csv, write_summary_json, ExperimentConfig, ModelFile, ModelKind,
};

const LOG_ENV: &str = "DETHETGP_LOG";

#[derive(Parser, Debug)]
#[command(name = "dethetgp", version, about = "Emulate stochastic simulators with deterministic-run-informed heteroscedastic GPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the commands that read an experiment config.
#[derive(clap::Args, Debug)]
struct ConfigArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's worker count (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every replication of a HetGP vs DetHetGP comparison.
    Experiment {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Fit one emulator to the first replication's training data and save it.
    Fit {
        #[command(flatten)]
        config: ConfigArgs,
        /// detgp, hetgp or dethetgp.
        #[arg(long, default_value = "dethetgp")]
        model: String,
        /// Replication whose designs and runs are used.
        #[arg(long, default_value_t = 0)]
        rep: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Predict at the points of a CSV file (one column per input, values in [0, 1]).
    Predict {
        /// Model file written by `fit`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Predict along one input axis with the others held fixed.
    Crosssection {
        #[arg(long)]
        model: PathBuf,
        /// Index of the varying input.
        #[arg(long, default_value_t = 0)]
        axis: usize,
        /// Fixed input values, one per input, with `_` in the varying position (e.g. `_,0.5`).
        #[arg(long)]
        fixed: Option<String>,
        #[arg(long, default_value_t = 201)]
        grid: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

/// Provenance written next to every set of outputs.
#[derive(Serialize, Deserialize, Debug)]
struct RunManifest {
    command: String,
    /// SHA-256 of the resolved configuration (or input files), hex encoded.
    config_hash: String,
    tool_version: String,
    started: DateTime<Utc>,
    finished: DateTime<Utc>,
    output_paths: Vec<PathBuf>,
}

struct Outputs {
    dir: PathBuf,
    paths: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            paths: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        f(&mut w)?;
        w.flush()?;
        log::info!("wrote {}", path.display());
        self.paths.push(path);
        Ok(())
    }

    fn finish(mut self, command: &str, config_hash: String, started: DateTime<Utc>) -> Result<()> {
        self.paths.push(self.dir.join("manifest.json"));
        let manifest = RunManifest {
            command: command.into(),
            config_hash,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            started,
            finished: Utc::now(),
            output_paths: self.paths.clone(),
        };
        let path = self.dir.join("manifest.json");
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()?;
        for p in &manifest.output_paths {
            println!("{}", p.display());
        }
        Ok(())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        anyhow::anyhow!("invalid {what} {} at `{at}`: {}", path.display(), e.into_inner())
    })
}

/// Loads, overrides and validates a config; returns it with the hash of its resolved form.
fn load_config(args: &ConfigArgs) -> Result<(ExperimentConfig, String)> {
    let mut cfg: ExperimentConfig = read_json(&args.config, "config")?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    cfg.validate().with_context(|| format!("invalid config {}", args.config.display()))?;
    let hash = sha256_hex(&serde_json::to_vec(&cfg)?);
    Ok((cfg, hash))
}

fn hash_files(paths: &[&Path], extra: &str) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        h.update(fs::read(p).with_context(|| format!("reading {}", p.display()))?);
    }
    h.update(extra.as_bytes());
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Reads points from a CSV with one column per input; a non-numeric first row is a header.
fn read_points(path: &Path, d: usize) -> Result<Matrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading points {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if i == 0 => continue,
            Err(e) => bail!("{} line {}: {e}", path.display(), i + 1),
        };
        if row.len() != d {
            bail!("{} line {}: expected {d} columns for a {d}-input model, found {}", path.display(), i + 1, row.len());
        }
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            bail!("{} line {}: input {v} outside [0, 1]", path.display(), i + 1);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{} has no points", path.display());
    }
    Ok(Matrix::from_rows(&rows)?)
}

fn parse_fixed(spec: Option<&str>, d: usize, axis: usize) -> Result<Vec<Option<f64>>> {
    let Some(spec) = spec else {
        if d == 1 {
            return Ok(vec![None]);
        }
        bail!("--fixed is required for a {d}-input model (e.g. `_,0.5`)");
    };
    let fixed = spec
        .split(',')
        .map(|s| match s.trim() {
            "_" => Ok(None),
            v => v.parse::<f64>().map(Some).with_context(|| format!("bad --fixed value `{v}`")),
        })
        .collect::<Result<Vec<_>>>()?;
    if fixed.len() != d {
        bail!("--fixed has {} entries, model has {d} inputs", fixed.len());
    }
    if fixed.get(axis).is_some_and(|f| f.is_some()) {
        bail!("--fixed entry {axis} must be `_` for the varying axis");
    }
    Ok(fixed)
}

fn cmd_experiment(args: &ConfigArgs, out_dir: &Path) -> Result<()> {
    let started = Utc::now();
    let (cfg, hash) = load_config(args)?;
    let result = run_experiment(&cfg)?;
    for s in &result.summary {
        let median = |q: Option<dethetgp::experiment_harness::Quartiles>| q.map_or(f64::NAN, |q| q.median);
        log::info!(
            "{}: median true_mse {:.4e}, mse {:.4e}, score {:.1} ({} ok, {} failed)",
            s.method,
            median(s.true_mse),
            median(s.mse),
            median(s.score),
            s.n_ok,
            s.n_failed
        );
    }
    let mut out = Outputs::new(out_dir)?;
    out.write("replications.csv", |w| Ok(write_replications_csv(&result, w)?))?;
    out.write("summary.json", |w| Ok(write_summary_json(&result, w)?))?;
    out.finish("experiment", hash, started)
}

fn cmd_fit(args: &ConfigArgs, model: &str, rep: usize, out_dir: &Path) -> Result<()> {
    let started = Utc::now();
    let kind: ModelKind = model.parse()?;
    let (cfg, hash) = load_config(args)?;
    let data = prepare_replication(&cfg, rep)?;
    let file = fit_model_file(&cfg, &data, kind).with_context(|| format!("fitting {kind}"))?;
    let mut out = Outputs::new(out_dir)?;
    out.write("model.json", |w| {
        serde_json::to_writer(&mut *w, &file)?;
        Ok(writeln!(w)?)
    })?;
    out.finish("fit", sha256_hex(format!("{hash}:{kind}:{rep}").as_bytes()), started)
}

fn cmd_predict(model: &Path, points: &Path, out_dir: &Path) -> Result<()> {
    let started = Utc::now();
    let file: ModelFile = read_json(model, "model file")?;
    let x = read_points(points, file.model.dim())?;
    let p = file.predict(&x)?;
    let mut out = Outputs::new(out_dir)?;
    out.write("predictions.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["mean", "variance", "det_mean"])?;
        for i in 0..p.len() {
            let det = p.det_mean.as_ref().map(|d| format!("{:e}", d[i])).unwrap_or_default();
            c.write_record([format!("{:e}", p.mean[i]), format!("{:e}", p.variance[i]), det])?;
        }
        Ok(c.flush()?)
    })?;
    out.finish("predict", hash_files(&[model, points], "")?, started)
}

fn cmd_crosssection(model: &Path, axis: usize, fixed: Option<&str>, grid: usize, out_dir: &Path) -> Result<()> {
    let started = Utc::now();
    let file: ModelFile = read_json(model, "model file")?;
    let fixed = parse_fixed(fixed, file.model.dim(), axis)?;
    let rows = cross_section(&file, &fixed, axis, grid)?;
    let mut out = Outputs::new(out_dir)?;
    out.write("crosssection.csv", |w| Ok(write_cross_section_csv(&rows, w)?))?;
    let spec = format!("{axis}:{fixed:?}:{grid}");
    out.finish("crosssection", hash_files(&[model], &spec)?, started)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    match Cli::parse().command {
        Command::Experiment { config, out_dir } => cmd_experiment(&config, &out_dir),
        Command::Fit {
            config,
            model,
            rep,
            out_dir,
        } => cmd_fit(&config, &model, rep, &out_dir),
        Command::Predict { model, points, out_dir } => cmd_predict(&model, &points, &out_dir),
        Command::Crosssection {
            model,
            axis,
            fixed,
            grid,
            out_dir,
        } => cmd_crosssection(&model, axis, fixed.as_deref(), grid, &out_dir),
    }
}
