//! `durp` command-line interface.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use durp::data::{eigen_spectrum, read_libsvm, write_spectrum_csv, LibsvmOptions};
use durp::eval::evaluate;
use durp::experiment::config::DEFAULT_CONFIG;
use durp::experiment::harness::{verify_theorem1, verify_theorem2, HarnessConfig};
use durp::experiment::{load_datasets, run_method_on, train_trial, RunConfig};
use durp::metric::{read_metric, write_metric, EigenForm};
use durp::triplets::sample_active_triplets;

#[derive(Parser)]
#[command(name = "durp", version, about = "Triplet metric learning with dual random projection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn one metric (seed = --seed) and write it in binary form.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Write the truncated eigenform instead of the dense matrix.
        #[arg(long)]
        eigenform: bool,
        /// Per-epoch trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Train and evaluate over all trials, or score a saved metric with --metric.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        metric: Option<PathBuf>,
    },
    /// Normalized eigenvalue spectrum of a dataset.
    Spectrum {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Low-rank recovery sweep.
    VerifyT1 {
        #[command(flatten)]
        harness: HarnessArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dual-variable recovery bound on full-rank data.
    VerifyT2 {
        #[command(flatten)]
        harness: HarnessArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample active triplets and write them as CSV.
    SampleTriplets {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the default config file.
    DefaultConfig,
}

#[derive(Args, Default)]
struct RunArgs {
    /// Flat key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    triplets: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    /// Positive real or `auto` (1/N).
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    train_file: Option<String>,
    #[arg(long)]
    test_file: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct HarnessArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    n_points: Option<usize>,
    #[arg(long)]
    triplets: Option<usize>,
    /// Comma-separated projected dimensions.
    #[arg(long, value_delimiter = ',')]
    m_values: Option<Vec<usize>>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome = Result<(), Failure>;

fn config_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn runtime_err<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(config_err)?;
                RunConfig::from_text(&text).with_context(|| format!("in {}", path.display())).map_err(config_err)?
            }
            None => RunConfig::default(),
        };
        let flags = [
            ("method", &self.method),
            ("m", &self.m),
            ("triplets", &self.triplets),
            ("epochs", &self.epochs),
            ("lambda", &self.lambda),
            ("loss", &self.loss),
            ("gamma", &self.gamma),
            ("k", &self.k),
            ("seed", &self.seed),
            ("trials", &self.trials),
            ("train_file", &self.train_file),
            ("test_file", &self.test_file),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v).map_err(config_err)?;
            }
        }
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }
}

impl HarnessArgs {
    fn apply(&self, mut cfg: HarnessConfig) -> HarnessConfig {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { cfg.$f = v; })* };
        }
        set!(d, r, n_points, triplets, m_values, seeds, data_seed, delta, separation, gamma);
        cfg
    }
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, Failure> {
    path.as_deref().ok_or_else(|| config_err(anyhow::anyhow!("--{what} is required")))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display())).map_err(runtime_err)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn train_only(cfg: &RunConfig) -> Result<durp::LabeledDataset, Failure> {
    let path = required(&cfg.train_file, "train-file")?;
    let (ds, _) = read_libsvm(path, &LibsvmOptions::default()).with_context(|| format!("loading {}", path.display())).map_err(runtime_err)?;
    Ok(ds)
}

fn both(cfg: &RunConfig) -> Result<(durp::LabeledDataset, durp::LabeledDataset), Failure> {
    let train = required(&cfg.train_file, "train-file")?;
    let test = required(&cfg.test_file, "test-file")?;
    load_datasets(train, test).context("loading datasets").map_err(runtime_err)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Train { run, eigenform, trace } => {
            let cfg = run.resolve()?;
            let out = required(&cfg.out, "out")?;
            let train = train_only(&cfg)?;
            let (_, learned) = train_trial(&cfg, &train, cfg.seed).map_err(runtime_err)?;
            let mut w = output(Some(out))?;
            if eigenform {
                let rank = learned.metric.rank(1e-12).map_err(runtime_err)?;
                EigenForm::from_metric(&learned.metric, rank).and_then(|e| e.write(&mut w)).map_err(runtime_err)?;
            } else {
                write_metric(&learned.metric, &mut w).map_err(runtime_err)?;
            }
            w.flush().map_err(runtime_err)?;
            if let Some(t) = trace {
                let mut tw = output(Some(&t))?;
                learned.solution.write_trace_csv(&mut tw).map_err(runtime_err)?;
                tw.flush().map_err(runtime_err)?;
            }
            let s = &learned.solution;
            eprintln!("dual objective {:.6e}, duality gap {:.3e}, {} epochs", s.objective, s.gap, s.trace.len());
        }
        Command::Eval { run, metric } => {
            let cfg = run.resolve()?;
            let (train, test) = both(&cfg)?;
            let json = if let Some(path) = metric {
                let file = File::open(&path).with_context(|| format!("opening {}", path.display())).map_err(runtime_err)?;
                let m = read_metric(io::BufReader::new(file)).map_err(runtime_err)?;
                serde_json::to_string_pretty(&evaluate(&m, &train, &test, cfg.k).map_err(runtime_err)?)
            } else {
                serde_json::to_string_pretty(&run_method_on(&cfg, &train, &test).map_err(runtime_err)?)
            }
            .map_err(runtime_err)?;
            let mut w = output(cfg.out.as_deref())?;
            writeln!(w, "{json}").and_then(|_| w.flush()).map_err(runtime_err)?;
        }
        Command::Spectrum { run } => {
            let cfg = run.resolve()?;
            let data = train_only(&cfg)?;
            let spectrum = eigen_spectrum(&data).map_err(runtime_err)?;
            let mut w = output(cfg.out.as_deref())?;
            write_spectrum_csv(&spectrum, &mut w).map_err(runtime_err)?;
            w.flush().map_err(runtime_err)?;
        }
        Command::VerifyT1 { harness, out } => {
            let cfg = harness.apply(HarnessConfig::low_rank_default());
            let report = verify_theorem1(&cfg).map_err(runtime_err)?;
            let mut w = output(out.as_deref())?;
            report.write_csv(&mut w).map_err(runtime_err)?;
            w.flush().map_err(runtime_err)?;
        }
        Command::VerifyT2 { harness, out } => {
            let cfg = harness.apply(HarnessConfig::full_rank_default());
            let report = verify_theorem2(&cfg).map_err(runtime_err)?;
            let mut w = output(out.as_deref())?;
            report.write_csv(&mut w).map_err(runtime_err)?;
            w.flush().map_err(runtime_err)?;
        }
        Command::SampleTriplets { run } => {
            let cfg = run.resolve()?;
            let data = train_only(&cfg)?;
            let set = sample_active_triplets(&data, cfg.triplets, cfg.seed).map_err(runtime_err)?;
            let mut w = output(cfg.out.as_deref())?;
            set.write_csv(&mut w).map_err(runtime_err)?;
            w.flush().map_err(runtime_err)?;
        }
        Command::DefaultConfig => print!("{DEFAULT_CONFIG}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
