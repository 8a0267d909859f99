//! `causal-adapt` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 verification violations,
//! 3 experiment failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::adaptation::{adapt_pair, AdaptationConfig, Trajectory};
use crate::categorical::{ClassCount, RandomSource, GENERATOR_NAME};
use crate::error::Error;
use crate::harness::{default_checkpoints, format_float, format_verify_report, run_experiment, write_verify_outputs, ExperimentConfig, ExperimentResult, DEFAULT_TRIALS};
use crate::intervention::{apply_intervention_with_concentration, InterventionKind};
use crate::priors::{load_counts, CountsOptions, PriorConfig, PriorSampler, PriorSource, DEFAULT_SMOOTHING_EPSILON};
use crate::scm::ModelTag;
use crate::theory::check_proposition;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATIONS: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

const DEFAULT_K: usize = 10;
const DEFAULT_VERIFY_TRIALS: usize = 1000;

#[derive(Debug, Parser)]
#[command(
    name = "causal-adapt",
    version,
    about = "Adaptation speed of causal and anti-causal categorical models under interventions",
    arg_required_else_help = true
)]
struct Cli {
    /// Worker threads (default: hardware count).
    #[arg(long, global = true, env = "CAUSAL_ADAPT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// N-trial experiment with symmetric-Dirichlet reference priors.
    Synthetic(ExperimentArgs),
    /// N-trial experiment with a reference prior read from a count file.
    Empirical(EmpiricalArgs),
    /// Checks the distance relations for all four intervention kinds.
    Verify(VerifyArgs),
    /// One matched causal/anti-causal run with a full KL trace.
    Adapt(AdaptArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Bias,
    Cause,
    BiasCause,
    Effect,
}

impl From<KindArg> for InterventionKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Bias => InterventionKind::Bias,
            KindArg::Cause => InterventionKind::Cause,
            KindArg::BiasCause => InterventionKind::BiasAndCause,
            KindArg::Effect => InterventionKind::Effect,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct SgdArgs {
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 10)]
    batch: usize,
    /// Also record KL of the averaged iterate.
    #[arg(long)]
    average: bool,
    #[arg(long, default_value_t = 1)]
    kl_every: usize,
}

impl SgdArgs {
    fn config(&self) -> AdaptationConfig {
        AdaptationConfig {
            steps: self.steps,
            learning_rate: self.lr,
            batch_size: self.batch,
            track_average: self.average,
            kl_every: self.kl_every,
        }
    }

    fn validated(&self) -> std::result::Result<AdaptationConfig, Failure> {
        let config = self.config();
        config.validate().map_err(|e| {
            let flag = if self.steps == 0 {
                "--steps"
            } else if self.batch == 0 {
                "--batch"
            } else if self.kl_every == 0 {
                "--kl-every"
            } else {
                "--lr"
            };
            Failure::usage(flag, e)
        })?;
        Ok(config)
    }
}

/// Flags shared by the two experiment subcommands.
#[derive(Debug, Clone, Args)]
struct RunArgs {
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, value_enum, default_value = "cause")]
    intervention: KindArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (default: runs/<subcommand>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated checkpoint steps (default: T/4 and 3T/4).
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.0)]
    p_change: f64,
    #[command(flatten)]
    sgd: SgdArgs,
}

#[derive(Debug, Clone, Args)]
struct ExperimentArgs {
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Clone, Args)]
struct EmpiricalArgs {
    /// Count file with header `a,x,y,count`.
    #[arg(long)]
    counts: PathBuf,
    /// Added to every cell when some cell count is zero.
    #[arg(long, default_value_t = DEFAULT_SMOOTHING_EPSILON)]
    epsilon: f64,
    /// Class count (default: inferred from the count file).
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Clone, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_VERIFY_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct AdaptArgs {
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, value_enum, default_value = "cause")]
    intervention: KindArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Count file for the reference prior (default: synthetic prior).
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SMOOTHING_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    p_change: f64,
    #[command(flatten)]
    sgd: SgdArgs,
}

/// A failure tagged with the exit code it maps to.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(flag: &str, e: impl std::fmt::Display) -> Self {
        Self { code: EXIT_USAGE, message: format!("{flag}: {e}") }
    }

    fn run(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_) | Error::Ingestion { .. } => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Self { code, message: e.to_string() }
    }
}

type Outcome = std::result::Result<i32, Failure>;

/// Runs the CLI on `args` (including the program name), writing to the
/// process stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            let _ = writeln!(err, "error: --threads: must be at least 1");
            return EXIT_USAGE;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: --threads: {e}");
            return EXIT_USAGE;
        }
    };

    let mut buf = Vec::new();
    let outcome = pool.install(|| match &cli.command {
        Command::Synthetic(a) => synthetic(a, &mut buf),
        Command::Empirical(a) => empirical(a, &mut buf),
        Command::Verify(a) => verify(a, &mut buf),
        Command::Adapt(a) => adapt(a, &mut buf),
    });
    let _ = out.write_all(&buf);
    match outcome {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn class_count(k: usize) -> std::result::Result<ClassCount, Failure> {
    ClassCount::new(k).map_err(|e| Failure::usage("--k", e))
}

fn out_dir(out: &Option<PathBuf>, subcommand: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| Path::new("runs").join(subcommand))
}

fn experiment_config(k: ClassCount, run: &RunArgs, prior: PriorConfig, subcommand: &str) -> std::result::Result<ExperimentConfig, Failure> {
    let adaptation = run.sgd.validated()?;
    prior.validate().map_err(|e| Failure::usage("--p-change", e))?;
    let mut config = ExperimentConfig::new(k, Some(run.intervention.into()), adaptation, run.seed);
    config.trials = run.trials;
    config.checkpoints = run.checkpoints.clone().unwrap_or_else(|| default_checkpoints(run.sgd.steps));
    config.prior = prior;
    config.output_dir = Some(out_dir(&run.out, subcommand));
    config.validate().map_err(|e| Failure::usage("--checkpoints", e))?;
    Ok(config)
}

fn report_experiment(result: &ExperimentResult, out: &mut Vec<u8>) -> Outcome {
    let c = &result.config;
    let mut text = format!(
        "k={} trials={} completed={} intervention={} steps={} seed={}\n",
        c.k.get(),
        c.trials,
        result.records.len() / 2,
        c.intervention.map_or("none", |k| k.as_str()),
        c.adaptation.steps,
        c.seed
    );
    for f in &result.failures {
        let _ = writeln!(text, "trial {} failed: {}", f.trial, f.message);
    }
    let _ = writeln!(text, "model       checkpoint  slope                    intercept                r2");
    for tag in ModelTag::ALL {
        for &cp in &c.checkpoints {
            match result.regression(tag, cp) {
                Some(s) => {
                    let _ = writeln!(
                        text,
                        "{:<11} {:>10}  {:<24} {:<24} {}",
                        tag.as_str(),
                        cp,
                        format_float(s.a),
                        format_float(s.b),
                        format_float(s.r2)
                    );
                }
                None => {
                    let _ = writeln!(text, "{:<11} {:>10}  undefined", tag.as_str(), cp);
                }
            }
        }
    }
    if let Some(dir) = &c.output_dir {
        let _ = writeln!(text, "outputs written to {}", dir.display());
    }
    let _ = out.write_all(text.as_bytes());
    Ok(EXIT_OK)
}

fn synthetic(a: &ExperimentArgs, out: &mut Vec<u8>) -> Outcome {
    let k = class_count(a.k)?;
    let prior = PriorConfig { p_change: a.run.p_change, ..PriorConfig::synthetic(k) };
    let config = experiment_config(k, &a.run, prior, "synthetic")?;
    let result = run_experiment(&config).map_err(Failure::run)?;
    report_experiment(&result, out)
}

/// Reads the count file up front so that a bad file is reported against
/// `--counts` and `k` can be inferred.
fn counts_prior(path: &Path, k: Option<usize>, epsilon: f64, p_change: f64) -> std::result::Result<PriorConfig, Failure> {
    if let Some(k) = k {
        class_count(k)?;
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Failure::usage("--epsilon", "must be finite and >= 0"));
    }
    let joint = load_counts(path, &CountsOptions { k, smoothing_epsilon: epsilon }).map_err(|e| Failure::usage("--counts", e))?;
    Ok(PriorConfig {
        source: PriorSource::Counts(path.to_path_buf()),
        smoothing_epsilon: epsilon,
        p_change,
        ..PriorConfig::synthetic(class_count(joint.k())?)
    })
}

fn empirical(a: &EmpiricalArgs, out: &mut Vec<u8>) -> Outcome {
    let prior = counts_prior(&a.counts, a.k, a.epsilon, a.run.p_change)?;
    let config = experiment_config(prior.k, &a.run, prior, "empirical")?;
    let result = run_experiment(&config).map_err(Failure::run)?;
    report_experiment(&result, out)
}

fn verify(a: &VerifyArgs, out: &mut Vec<u8>) -> Outcome {
    class_count(a.k)?;
    if a.trials == 0 {
        return Err(Failure::usage("--trials", "must be at least 1"));
    }
    let kinds: Vec<InterventionKind> = InterventionKind::ALL
        .into_iter()
        .filter(|&kind| kind != InterventionKind::Effect || a.k >= 2)
        .collect();
    let rng = RandomSource::new(a.seed, 0);
    let reports = kinds
        .iter()
        .map(|&kind| check_proposition(kind, a.trials, a.k, &rng.fork(kind as u64)))
        .collect::<crate::error::Result<Vec<_>>>()
        .map_err(Failure::run)?;

    let config = json!({ "k": a.k, "trials": a.trials, "seed": a.seed, "kinds": kinds });
    let dir = out_dir(&a.out, "verify");
    write_verify_outputs(&reports, &config, &dir).map_err(Failure::run)?;
    let mut text = format_verify_report(&reports);
    let _ = writeln!(text, "outputs written to {}", dir.display());
    let _ = out.write_all(text.as_bytes());
    Ok(if reports.iter().all(|r| r.passed()) { EXIT_OK } else { EXIT_VIOLATIONS })
}

fn trace_rows<F>(csv: &mut String, tag: ModelTag, traj: &Trajectory<F>) {
    let averaged = traj.kl_averaged.as_deref();
    let _ = writeln!(csv, "0,{tag},{},", format_float(traj.initial_kl));
    for (i, (step, kl)) in traj.kl_current.iter().enumerate() {
        let avg = averaged.map_or(String::new(), |v| format_float(v[i].1));
        let _ = writeln!(csv, "{step},{tag},{},{avg}", format_float(*kl));
    }
}

fn adapt(a: &AdaptArgs, out: &mut Vec<u8>) -> Outcome {
    let prior = match &a.counts {
        Some(path) => counts_prior(path, Some(a.k), a.epsilon, a.p_change)?,
        None => PriorConfig { p_change: a.p_change, ..PriorConfig::synthetic(class_count(a.k)?) },
    };
    prior.validate().map_err(|e| Failure::usage("--p-change", e))?;
    let adaptation = a.sgd.validated()?;
    let kind: InterventionKind = a.intervention.into();

    // same streams as trial 0 of an experiment with this seed
    let base = RandomSource::new(a.seed, 0);
    let sampler = PriorSampler::from_config(&prior).map_err(Failure::run)?;
    let reference = sampler.draw(&mut base.fork(0)).map_err(Failure::run)?;
    let pair = apply_intervention_with_concentration(kind, &reference, 1.0, &mut base.fork(1)).map_err(Failure::run)?;
    let run = adapt_pair(&pair, &adaptation, &base).map_err(Failure::run)?;

    let dir = out_dir(&a.out, "adapt");
    let mut csv = String::from("step,model,kl,kl_averaged\n");
    trace_rows(&mut csv, ModelTag::Causal, &run.causal);
    trace_rows(&mut csv, ModelTag::AntiCausal, &run.anticausal);
    let config = json!({
        "k": a.k,
        "intervention": kind,
        "seed": a.seed,
        "intervention_concentration": 1.0,
        "prior": prior,
        "adaptation": adaptation,
    });
    let model = |initial: f64, fin: f64, gauge: f64, delta: f64| {
        json!({ "delta": delta, "initial_kl": initial, "final_kl": fin, "gauge_residual": gauge })
    };
    let summary = json!({
        "generator": GENERATOR_NAME,
        "config": config,
        "causal": model(run.causal.initial_kl, run.causal.final_kl(), run.causal.gauge_residual, run.deltas.delta_causal),
        "anticausal": model(
            run.anticausal.initial_kl,
            run.anticausal.final_kl(),
            run.anticausal.gauge_residual,
            run.deltas.delta_anticausal
        ),
    });
    write_files(
        &dir,
        &[
            ("trace.csv", csv),
            ("summary.json", pretty(&summary)),
            ("config.json", pretty(&json!({ "generator": GENERATOR_NAME, "adapt": config }))),
        ],
    )
    .map_err(Failure::run)?;

    let text = format!(
        "intervention={kind} k={} steps={}\n\
         causal:     delta={} initial_kl={} final_kl={}\n\
         anticausal: delta={} initial_kl={} final_kl={}\n\
         outputs written to {}\n",
        a.k,
        adaptation.steps,
        format_float(run.deltas.delta_causal),
        format_float(run.causal.initial_kl),
        format_float(run.causal.final_kl()),
        format_float(run.deltas.delta_anticausal),
        format_float(run.anticausal.initial_kl),
        format_float(run.anticausal.final_kl()),
        dir.display()
    );
    let _ = out.write_all(text.as_bytes());
    Ok(EXIT_OK)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn write_files(dir: &Path, files: &[(&str, String)]) -> crate::error::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, contents) in files {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
