//! N-trial adaptation experiments: scatter statistics of KL against the
//! initial distance at checkpoints, and percentile convergence curves.

mod output;
pub mod stats;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptation::{adapt_pair, AdaptationConfig, Trajectory};
use crate::categorical::{ClassCount, RandomSource};
use crate::error::{Error, Result};
use crate::intervention::{apply_intervention_with_concentration, InterventionKind, TransferPair};
use crate::priors::{PriorConfig, PriorSampler};
use crate::scm::ModelTag;

pub use output::{format_float, format_verify_report, write_outputs, write_verify_outputs, OutputFiles};
pub use stats::{least_squares, percentiles, RegressionStats};

pub const DEFAULT_TRIALS: usize = 100;
/// Experiments with more than this fraction of diverged trials fail.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub k: ClassCount,
    pub trials: usize,
    /// `None` replays the reference distribution (no shift).
    pub intervention: Option<InterventionKind>,
    pub adaptation: AdaptationConfig,
    pub checkpoints: Vec<usize>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub prior: PriorConfig,
    /// Dirichlet concentration of the replacement marginals.
    pub intervention_concentration: f64,
}

impl ExperimentConfig {
    pub fn new(k: ClassCount, intervention: Option<InterventionKind>, adaptation: AdaptationConfig, seed: u64) -> Self {
        let checkpoints = default_checkpoints(adaptation.steps);
        Self {
            k,
            trials: DEFAULT_TRIALS,
            intervention,
            adaptation,
            checkpoints,
            seed,
            output_dir: None,
            prior: PriorConfig::synthetic(k),
            intervention_concentration: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adaptation.validate()?;
        self.prior.validate()?;
        if self.prior.k != self.k {
            return Err(Error::invalid(format!(
                "prior class count {} differs from experiment class count {}",
                self.prior.k.get(),
                self.k.get()
            )));
        }
        if !(self.intervention_concentration > 0.0 && self.intervention_concentration.is_finite()) {
            return Err(Error::invalid("intervention concentration must be positive"));
        }
        let steps = self.adaptation.steps;
        let stride = self.adaptation.kl_every;
        for &c in &self.checkpoints {
            if c == 0 || c > steps {
                return Err(Error::invalid(format!("checkpoint {c} outside [1, {steps}]")));
            }
            if c % stride != 0 {
                return Err(Error::invalid(format!(
                    "checkpoint {c} is not a multiple of the KL stride {stride}"
                )));
            }
        }
        Ok(())
    }
}

/// `round(T/4)` and `round(3T/4)`, clamped to `[1, T]`.
pub fn default_checkpoints(steps: usize) -> Vec<usize> {
    let at = |f: f64| ((steps as f64 * f).round() as usize).clamp(1, steps.max(1));
    let mut out = vec![at(0.25), at(0.75)];
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub model: ModelTag,
    pub delta: f64,
    /// `(checkpoint, KL)` in checkpoint order.
    pub kl_at: Vec<(usize, f64)>,
}

impl TrialRecord {
    pub fn kl_at(&self, checkpoint: usize) -> Option<f64> {
        self.kl_at.iter().find(|(c, _)| *c == checkpoint).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub message: String,
}

/// Per-step median, 5th and 95th percentile (and mean) of KL across trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub step: usize,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CurveSummary {
    pub causal: Vec<CurvePoint>,
    pub anticausal: Vec<CurvePoint>,
}

impl CurveSummary {
    pub fn model(&self, tag: ModelTag) -> &[CurvePoint] {
        match tag {
            ModelTag::Causal => &self.causal,
            ModelTag::AntiCausal => &self.anticausal,
        }
    }

    pub fn at(&self, tag: ModelTag, step: usize) -> Option<&CurvePoint> {
        self.model(tag).iter().find(|p| p.step == step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionEntry {
    pub model: ModelTag,
    pub checkpoint: usize,
    /// `None` when the fit is undefined (fewer than two points or no spread in delta).
    pub stats: Option<RegressionStats>,
}

/// Full KL trace of one model in one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialTrace {
    pub trial: usize,
    pub model: ModelTag,
    pub initial_kl: f64,
    /// KL at each recorded step, aligned with [`ExperimentResult::steps`].
    pub kl: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub steps: Vec<usize>,
    pub records: Vec<TrialRecord>,
    pub traces: Vec<TrialTrace>,
    pub failures: Vec<TrialFailure>,
    pub curves: CurveSummary,
    pub regressions: Vec<RegressionEntry>,
}

impl ExperimentResult {
    pub fn regression(&self, model: ModelTag, checkpoint: usize) -> Option<RegressionStats> {
        self.regressions
            .iter()
            .find(|r| r.model == model && r.checkpoint == checkpoint)
            .and_then(|r| r.stats)
    }

    pub fn records_for(&self, model: ModelTag) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(move |r| r.model == model)
    }

    pub fn traces_for(&self, model: ModelTag) -> impl Iterator<Item = &TrialTrace> {
        self.traces.iter().filter(move |t| t.model == model)
    }
}

struct TrialOutcome {
    trial: usize,
    records: [TrialRecord; 2],
    traces: [TrialTrace; 2],
}

fn run_trial(config: &ExperimentConfig, prior: &PriorSampler, trial: usize) -> Result<TrialOutcome> {
    let base = RandomSource::new(config.seed, trial as u64);
    let reference = prior.draw(&mut base.fork(0))?;
    let pair = match config.intervention {
        Some(kind) => apply_intervention_with_concentration(
            kind,
            &reference,
            config.intervention_concentration,
            &mut base.fork(1),
        )?,
        None => TransferPair::unshifted(&reference),
    };
    let run = adapt_pair(&pair, &config.adaptation, &base)?;

    fn summarize<F>(
        trial: usize,
        model: ModelTag,
        delta: f64,
        traj: &Trajectory<F>,
        checkpoints: &[usize],
    ) -> (TrialRecord, TrialTrace) {
        let kl_at = checkpoints
            .iter()
            .map(|&c| (c, traj.kl_at(c).expect("checkpoints are recorded steps")))
            .collect();
        (
            TrialRecord { trial, model, delta, kl_at },
            TrialTrace {
                trial,
                model,
                initial_kl: traj.initial_kl,
                kl: traj.kl_current.iter().map(|(_, v)| *v).collect(),
            },
        )
    }
    let (rc, tc) = summarize(trial, ModelTag::Causal, run.deltas.delta_causal, &run.causal, &config.checkpoints);
    let (ra, ta) = summarize(
        trial,
        ModelTag::AntiCausal,
        run.deltas.delta_anticausal,
        &run.anticausal,
        &config.checkpoints,
    );
    Ok(TrialOutcome {
        trial,
        records: [rc, ra],
        traces: [tc, ta],
    })
}

/// Runs every trial (in parallel, each on its own `(seed, trial)` stream),
/// then fits KL-at-checkpoint against delta per model and checkpoint and
/// builds the percentile curves. Writes the output files when
/// `config.output_dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let prior = PriorSampler::from_config(&config.prior)?;

    let outcomes: Vec<(usize, Result<TrialOutcome>)> = (0..config.trials)
        .into_par_iter()
        .map(|trial| (trial, run_trial(config, &prior, trial)))
        .collect();

    let mut records = Vec::with_capacity(2 * config.trials);
    let mut traces = Vec::with_capacity(2 * config.trials);
    let mut failures = Vec::new();
    for (trial, outcome) in outcomes {
        match outcome {
            Ok(TrialOutcome { trial: t, records: r, traces: tr }) => {
                debug_assert_eq!(t, trial);
                records.extend(r);
                traces.extend(tr);
            }
            Err(e) => failures.push(TrialFailure {
                trial,
                message: e.to_string(),
            }),
        }
    }
    if config.trials > 0 && failures.len() as f64 > MAX_FAILURE_FRACTION * config.trials as f64 {
        return Err(Error::Experiment(format!(
            "{} of {} trials diverged (first: trial {}: {})",
            failures.len(),
            config.trials,
            failures[0].trial,
            failures[0].message
        )));
    }

    let steps: Vec<usize> = config.adaptation.recorded_steps().collect();
    let curves = curve_summary(&steps, &traces)?;
    let regressions = regressions(&config.checkpoints, &records);
    let result = ExperimentResult {
        config: config.clone(),
        steps,
        records,
        traces,
        failures,
        curves,
        regressions,
    };
    if let Some(dir) = &config.output_dir {
        write_outputs(&result, dir)?;
    }
    Ok(result)
}

fn curve_summary(steps: &[usize], traces: &[TrialTrace]) -> Result<CurveSummary> {
    let mut summary = CurveSummary::default();
    for tag in ModelTag::ALL {
        let rows: Vec<&TrialTrace> = traces.iter().filter(|t| t.model == tag).collect();
        if rows.is_empty() {
            continue;
        }
        let points = steps
            .iter()
            .enumerate()
            .map(|(i, &step)| {
                let column: Vec<f64> = rows.iter().map(|t| t.kl[i]).collect();
                let q = percentiles(&column, &[50.0, 5.0, 95.0])?;
                Ok(CurvePoint {
                    step,
                    median: q[0],
                    p5: q[1],
                    p95: q[2],
                    mean: column.iter().sum::<f64>() / column.len() as f64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        match tag {
            ModelTag::Causal => summary.causal = points,
            ModelTag::AntiCausal => summary.anticausal = points,
        }
    }
    Ok(summary)
}

fn regressions(checkpoints: &[usize], records: &[TrialRecord]) -> Vec<RegressionEntry> {
    let mut out = Vec::new();
    for tag in ModelTag::ALL {
        for &checkpoint in checkpoints {
            let points: Vec<(f64, f64)> = records
                .iter()
                .filter(|r| r.model == tag)
                .filter_map(|r| r.kl_at(checkpoint).map(|kl| (r.delta, kl)))
                .collect();
            out.push(RegressionEntry {
                model: tag,
                checkpoint,
                stats: least_squares(&points).ok(),
            });
        }
    }
    out
}
