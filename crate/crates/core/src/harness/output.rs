use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use super::ExperimentResult;
use crate::categorical::GENERATOR_NAME;
use crate::error::{Error, Result};
use crate::scm::ModelTag;
use crate::theory::PropositionReport;

/// Floats in CSV output: 17 significant digits, scientific notation.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputFiles {
    pub scatter: Vec<PathBuf>,
    pub curves: PathBuf,
    pub curves_mean: PathBuf,
    pub stats: PathBuf,
    pub config: PathBuf,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `scatter_<checkpoint>.csv`, `curves.csv`, `curves_mean.csv`,
/// `stats.json` and `config.json` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<OutputFiles> {
    ensure_dir(dir)?;
    let mut scatter = Vec::new();
    for &checkpoint in &result.config.checkpoints {
        let mut csv = String::from("trial,model,delta,kl\n");
        for r in &result.records {
            if let Some(kl) = r.kl_at(checkpoint) {
                let _ = writeln!(csv, "{},{},{},{}", r.trial, r.model, format_float(r.delta), format_float(kl));
            }
        }
        let path = dir.join(format!("scatter_{checkpoint}.csv"));
        write(&path, &csv)?;
        scatter.push(path);
    }

    let mut curves = String::from("step,model,kl_median,kl_p5,kl_p95\n");
    let mut means = String::from("step,model,kl_mean\n");
    for i in 0..result.steps.len() {
        for tag in ModelTag::ALL {
            if let Some(p) = result.curves.model(tag).get(i) {
                let _ = writeln!(
                    curves,
                    "{},{},{},{},{}",
                    p.step,
                    tag,
                    format_float(p.median),
                    format_float(p.p5),
                    format_float(p.p95)
                );
                let _ = writeln!(means, "{},{},{}", p.step, tag, format_float(p.mean));
            }
        }
    }
    let curves_path = dir.join("curves.csv");
    write(&curves_path, &curves)?;
    let means_path = dir.join("curves_mean.csv");
    write(&means_path, &means)?;

    let mut per_model = Map::new();
    for tag in ModelTag::ALL {
        let mut per_checkpoint = Map::new();
        for &checkpoint in &result.config.checkpoints {
            let value = match result.regression(tag, checkpoint) {
                Some(s) => json!({ "a": s.a, "b": s.b, "r2": s.r2 }),
                None => json!({ "a": null, "b": null, "r2": null }),
            };
            per_checkpoint.insert(checkpoint.to_string(), value);
        }
        per_model.insert(tag.to_string(), Value::Object(per_checkpoint));
    }
    let config_echo = serde_json::to_value(&result.config).expect("config serializes");
    let stats = json!({
        "generator": GENERATOR_NAME,
        "seed": result.config.seed,
        "config": config_echo,
        "trials_completed": result.records.len() / 2,
        "failures": result.failures,
        "regressions": Value::Object(per_model),
    });
    let stats_path = dir.join("stats.json");
    write(&stats_path, &pretty(&stats))?;
    let config_path = dir.join("config.json");
    write(
        &config_path,
        &pretty(&json!({ "generator": GENERATOR_NAME, "experiment": config_echo })),
    )?;

    Ok(OutputFiles {
        scatter,
        curves: curves_path,
        curves_mean: means_path,
        stats: stats_path,
        config: config_path,
    })
}

pub(crate) fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

/// Plain-text table of proposition checks, one line per report.
pub fn format_verify_report(reports: &[PropositionReport]) -> String {
    let mut out = String::from(
        "kind        k  trials  violations  max_violation            closed_form_max_residual  anticausal_closer  causal_closer\n",
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<10} {:>2} {:>7} {:>11}  {:<24} {:<25} {:>17} {:>14}{}",
            r.kind.as_str(),
            r.k,
            r.trials,
            r.violations,
            format_float(r.max_violation),
            format_float(r.closed_form_max_residual),
            r.anticausal_closer,
            r.causal_closer,
            if r.formula_discrepancy { "  FORMULA-DISCREPANCY" } else { "" }
        );
    }
    out
}

/// Writes `report.txt` and `verify.json`.
pub fn write_verify_outputs(reports: &[PropositionReport], config: &Value, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write(&dir.join("report.txt"), &format_verify_report(reports))?;
    write(
        &dir.join("verify.json"),
        &pretty(&json!({ "generator": GENERATOR_NAME, "config": config, "reports": reports })),
    )?;
    write(&dir.join("config.json"), &pretty(&json!({ "generator": GENERATOR_NAME, "verify": config })))
}
