mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use causal_adapt::harness::{percentiles, run_experiment, ExperimentConfig};
use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causal-adapt"))
        .args(args)
        .env_remove("CAUSAL_ADAPT_THREADS")
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

fn small_run(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "synthetic", "--k", "3", "--trials", "12", "--steps", "40", "--intervention", "effect", "--seed", "5",
        "--out", dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    bin(&args)
}

const RUN_FILES: [&str; 6] = ["scatter_10.csv", "scatter_30.csv", "curves.csv", "curves_mean.csv", "stats.json", "config.json"];

#[test]
fn no_arguments_prints_usage_and_fails() {
    let out = bin(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn usage_errors_exit_one_and_name_the_flag() {
    for (args, flag) in [
        (vec!["synthetic", "--nope"], "--nope"),
        (vec!["empirical"], "--counts"),
        (vec!["synthetic", "--intervention", "colour"], "--intervention"),
        (vec!["empirical", "--counts", "/no/such/file.csv"], "--counts"),
        (vec!["verify", "--k", "0", "--out", "/tmp/unused"], "--k"),
        (vec!["synthetic", "--k", "2", "--steps", "0"], "--steps"),
    ] {
        let out = bin(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(flag), "{args:?}");
    }
}

#[test]
fn verify_reports_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["verify", "--k", "5", "--trials", "1000", "--seed", "7", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(dir.path(), "verify.json");
    let reports = report["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 4);
    for r in reports {
        assert_eq!(r["trials"], 1000);
        assert_eq!(r["violations"], 0, "{}", r["kind"]);
    }
    let text = read(dir.path(), "report.txt");
    for kind in ["bias", "cause", "bias-cause", "effect"] {
        assert!(text.lines().any(|l| l.starts_with(kind)));
    }
    assert!(dir.path().join("config.json").exists());
}

#[test]
fn synthetic_run_writes_the_file_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in RUN_FILES {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let scatter = read(dir.path(), "scatter_10.csv");
    let mut lines = scatter.lines();
    assert_eq!(lines.next(), Some("trial,model,delta,kl"));
    assert_eq!(lines.count(), 24);
    let curves = read(dir.path(), "curves.csv");
    assert!(curves.starts_with("step,model,kl_median,kl_p5,kl_p95\n"));
    assert_eq!(curves.lines().count(), 1 + 2 * 40);
    let second = curves.lines().nth(1).unwrap();
    assert!(second.starts_with("1,causal,"));
    // 17 significant digits
    let field = second.split(',').nth(2).unwrap();
    assert_eq!(field.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
}

#[test]
fn stats_agree_with_the_scatter_files() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(small_run(dir.path(), &[]).status.code(), Some(0));
    let stats = json(dir.path(), "stats.json");
    assert_eq!(stats["trials_completed"], 12);
    let curves = read(dir.path(), "curves.csv");
    for cp in [10, 30] {
        let scatter = read(dir.path(), &format!("scatter_{cp}.csv"));
        for model in ["causal", "anticausal"] {
            let points: Vec<(f64, f64)> = scatter
                .lines()
                .skip(1)
                .filter(|l| l.split(',').nth(1) == Some(model))
                .map(|l| {
                    let f: Vec<&str> = l.split(',').collect();
                    (f[2].parse().unwrap(), f[3].parse().unwrap())
                })
                .collect();
            let (a, b, r2) = common::ols(&points);
            let s = &stats["regressions"][model][cp.to_string()];
            for (got, want) in [(&s["a"], a), (&s["b"], b), (&s["r2"], r2)] {
                let got = got.as_f64().unwrap();
                assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()), "{model}@{cp}");
            }
            let kls: Vec<f64> = points.iter().map(|p| p.1).collect();
            let median = percentiles(&kls, &[50.0]).unwrap()[0];
            let row = curves
                .lines()
                .find(|l| l.starts_with(&format!("{cp},{model},")))
                .unwrap();
            let listed: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
            assert_eq!(listed, median);
        }
    }
}

#[test]
fn same_arguments_give_identical_bytes_across_thread_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(small_run(a.path(), &["--threads", "1"]).status.code(), Some(0));
    assert_eq!(small_run(b.path(), &["--threads", "4"]).status.code(), Some(0));
    for f in RUN_FILES {
        let (x, y) = (read(a.path(), f), read(b.path(), f));
        if f == "stats.json" || f == "config.json" {
            // these echo the output directory
            let strip = |s: &str| s.lines().filter(|l| !l.contains("output_dir")).collect::<Vec<_>>().join("\n");
            assert_eq!(strip(&x), strip(&y), "{f}");
        } else {
            assert_eq!(x, y, "{f}");
        }
    }
}

#[test]
fn config_echo_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(small_run(dir.path(), &["--average", "--checkpoints", "8,24"]).status.code(), Some(0));
    let echo = json(dir.path(), "config.json");
    let mut config: ExperimentConfig = serde_json::from_value(echo["experiment"].clone()).unwrap();
    let replay = tempfile::tempdir().unwrap();
    config.output_dir = Some(replay.path().to_path_buf());
    run_experiment(&config).unwrap();
    for f in ["scatter_8.csv", "scatter_24.csv", "curves.csv"] {
        assert_eq!(read(dir.path(), f), read(replay.path(), f), "{f}");
    }
}

#[test]
fn adapt_trace_matches_trial_zero_of_an_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&[
        "adapt", "--k", "3", "--steps", "40", "--intervention", "effect", "--seed", "5", "--average", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = read(dir.path(), "trace.csv");
    let mut rows = trace.lines();
    assert_eq!(rows.next(), Some("step,model,kl,kl_averaged"));
    let rows: Vec<Vec<&str>> = rows.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2 * 41);
    assert!(rows.iter().filter(|r| r[0] != "0").all(|r| !r[3].is_empty()));
    let summary = json(dir.path(), "summary.json");
    assert!(summary["causal"]["delta"].as_f64().unwrap() > 0.0);

    let exp = tempfile::tempdir().unwrap();
    assert_eq!(small_run(exp.path(), &[]).status.code(), Some(0));
    let scatter = read(exp.path(), "scatter_30.csv");
    for model in ["causal", "anticausal"] {
        let from_trace = rows.iter().find(|r| r[0] == "30" && r[1] == model).unwrap()[2];
        let from_exp = scatter
            .lines()
            .find(|l| l.starts_with(&format!("0,{model},")))
            .unwrap()
            .split(',')
            .nth(3)
            .unwrap();
        assert_eq!(from_trace, from_exp, "{model}");
    }
}

#[test]
fn empirical_run_from_a_count_file() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    let mut text = String::from("a,x,y,count\n");
    for a in 0..2 {
        for x in 0..2 {
            for y in 0..2 {
                text.push_str(&format!("{a},{x},{y},{}\n", 1 + a + 2 * x + 3 * y));
            }
        }
    }
    fs::write(&counts, &text).unwrap();
    let out_dir = dir.path().join("run");
    let out = bin(&[
        "empirical", "--counts", counts.to_str().unwrap(), "--trials", "6", "--steps", "20", "--intervention", "cause",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let echo = json(&out_dir, "config.json");
    assert_eq!(echo["experiment"]["k"], 2);

    // a zero cell without smoothing is rejected
    fs::write(&counts, text.replace("0,0,0,1\n", "0,0,0,0\n")).unwrap();
    let out = bin(&["empirical", "--counts", counts.to_str().unwrap(), "--epsilon", "0", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--counts"));
}
