//! Acceptance checks for the command-line surface.
//!
//! The headline criterion here is determinism: rerunning fit, optimize, and
//! benchmark with identical inputs and seeds must produce byte-identical
//! primary outputs, including under worker pools of 1, 2, and 8 threads.
//! Reruns write into sibling directories using the same output basenames, so
//! the embedded manifest references (names, never paths or timestamps) are
//! identical and a plain byte comparison is meaningful.
//!
//! The remaining tests pin the command-family contract: the benchmark report
//! must match the in-process demonstration loop byte for byte, a noise-free
//! log must fit essentially exactly, the zero-transfer consistency check must
//! pass, and invalid logs must fail with the offending run named.

use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use climb_cli::commands::{benchmark_config, manifest_name};
use climb_cli::formats::{
    plot_csv, report_to_file, to_json, AllocationFile, ConfigFile, ModelFile,
};
use climb_core::synth::end_to_end;
use climb_core::{make_proportion, ClimbModel, LanguageSet, MonoScalingParams, TransferParams};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_climb")
}

/// Runs the binary with a scrubbed seed environment and asserts success.
fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(bin())
        .args(args)
        .current_dir(dir)
        .env_remove("CLIMB_SEED")
        .output()
        .expect("binary must spawn");
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(bin())
        .args(args)
        .current_dir(dir)
        .env_remove("CLIMB_SEED")
        .output()
        .expect("binary must spawn");
    assert!(
        !out.status.success(),
        "command {:?} unexpectedly succeeded",
        args
    );
    out
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const WORLD_SPEC: &str = r#"{
  "sample": { "languages": 3, "preset": "floor_safe" },
  "design": { "budgets": [500000000, 2000000000, 6000000000, 20000000000] },
  "noise_sigma": 0.01
}"#;

/// Variant directories for the determinism sweep: two plain reruns plus
/// worker pools of 1, 2, and 8 threads.
const VARIANTS: [(&str, Option<&str>); 5] = [
    ("rerun1", None),
    ("rerun2", None),
    ("w1", Some("1")),
    ("w2", Some("2")),
    ("w8", Some("8")),
];

fn variant_args<'a>(base: &[&'a str], workers: Option<&'a str>) -> Vec<&'a str> {
    let mut args: Vec<&str> = Vec::new();
    if let Some(n) = workers {
        args.push("--workers");
        args.push(n);
    }
    args.extend_from_slice(base);
    args
}

/// Determinism of the fit, optimize, and benchmark commands: identical
/// inputs and seeds yield byte-identical primary outputs across reruns and
/// worker counts 1, 2, and 8. Simulate is swept as well since every other
/// command consumes its output.
#[test]
fn c9_command_determinism_across_reruns_and_worker_counts() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    write(&root.join("world.json"), WORLD_SPEC);
    for (name, _) in VARIANTS {
        std::fs::create_dir(root.join(name)).unwrap();
    }

    let file_sets: Vec<(Vec<&str>, Vec<&str>)> = vec![
        (
            vec![
                "simulate",
                "--input",
                "../world.json",
                "--output",
                "records.csv",
                "--seed",
                "42",
            ],
            vec!["records.csv", "records.world.json"],
        ),
        (
            vec![
                "fit",
                "--input",
                "../rerun1/records.csv",
                "--output",
                "model.json",
            ],
            vec!["model.json"],
        ),
        (
            vec![
                "optimize",
                "--model",
                "../rerun1/model.json",
                "--budget",
                "2B",
                "--seed",
                "42",
                "--output",
                "alloc.json",
            ],
            vec!["alloc.json"],
        ),
        (
            vec![
                "benchmark",
                "--seed",
                "42",
                "--output",
                "report.json",
            ],
            vec!["report.json", "report.plot.csv"],
        ),
    ];

    for (base_args, outputs) in &file_sets {
        for (variant, workers) in VARIANTS {
            run_ok(&root.join(variant), &variant_args(base_args, workers));
        }
        for produced in outputs {
            let reference = read(&root.join("rerun1").join(produced));
            assert!(!reference.is_empty(), "{produced} must not be empty");
            for (variant, _) in &VARIANTS[1..] {
                let other = read(&root.join(variant).join(produced));
                assert_eq!(
                    reference, other,
                    "{} differs between rerun1 and {variant} for {:?}",
                    produced, base_args[0]
                );
            }
        }
    }

    let elapsed = started.elapsed();
    println!("[acceptance] C9 command-determinism: PASS ({elapsed:.2?})");
    assert!(
        elapsed <= Duration::from_secs(120),
        "C9 exceeded its runtime budget: {elapsed:?}"
    );
}

/// The benchmark command's report and plot files must match the in-process
/// demonstration loop byte for byte when run with the same seed and defaults.
#[test]
fn benchmark_report_matches_the_in_process_loop_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    run_ok(
        root,
        &["benchmark", "--seed", "42", "--output", "report.json"],
    );
    let report_bytes = read(&root.join("report.json"));
    let plot_bytes = read(&root.join("report.plot.csv"));

    let config = benchmark_config(&ConfigFile::default(), 42, 1_000_000_000, 0.01, 100, None, None)
        .unwrap();
    let outcome = end_to_end(&config).unwrap();
    let manifest = manifest_name(Path::new("report.json"));
    let expected_report = to_json(&report_to_file(
        &outcome.report,
        42,
        0.01,
        Some(manifest.clone()),
    ));
    assert_eq!(
        String::from_utf8(report_bytes).unwrap(),
        expected_report,
        "report bytes must equal the in-process loop's serialization"
    );

    let optimized = outcome
        .report
        .strategies
        .iter()
        .find(|s| s.name == "optimized")
        .unwrap();
    let mixture = make_proportion(&optimized.mixture).unwrap();
    let expected_plot =
        plot_csv(&outcome.world, &mixture, 1_000_000_000, 100, Some(&manifest)).unwrap();
    assert_eq!(String::from_utf8(plot_bytes).unwrap(), expected_plot);
}

/// Fitting a noise-free synthetic log must be essentially exact: every
/// pipeline stage reports a coefficient of determination of 1 up to 1e-9.
#[test]
fn fit_on_a_noise_free_log_reports_near_perfect_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    write(
        &root.join("world.json"),
        r#"{
  "sample": { "languages": 3, "preset": "floor_safe" },
  "design": { "budgets": [500000000, 2000000000, 6000000000, 20000000000] },
  "noise_sigma": 0.0
}"#,
    );
    run_ok(
        root,
        &[
            "simulate",
            "--input",
            "world.json",
            "--output",
            "records.csv",
            "--seed",
            "7",
        ],
    );
    run_ok(
        root,
        &["fit", "--input", "records.csv", "--output", "model.json"],
    );
    let model: ModelFile =
        serde_json::from_slice(&read(&root.join("model.json"))).unwrap();
    let meta = model.fit_meta.expect("fitted model must carry fit_meta");
    assert!(!meta.stages.is_empty());
    for stage in &meta.stages {
        assert!(
            stage.r_squared >= 1.0 - 1e-9,
            "stage {} for {} reports R^2 {}",
            stage.stage,
            stage.language,
            stage.r_squared
        );
    }
}

/// On a zero-transfer model the optimizer must land on the closed-form
/// direction; the command prints a consistency check and the emitted
/// allocation agrees coordinatewise within 1e-6.
#[test]
fn optimize_on_a_zero_transfer_model_passes_the_printed_check() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let model = ClimbModel::new(
        LanguageSet::new(vec!["de", "en", "fr"]).unwrap(),
        vec![
            MonoScalingParams::new(350.0, 0.25, 1.5).unwrap(),
            MonoScalingParams::new(500.0, 0.28, 1.3).unwrap(),
            MonoScalingParams::new(420.0, 0.22, 1.9).unwrap(),
        ],
        TransferParams::new(
            vec![vec![0.0; 3]; 3],
            vec![vec![0.0; 3]; 3],
            vec![1.0, 1.0, 1.0],
        )
        .unwrap(),
    )
    .unwrap();
    let file = climb_cli::formats::model_to_file(&model, None, None);
    write(&root.join("zero.json"), &to_json(&file));

    let out = run_ok(
        root,
        &[
            "optimize",
            "--model",
            "zero.json",
            "--budget",
            "5B",
            "--seed",
            "3",
            "--output",
            "alloc.json",
        ],
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("[check] zero transfer") && stderr.contains("PASS"),
        "missing passing zero-transfer check in stderr:\n{stderr}"
    );
    let alloc: AllocationFile =
        serde_json::from_slice(&read(&root.join("alloc.json"))).unwrap();
    for (a, p) in alloc.allocation.iter().zip(&alloc.direction) {
        assert!(
            (a - p).abs() <= 1e-6,
            "allocation {a} deviates from direction {p}"
        );
    }
}

/// A log whose proportions sum to 1.2 must fail with a nonzero exit and an
/// error that names the offending run.
#[test]
fn fit_rejects_a_broken_simplex_and_names_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    write(
        &root.join("bad.csv"),
        "run_id,token_budget,step_fraction,language,proportion,val_loss\n\
         runX,1000000,1,de,0.6,2.5\n\
         runX,1000000,1,en,0.6,2.4\n",
    );
    let out = run_err(
        root,
        &["fit", "--input", "bad.csv", "--output", "model.json"],
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("runX") && stderr.contains("1.2"),
        "error must name the run and the bad sum:\n{stderr}"
    );
    assert!(
        !root.join("model.json").exists(),
        "no model may be written on failure"
    );
}

/// A header-only log parses as an empty list; fitting it fails cleanly with
/// a message about missing data rather than a parse error.
#[test]
fn fit_on_a_header_only_log_fails_with_a_clear_message() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    write(
        &root.join("empty.csv"),
        "run_id,token_budget,step_fraction,language,proportion,val_loss\n",
    );
    let out = run_err(
        root,
        &["fit", "--input", "empty.csv", "--output", "model.json"],
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("no data rows") || stderr.contains("no usable records"),
        "expected a missing-data message:\n{stderr}"
    );
}

/// The CLIMB_SEED environment variable substitutes for --seed, and an
/// explicit flag takes precedence over it.
#[test]
fn seed_resolution_prefers_flag_over_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    for name in ["env", "flag", "plain"] {
        std::fs::create_dir(root.join(name)).unwrap();
    }
    let out_env = Command::new(bin())
        .args(["benchmark", "--output", "report.json"])
        .current_dir(root.join("env"))
        .env("CLIMB_SEED", "42")
        .output()
        .unwrap();
    assert!(
        out_env.status.success(),
        "{}",
        String::from_utf8_lossy(&out_env.stderr)
    );
    let out_flag = Command::new(bin())
        .args(["benchmark", "--seed", "42", "--output", "report.json"])
        .current_dir(root.join("flag"))
        .env("CLIMB_SEED", "7777")
        .output()
        .unwrap();
    assert!(
        out_flag.status.success(),
        "{}",
        String::from_utf8_lossy(&out_flag.stderr)
    );
    run_ok(
        &root.join("plain"),
        &["benchmark", "--seed", "42", "--output", "report.json"],
    );

    let reference = read(&root.join("plain").join("report.json"));
    assert_eq!(
        reference,
        read(&root.join("env").join("report.json")),
        "CLIMB_SEED=42 must reproduce --seed 42"
    );
    assert_eq!(
        reference,
        read(&root.join("flag").join("report.json")),
        "--seed 42 must override CLIMB_SEED=7777"
    );
}
