//! Implementations of the five subcommands. Primary data goes to the output
//! file (or standard output); everything human-oriented goes to stderr. Each
//! file-producing command also writes a run manifest next to its primary
//! output; the primary artifacts reference the manifest by name but never
//! embed timestamps, so identical inputs yield identical primary bytes.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use climb_core::alloc::{optimal_direction, optimize_allocation, OptimizerConfig};
use climb_core::fit::{fit_pipeline, FitConfig, StageReport};
use climb_core::scaling::{predicted_loss, predicted_ratios, weighted_objective};
use climb_core::synth::{
    end_to_end, sample_world, simulate_experiments, DesignSpec, EndToEndConfig, WorldRanges,
};
use climb_core::{make_proportion, ClimbModel, ImportanceWeights, LanguageSet};

use crate::formats::{
    self, allocation_to_file, emit_records, ingest_records, model_from_file, model_to_file,
    plot_csv, ranges_preset, report_to_file, to_json, ConfigFile, FitMeta, ModelFile, RunManifest,
    StageRow, WorldSpecFile,
};

/// Fallback seed when neither flag, environment, nor file provides one.
pub const DEFAULT_SEED: u64 = 42;

/// Resolves the effective seed: `--seed` flag, then the `CLIMB_SEED`
/// environment variable, then a seed from the input file, then 42.
pub fn resolve_seed(flag: Option<u64>, file_seed: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("CLIMB_SEED") {
        Ok(raw) => {
            let parsed = raw
                .parse::<u64>()
                .with_context(|| format!("CLIMB_SEED must be an unsigned integer, got {raw:?}"))?;
            Ok(parsed)
        }
        Err(_) => Ok(file_seed.unwrap_or(DEFAULT_SEED)),
    }
}

/// Parses a token budget, accepting K/M/B/T suffixes (powers of 1000).
pub fn parse_budget(raw: &str) -> Result<u64> {
    let text = raw.trim();
    if let Ok(plain) = text.parse::<u64>() {
        if plain == 0 {
            bail!("token budget must be positive");
        }
        return Ok(plain);
    }
    let (digits, multiplier) = match text.chars().last() {
        Some('k') | Some('K') => (&text[..text.len() - 1], 1e3),
        Some('m') | Some('M') => (&text[..text.len() - 1], 1e6),
        Some('b') | Some('B') => (&text[..text.len() - 1], 1e9),
        Some('t') | Some('T') => (&text[..text.len() - 1], 1e12),
        _ => (text, 1.0),
    };
    let value: f64 = digits
        .parse()
        .with_context(|| format!("cannot parse token budget {raw:?}"))?;
    let scaled = value * multiplier;
    if !(scaled.is_finite() && scaled >= 1.0 && scaled <= u64::MAX as f64) {
        bail!("token budget {raw:?} is out of range");
    }
    Ok(scaled.round() as u64)
}

/// Parses `code=value,code=value` assignment lists.
pub fn parse_assignments(raw: &str) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let piece = part.trim();
        if piece.is_empty() {
            continue;
        }
        let (code, value) = piece
            .split_once('=')
            .with_context(|| format!("expected code=value, got {piece:?}"))?;
        if code.is_empty() {
            bail!("empty language code in {piece:?}");
        }
        let parsed: f64 = value
            .parse()
            .with_context(|| format!("cannot parse value in {piece:?}"))?;
        out.push((code.to_string(), parsed));
    }
    if out.is_empty() {
        bail!("no code=value assignments in {raw:?}");
    }
    Ok(out)
}

/// Maps assignments onto the model's language order; absent codes take
/// `default`, unknown codes are rejected.
fn keyed_vector(
    languages: &LanguageSet,
    pairs: &[(String, f64)],
    default: f64,
    what: &str,
) -> Result<Vec<f64>> {
    let mut values = vec![default; languages.len()];
    let mut seen = vec![false; languages.len()];
    for (code, value) in pairs {
        let idx = languages
            .require(code)
            .with_context(|| format!("{what} names a language not in the model"))?;
        if seen[idx] {
            bail!("{what} lists {code} twice");
        }
        seen[idx] = true;
        values[idx] = *value;
    }
    Ok(values)
}

pub fn resolve_fit_config(config: &ConfigFile, delta_flag: Option<f64>) -> FitConfig<f64> {
    let mut fit = FitConfig::default();
    if let Some(overrides) = &config.fit {
        overrides.apply(&mut fit);
    }
    if let Some(delta) = delta_flag {
        fit.delta = delta;
    }
    fit
}

pub fn resolve_optimizer_config(
    config: &ConfigFile,
    rho_flag: Option<f64>,
    seed_flag: Option<u64>,
) -> Result<OptimizerConfig<f64>> {
    let mut opt = OptimizerConfig::default();
    if let Some(overrides) = &config.optimizer {
        overrides.apply(&mut opt);
    }
    if let Some(rho) = rho_flag {
        opt.rho = rho;
    }
    let config_seed = config.optimizer.as_ref().and_then(|o| o.seed);
    if config_seed.is_none() {
        opt.seed = resolve_seed(seed_flag, Some(opt.seed))?;
    } else if let Some(s) = seed_flag {
        opt.seed = s;
    }
    Ok(opt)
}

fn fit_config_value(fit: &FitConfig<f64>) -> Value {
    json!({
        "delta": fit.delta,
        "max_iterations": fit.max_iterations,
        "beta_grid": fit.beta_grid,
        "e_grid_fractions": fit.e_grid_fractions,
        "eta_bounds": [fit.eta_bounds.0, fit.eta_bounds.1],
        "min_tail_fraction": fit.min_tail_fraction,
    })
}

fn optimizer_config_value(opt: &OptimizerConfig<f64>) -> Value {
    json!({
        "rho": opt.rho,
        "barrier_initial": opt.barrier_initial,
        "barrier_shrink": opt.barrier_shrink,
        "trust_radius_initial": opt.trust_radius_initial,
        "max_outer": opt.max_outer,
        "max_inner": opt.max_inner,
        "tolerance": opt.tolerance,
        "n_random_starts": opt.n_random_starts,
        "seed": opt.seed,
        "feasibility_margin": opt.feasibility_margin,
    })
}

fn ranges_value(r: &WorldRanges) -> Value {
    json!({
        "b": [r.b.0, r.b.1],
        "beta": [r.beta.0, r.beta.1],
        "e": [r.e.0, r.e.1],
        "transfer_b": [r.transfer_b.0, r.transfer_b.1],
        "transfer_k": [r.transfer_k.0, r.transfer_k.1],
        "eta": [r.eta.0, r.eta.1],
        "uniform_source_transfer": r.uniform_source_transfer,
    })
}

fn design_value(d: &DesignSpec) -> Value {
    json!({
        "budgets": d.budgets,
        "target_shares": d.target_shares,
        "fractions": d.fractions,
    })
}

/// Name of the manifest sibling for a primary output file.
pub fn manifest_name(output: &Path) -> String {
    let base = output
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".to_string());
    format!("{base}.manifest.json")
}

fn manifest_path(output: &Path) -> PathBuf {
    output.with_file_name(manifest_name(output))
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_file(path: &Path, bytes: &str) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

#[allow(clippy::too_many_arguments)]
fn write_manifest(
    command: &str,
    argv: &[String],
    inputs: &[&Path],
    outputs: &[&Path],
    config: Value,
    primary_output: &Path,
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        argv: argv.to_vec(),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        config,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp_unix: now_unix(),
    };
    write_file(&manifest_path(primary_output), &to_json(&manifest))
}

fn load_model(path: &Path) -> Result<ClimbModel<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read model file {}", path.display()))?;
    let file: ModelFile = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a valid model file", path.display()))?;
    model_from_file(&file).with_context(|| format!("invalid model in {}", path.display()))
}

fn print_stage_table(stages: &[StageReport<f64>]) {
    eprintln!(
        "{:<14} {:<10} {:>6} {:>12} {:>12} {:>10} {:>7}",
        "stage", "language", "points", "R^2", "huber", "converged", "eta-id"
    );
    for s in stages {
        let eta_id = if s.stage == "alpha" {
            if s.eta_identifiable { "yes" } else { "no" }
        } else {
            "-"
        };
        eprintln!(
            "{:<14} {:<10} {:>6} {:>12.8} {:>12.3e} {:>10} {:>7}",
            s.stage,
            s.language,
            s.n_points,
            s.r_squared,
            s.huber,
            if s.converged { "yes" } else { "no" },
            eta_id
        );
    }
}

pub fn cmd_fit(
    input: &Path,
    output: &Path,
    fit_config: FitConfig<f64>,
    argv: &[String],
) -> Result<()> {
    let ingested = ingest_records(input)
        .with_context(|| format!("cannot ingest experiment log {}", input.display()))?;
    let languages = ingested
        .language_set()
        .with_context(|| format!("{} has no usable records", input.display()))?;
    eprintln!(
        "ingested {} records, {} languages",
        ingested.records.len(),
        languages.len()
    );
    let fit = fit_pipeline(&ingested.records, &languages, &fit_config)
        .context("fitting pipeline failed")?;
    print_stage_table(&fit.stages);
    let meta = FitMeta {
        n_records: ingested.records.len(),
        huber_delta: fit_config.delta,
        stages: fit.stages.iter().map(StageRow::from).collect(),
    };
    let file = model_to_file(&fit.model, Some(meta), Some(manifest_name(output)));
    write_file(output, &to_json(&file))?;
    write_manifest(
        "fit",
        argv,
        &[input],
        &[output],
        json!({ "fit": fit_config_value(&fit_config) }),
        output,
    )?;
    eprintln!("wrote fitted model to {}", output.display());
    Ok(())
}

pub fn cmd_predict(
    model_path: &Path,
    mixture_spec: &str,
    budget: u64,
    weights_spec: Option<&str>,
    output: Option<&Path>,
    argv: &[String],
) -> Result<()> {
    let model = load_model(model_path)?;
    let languages = model.languages().clone();
    let mixture_pairs = parse_assignments(mixture_spec)?;
    let shares = keyed_vector(&languages, &mixture_pairs, 0.0, "mixture")?;
    let mixture = make_proportion(&shares).context("mixture must lie on the simplex")?;
    let weight_values = match weights_spec {
        Some(raw) => keyed_vector(&languages, &parse_assignments(raw)?, 1.0, "weights")?,
        None => vec![1.0; languages.len()],
    };
    let weights = ImportanceWeights::new(weight_values)?;
    let tokens = budget as f64;
    let ratios = predicted_ratios(&model, &mixture, tokens)?;
    let losses: Vec<f64> = (0..model.m())
        .map(|i| predicted_loss(&model, &mixture, i, tokens))
        .collect::<Result<_, _>>()
        .context("a language's effective ratio is not positive at this mixture")?;
    let objective = weighted_objective(&model, &mixture, &weights, tokens)?;
    let file = formats::PredictionFile {
        languages: languages.codes().to_vec(),
        token_budget: budget,
        mixture: mixture.values().to_vec(),
        effective_ratios: ratios,
        predicted_losses: losses,
        weights: weights.values().to_vec(),
        weighted_objective: objective,
        manifest: output.map(manifest_name),
    };
    match output {
        Some(path) => {
            write_file(path, &to_json(&file))?;
            write_manifest(
                "predict",
                argv,
                &[model_path],
                &[path],
                json!({ "budget": budget }),
                path,
            )?;
            eprintln!("wrote prediction to {}", path.display());
        }
        None => print!("{}", to_json(&file)),
    }
    Ok(())
}

fn transfer_is_zero(model: &ClimbModel<f64>) -> bool {
    let tr = model.transfer();
    let m = model.m();
    (0..m).all(|i| (0..m).all(|j| tr.b(i, j) == 0.0 && tr.k(i, j) == 0.0))
}

pub fn cmd_optimize(
    model_path: &Path,
    budget: u64,
    weights_spec: Option<&str>,
    optimizer: OptimizerConfig<f64>,
    output: Option<&Path>,
    argv: &[String],
) -> Result<()> {
    let model = load_model(model_path)?;
    let languages = model.languages().clone();
    let weight_values = match weights_spec {
        Some(raw) => keyed_vector(&languages, &parse_assignments(raw)?, 1.0, "weights")?,
        None => vec![1.0; languages.len()],
    };
    let weights = ImportanceWeights::new(weight_values)?;
    let result = optimize_allocation(&model, &weights, budget, &optimizer)
        .context("allocation optimization failed")?;

    if transfer_is_zero(&model) {
        let direction = optimal_direction(&model, &weights, budget as f64)?;
        let gap = result
            .allocation
            .values()
            .iter()
            .zip(direction.values())
            .map(|(a, p)| (a - p).abs())
            .fold(0.0f64, f64::max);
        if gap <= 1e-6 {
            eprintln!(
                "[check] zero transfer: allocation matches the closed-form direction \
                 (max coordinate gap {gap:.3e}) PASS"
            );
        } else {
            eprintln!(
                "[check] zero transfer: allocation deviates from the closed-form direction \
                 (max coordinate gap {gap:.3e}) FAIL"
            );
            bail!("zero-transfer reduction check failed");
        }
    }

    eprintln!(
        "{:<10} {:>22} {:>22} {:>22} {:>22}",
        "language", "direction", "allocation", "effective_ratio", "predicted_loss"
    );
    for i in 0..model.m() {
        eprintln!(
            "{:<10} {:>22.16} {:>22.16} {:>22.16} {:>22.16}",
            languages.code(i),
            result.direction[i],
            result.allocation.get(i),
            result.effective_ratios[i],
            result.predicted_losses[i]
        );
    }

    let file = allocation_to_file(&result, &languages, &weights, output.map(manifest_name));
    match output {
        Some(path) => {
            write_file(path, &to_json(&file))?;
            write_manifest(
                "optimize",
                argv,
                &[model_path],
                &[path],
                json!({
                    "budget": budget,
                    "optimizer": optimizer_config_value(&optimizer),
                }),
                path,
            )?;
            eprintln!("wrote allocation to {}", path.display());
        }
        None => print!("{}", to_json(&file)),
    }
    Ok(())
}

pub fn cmd_simulate(
    input: &Path,
    output: &Path,
    seed_flag: Option<u64>,
    noise_flag: Option<f64>,
    argv: &[String],
) -> Result<()> {
    let text = std::fs::read_to_string(input)
        .with_context(|| format!("cannot read world spec {}", input.display()))?;
    let spec: WorldSpecFile = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a valid world spec", input.display()))?;
    let seed = resolve_seed(seed_flag, spec.seed)?;
    let noise = noise_flag.or(spec.noise_sigma).unwrap_or(0.0);
    if !(noise >= 0.0 && noise.is_finite()) {
        bail!("noise_sigma must be a nonnegative finite number, got {noise}");
    }
    let design = spec
        .design
        .clone()
        .unwrap_or_default()
        .apply(DesignSpec::default());

    let (world, sampled) = match (&spec.model, &spec.sample) {
        (Some(model_file), None) => (model_from_file(model_file)?, false),
        (None, Some(sample)) => {
            let base = match &sample.preset {
                Some(name) => ranges_preset(name)?,
                None => WorldRanges::default(),
            };
            let ranges = sample.ranges.clone().unwrap_or_default().apply(base);
            let world = sample_world(sample.languages, &ranges, seed)
                .context("cannot sample a world from these ranges")?;
            (world, true)
        }
        _ => bail!("world spec must contain exactly one of \"model\" or \"sample\""),
    };

    let records = simulate_experiments(&world, &design, noise, seed.wrapping_add(1))
        .context("simulation failed")?;
    let manifest = manifest_name(output);
    let csv = emit_records(&records, world.languages(), Some(&manifest))?;
    write_file(output, &csv)?;

    let mut outputs: Vec<PathBuf> = vec![output.to_path_buf()];
    if sampled {
        let world_path = output.with_extension("world.json");
        let world_file = model_to_file(&world, None, Some(manifest.clone()));
        write_file(&world_path, &to_json(&world_file))?;
        eprintln!("wrote ground-truth world to {}", world_path.display());
        outputs.push(world_path);
    }
    let output_refs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    write_manifest(
        "simulate",
        argv,
        &[input],
        &output_refs,
        json!({
            "seed": seed,
            "noise_sigma": noise,
            "design": design_value(&design),
        }),
        output,
    )?;
    eprintln!(
        "simulated {} records for {} languages into {}",
        records.len(),
        world.m(),
        output.display()
    );
    Ok(())
}

/// Defaults for the benchmark subcommand, exposed so tests can reproduce the
/// exact in-process configuration.
pub fn benchmark_config(
    config: &ConfigFile,
    seed: u64,
    plan_budget: u64,
    noise_sigma: f64,
    grid_resolution: u32,
    rho_flag: Option<f64>,
    weights_flag: Option<&str>,
) -> Result<EndToEndConfig<f64>> {
    let bench = config.benchmark.clone().unwrap_or_default();
    let languages = bench.languages.unwrap_or(3);
    if languages < 2 {
        bail!("benchmark needs at least 2 languages");
    }
    let base = match &bench.preset {
        Some(name) => ranges_preset(name)?,
        None => WorldRanges::floor_safe(),
    };
    let ranges = bench.ranges.clone().unwrap_or_default().apply(base);
    let design = bench
        .design
        .clone()
        .unwrap_or_default()
        .apply(DesignSpec::four_budget());
    let weights = match weights_flag {
        Some(raw) => {
            let codes: Vec<String> = (0..languages).map(|i| format!("l{i}")).collect();
            let set = LanguageSet::new(codes)?;
            keyed_vector(&set, &parse_assignments(raw)?, 1.0, "weights")?
        }
        None => bench.weights.clone().unwrap_or(vec![1.0; languages]),
    };
    if weights.len() != languages {
        bail!(
            "benchmark weights must have {languages} entries, got {}",
            weights.len()
        );
    }
    let mut fit = FitConfig::default();
    if let Some(overrides) = &config.fit {
        overrides.apply(&mut fit);
    }
    let mut optimizer = OptimizerConfig::default();
    if let Some(overrides) = &config.optimizer {
        overrides.apply(&mut optimizer);
    }
    if let Some(rho) = rho_flag {
        optimizer.rho = rho;
    }
    Ok(EndToEndConfig {
        languages,
        ranges,
        design,
        noise_sigma,
        seed,
        weights,
        plan_budget,
        grid_resolution,
        natural_counts: bench.natural_counts.clone(),
        fit,
        optimizer,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_benchmark(
    config: &ConfigFile,
    seed_flag: Option<u64>,
    budget_flag: Option<u64>,
    noise_flag: Option<f64>,
    grid_res_flag: Option<u32>,
    rho_flag: Option<f64>,
    weights_flag: Option<&str>,
    output: &Path,
    argv: &[String],
) -> Result<()> {
    let bench = config.benchmark.clone().unwrap_or_default();
    let seed = resolve_seed(seed_flag, bench.seed)?;
    let plan_budget = budget_flag
        .or(bench.plan_budget)
        .unwrap_or(1_000_000_000);
    let noise_sigma = noise_flag.or(bench.noise_sigma).unwrap_or(0.01);
    let grid_resolution = grid_res_flag.or(bench.grid_resolution).unwrap_or(100);
    let e2e = benchmark_config(
        config,
        seed,
        plan_budget,
        noise_sigma,
        grid_resolution,
        rho_flag,
        weights_flag,
    )?;
    let outcome = end_to_end(&e2e).context("benchmark loop failed")?;

    let manifest = manifest_name(output);
    let report = report_to_file(&outcome.report, seed, noise_sigma, Some(manifest.clone()));
    write_file(output, &to_json(&report))?;

    let optimized = outcome
        .report
        .strategies
        .iter()
        .find(|s| s.name == "optimized")
        .context("report is missing the optimized strategy")?;
    let mixture = make_proportion(&optimized.mixture)?;
    let plot_path = output.with_extension("plot.csv");
    let plot = plot_csv(
        &outcome.world,
        &mixture,
        plan_budget,
        grid_resolution as usize,
        Some(&manifest),
    )?;
    write_file(&plot_path, &plot)?;

    write_manifest(
        "benchmark",
        argv,
        &[],
        &[output, &plot_path],
        json!({
            "seed": seed,
            "noise_sigma": noise_sigma,
            "plan_budget": plan_budget,
            "grid_resolution": grid_resolution,
            "languages": e2e.languages,
            "ranges": ranges_value(&e2e.ranges),
            "design": design_value(&e2e.design),
            "weights": e2e.weights,
            "fit": fit_config_value(&e2e.fit),
            "optimizer": optimizer_config_value(&e2e.optimizer),
        }),
        output,
    )?;

    eprintln!(
        "world seed {seed}, {} records, oracle objective {:.6}",
        outcome.report.n_records, outcome.report.oracle_objective
    );
    eprintln!("{:<12} {:>18} {:>18}", "strategy", "objective", "regret");
    for s in &outcome.report.strategies {
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.10}"),
            None => "undefined".to_string(),
        };
        eprintln!(
            "{:<12} {:>18} {:>18}",
            s.name,
            fmt(s.objective),
            fmt(s.regret)
        );
    }
    eprintln!(
        "wrote report to {} and plot data to {}",
        output.display(),
        plot_path.display()
    );
    Ok(())
}
