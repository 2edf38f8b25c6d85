//! File formats: experiment-log CSV, fitted-model JSON, allocation and
//! benchmark reports, plot-ready CSV, world specifications, configuration
//! overrides, and run manifests.
//!
//! Every float is serialized in scientific notation with 17 significant
//! digits, so all values survive a text round trip bit-exactly, and all
//! emitters are deterministic: identical data yields identical bytes.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use climb_core::fit::{FitConfig, StageReport};
use climb_core::scaling::{predicted_loss, ScalingError};
use climb_core::synth::{ratio_curve, ComparisonReport, DesignSpec, SynthError, WorldRanges};
use climb_core::{
    make_proportion, AllocationResult, ClimbModel, ExperimentRecord, ImportanceWeights,
    LanguageSet, ModelError, MonoScalingParams, ProportionVector, TransferParams,
};

/// Exact header of the experiment-log CSV.
pub const RECORDS_HEADER: &str = "run_id,token_budget,step_fraction,language,proportion,val_loss";

/// Exact header of the plot-data CSV.
pub const PLOT_HEADER: &str = "curve,series,x,y";

/// Raw per-step proportion sums may deviate from 1 by at most this much.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Documentation string embedded in every fitted-model file.
pub const INDEX_CONVENTION: &str = "transfer matrices are indexed [target][source]: entry [i][j] \
     is b[i][j] + k[i][j]/D, the per-share strength with which language j's proportion raises \
     language i's effective ratio; rows and columns follow the order of the languages array";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {what}")]
    Parse { line: usize, what: String },
    #[error("run {run_id}: {what}")]
    InvariantViolation { run_id: String, what: String },
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// 17-significant-digit scientific notation; parses back to the same bits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes any value to JSON with 17-significant-digit floats and a
/// trailing newline. Field order follows struct declaration; maps are
/// `BTreeMap`s, so output is deterministic.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter);
    value
        .serialize(&mut ser)
        .expect("in-memory JSON serialization cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("JSON serializer emits UTF-8")
}

// ---------------------------------------------------------------------------
// Experiment-log CSV
// ---------------------------------------------------------------------------

/// Parsed experiment log: language codes in canonical (sorted) order plus the
/// validated records. A header-only file parses to empty codes and records.
#[derive(Debug)]
pub struct IngestResult {
    pub languages: Vec<String>,
    pub records: Vec<ExperimentRecord<f64>>,
}

impl IngestResult {
    pub fn language_set(&self) -> Result<LanguageSet, FormatError> {
        if self.languages.is_empty() {
            return Err(FormatError::Schema(
                "the experiment log contains no data rows".into(),
            ));
        }
        Ok(LanguageSet::new(self.languages.clone())?)
    }
}

struct RawRow {
    line: usize,
    run_id: String,
    token_budget: u64,
    step_fraction: f64,
    language: String,
    proportion: f64,
    val_loss: Option<f64>,
}

fn parse_field<T: std::str::FromStr>(
    raw: &str,
    line: usize,
    what: &str,
) -> Result<T, FormatError> {
    raw.parse().map_err(|_| FormatError::Parse {
        line,
        what: format!("cannot parse {what} from {raw:?}"),
    })
}

/// Parses the experiment-log CSV. Lines starting with `#` are comments.
/// Rows are grouped by (run_id, step_fraction); each group's proportions must
/// form a simplex within [`SIMPLEX_TOLERANCE`], token budgets must agree
/// within a run, and a language may appear once per group. Rows with an empty
/// `val_loss` contribute their proportion but produce no record.
pub fn parse_records(text: &str) -> Result<IngestResult, FormatError> {
    let mut rows: Vec<RawRow> = Vec::new();
    let mut header_seen = false;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim_end_matches('\r');
        if trimmed.starts_with('#') || trimmed.is_empty() {
            continue;
        }
        if !header_seen {
            if trimmed != RECORDS_HEADER {
                return Err(FormatError::Parse {
                    line,
                    what: format!("expected header {RECORDS_HEADER:?}, found {trimmed:?}"),
                });
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 6 {
            return Err(FormatError::Parse {
                line,
                what: format!("expected 6 comma-separated fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[3].is_empty() {
            return Err(FormatError::Parse {
                line,
                what: "run_id and language must be nonempty".into(),
            });
        }
        rows.push(RawRow {
            line,
            run_id: fields[0].to_string(),
            token_budget: parse_field(fields[1], line, "token_budget")?,
            step_fraction: parse_field(fields[2], line, "step_fraction")?,
            language: fields[3].to_string(),
            proportion: parse_field(fields[4], line, "proportion")?,
            val_loss: if fields[5].is_empty() {
                None
            } else {
                Some(parse_field(fields[5], line, "val_loss")?)
            },
        });
    }
    if !header_seen {
        return Err(FormatError::Parse {
            line: 1,
            what: format!("missing header {RECORDS_HEADER:?}"),
        });
    }

    let mut languages: Vec<String> = rows
        .iter()
        .map(|r| r.language.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    languages.sort();
    let index_of: HashMap<&str, usize> = languages
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    // Group rows by (run_id, step_fraction) in first-appearance order.
    let mut group_index: HashMap<(String, u64), usize> = HashMap::new();
    let mut groups: Vec<Vec<&RawRow>> = Vec::new();
    let mut run_budget: HashMap<String, u64> = HashMap::new();
    for row in &rows {
        match run_budget.entry(row.run_id.clone()) {
            std::collections::hash_map::Entry::Vacant(v) => {
                v.insert(row.token_budget);
            }
            std::collections::hash_map::Entry::Occupied(o) => {
                if *o.get() != row.token_budget {
                    return Err(FormatError::InvariantViolation {
                        run_id: row.run_id.clone(),
                        what: format!(
                            "token_budget changes from {} to {} (line {})",
                            o.get(),
                            row.token_budget,
                            row.line
                        ),
                    });
                }
            }
        }
        let key = (row.run_id.clone(), row.step_fraction.to_bits());
        let slot = *group_index.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[slot].push(row);
    }

    let m = languages.len();
    let mut records = Vec::new();
    for group in &groups {
        let first = group[0];
        let mut shares = vec![0.0f64; m];
        let mut losses: Vec<Option<f64>> = vec![None; m];
        let mut seen = vec![false; m];
        for row in group {
            let idx = index_of[row.language.as_str()];
            if seen[idx] {
                return Err(FormatError::InvariantViolation {
                    run_id: row.run_id.clone(),
                    what: format!(
                        "language {} listed twice at step_fraction {} (line {})",
                        row.language, row.step_fraction, row.line
                    ),
                });
            }
            seen[idx] = true;
            shares[idx] = row.proportion;
            losses[idx] = row.val_loss;
        }
        let sum: f64 = shares.iter().sum();
        if !((sum - 1.0).abs() <= SIMPLEX_TOLERANCE) {
            return Err(FormatError::InvariantViolation {
                run_id: first.run_id.clone(),
                what: format!(
                    "proportions at step_fraction {} sum to {sum}, not 1 within {SIMPLEX_TOLERANCE}",
                    first.step_fraction
                ),
            });
        }
        let mixture = make_proportion(&shares).map_err(|e| FormatError::InvariantViolation {
            run_id: first.run_id.clone(),
            what: e.to_string(),
        })?;
        for idx in 0..m {
            if let Some(loss) = losses[idx] {
                records.push(ExperimentRecord::new(
                    first.run_id.clone(),
                    first.token_budget,
                    first.step_fraction,
                    mixture.clone(),
                    languages[idx].clone(),
                    loss,
                )?);
            }
        }
    }
    Ok(IngestResult { languages, records })
}

/// Reads and parses an experiment-log CSV file.
pub fn ingest_records(path: &std::path::Path) -> Result<IngestResult, std::io::Error> {
    let text = std::fs::read_to_string(path)?;
    parse_records(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Emits records as CSV. Records sharing (run_id, step_fraction) become one
/// group of rows, one per language in set order; languages without a
/// measurement get an empty `val_loss` cell so the mixture always serializes
/// completely. With `manifest` set, a `# manifest:` comment line leads.
pub fn emit_records(
    records: &[ExperimentRecord<f64>],
    languages: &LanguageSet,
    manifest: Option<&str>,
) -> Result<String, FormatError> {
    let m = languages.len();
    let mut group_index: HashMap<(String, u64), usize> = HashMap::new();
    struct Group<'a> {
        run_id: &'a str,
        token_budget: u64,
        step_fraction: f64,
        mixture: &'a ProportionVector<f64>,
        losses: Vec<Option<f64>>,
    }
    let mut groups: Vec<Group> = Vec::new();
    for record in records {
        let idx = languages
            .require(&record.language)
            .map_err(|e| FormatError::Schema(e.to_string()))?;
        let key = (record.run_id.clone(), record.step_fraction.to_bits());
        let slot = *group_index.entry(key).or_insert_with(|| {
            groups.push(Group {
                run_id: &record.run_id,
                token_budget: record.token_budget,
                step_fraction: record.step_fraction,
                mixture: &record.mixture,
                losses: vec![None; m],
            });
            groups.len() - 1
        });
        let group = &mut groups[slot];
        if group.token_budget != record.token_budget
            || !group.mixture.approx_eq(&record.mixture)
        {
            return Err(FormatError::Schema(format!(
                "records of run {} at step_fraction {} disagree on budget or mixture",
                record.run_id, record.step_fraction
            )));
        }
        if group.losses[idx].is_some() {
            return Err(FormatError::Schema(format!(
                "run {} step_fraction {} has two losses for {}",
                record.run_id, record.step_fraction, record.language
            )));
        }
        group.losses[idx] = Some(record.val_loss);
    }

    let mut out = String::new();
    if let Some(name) = manifest {
        let _ = writeln!(out, "# manifest: {name}");
    }
    out.push_str(RECORDS_HEADER);
    out.push('\n');
    for group in &groups {
        for idx in 0..m {
            let loss = group.losses[idx]
                .map(fmt_float)
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                group.run_id,
                group.token_budget,
                fmt_float(group.step_fraction),
                languages.code(idx),
                fmt_float(group.mixture.get(idx)),
                loss
            );
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Fitted-model JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonoEntry {
    #[serde(rename = "B")]
    pub b: f64,
    pub beta: f64,
    #[serde(rename = "E")]
    pub e: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferEntry {
    pub b: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: String,
    pub language: String,
    pub n_points: usize,
    pub r_squared: f64,
    pub huber: f64,
    pub converged: bool,
    pub eta_identifiable: bool,
}

impl From<&StageReport<f64>> for StageRow {
    fn from(s: &StageReport<f64>) -> Self {
        Self {
            stage: s.stage.to_string(),
            language: s.language.clone(),
            n_points: s.n_points,
            r_squared: s.r_squared,
            huber: s.huber,
            converged: s.converged,
            eta_identifiable: s.eta_identifiable,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitMeta {
    pub n_records: usize,
    pub huber_delta: f64,
    pub stages: Vec<StageRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub languages: Vec<String>,
    pub mono: BTreeMap<String, MonoEntry>,
    pub transfer: TransferEntry,
    pub eta: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_meta: Option<FitMeta>,
    pub index_convention: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

pub fn model_to_file(
    model: &ClimbModel<f64>,
    fit_meta: Option<FitMeta>,
    manifest: Option<String>,
) -> ModelFile {
    let m = model.m();
    let codes = model.languages().codes();
    let mono = (0..m)
        .map(|i| {
            let p = model.mono(i);
            (
                codes[i].clone(),
                MonoEntry {
                    b: p.b,
                    beta: p.beta,
                    e: p.e,
                },
            )
        })
        .collect();
    let eta = (0..m)
        .map(|i| (codes[i].clone(), model.transfer().eta(i)))
        .collect();
    ModelFile {
        languages: codes.to_vec(),
        mono,
        transfer: TransferEntry {
            b: model.transfer().b_matrix().to_vec(),
            k: model.transfer().k_matrix().to_vec(),
        },
        eta,
        fit_meta,
        index_convention: INDEX_CONVENTION.to_string(),
        manifest,
    }
}

pub fn model_from_file(file: &ModelFile) -> Result<ClimbModel<f64>, FormatError> {
    let languages = LanguageSet::new(file.languages.clone())?;
    let m = languages.len();
    let mono: Vec<MonoScalingParams<f64>> = file
        .languages
        .iter()
        .map(|code| {
            let entry = file
                .mono
                .get(code)
                .ok_or_else(|| FormatError::Schema(format!("mono entry missing for {code}")))?;
            Ok(MonoScalingParams::new(entry.b, entry.beta, entry.e)?)
        })
        .collect::<Result<_, FormatError>>()?;
    let eta: Vec<f64> = file
        .languages
        .iter()
        .map(|code| {
            file.eta
                .get(code)
                .copied()
                .ok_or_else(|| FormatError::Schema(format!("eta entry missing for {code}")))
        })
        .collect::<Result<_, _>>()?;
    for (name, matrix) in [("b", &file.transfer.b), ("k", &file.transfer.k)] {
        if matrix.len() != m || matrix.iter().any(|row| row.len() != m) {
            return Err(FormatError::Schema(format!(
                "transfer matrix {name} must be {m}x{m}"
            )));
        }
    }
    let transfer = TransferParams::new(file.transfer.b.clone(), file.transfer.k.clone(), eta)?;
    Ok(ClimbModel::new(languages, mono, transfer)?)
}

// ---------------------------------------------------------------------------
// Allocation, prediction, and benchmark-report JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationFile {
    pub languages: Vec<String>,
    pub token_budget: u64,
    pub rho: f64,
    pub weights: Vec<f64>,
    pub direction: Vec<f64>,
    pub allocation: Vec<f64>,
    pub effective_ratios: Vec<f64>,
    pub predicted_losses: Vec<f64>,
    /// Surrogate objective at the optimized mixture.
    pub objective_value: f64,
    /// Importance-weighted total predicted loss at the optimized mixture.
    pub weighted_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

pub fn allocation_to_file(
    result: &AllocationResult<f64>,
    languages: &LanguageSet,
    weights: &ImportanceWeights<f64>,
    manifest: Option<String>,
) -> AllocationFile {
    let weighted_loss = weights
        .values()
        .iter()
        .zip(&result.predicted_losses)
        .map(|(w, l)| w * l)
        .sum();
    AllocationFile {
        languages: languages.codes().to_vec(),
        token_budget: result.token_budget,
        rho: result.rho,
        weights: weights.values().to_vec(),
        direction: result.direction.clone(),
        allocation: result.allocation.values().to_vec(),
        effective_ratios: result.effective_ratios.clone(),
        predicted_losses: result.predicted_losses.clone(),
        objective_value: result.objective_value,
        weighted_loss,
        manifest,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionFile {
    pub languages: Vec<String>,
    pub token_budget: u64,
    pub mixture: Vec<f64>,
    pub effective_ratios: Vec<f64>,
    pub predicted_losses: Vec<f64>,
    pub weights: Vec<f64>,
    pub weighted_objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyRow {
    pub name: String,
    pub mixture: Vec<f64>,
    pub objective: Option<f64>,
    pub regret: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub mono_b_rel: Vec<f64>,
    pub mono_beta_abs: Vec<f64>,
    pub mono_e_rel: Vec<f64>,
    pub alpha_rel: Vec<f64>,
    pub eta_rel: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub languages: Vec<String>,
    pub seed: u64,
    pub noise_sigma: f64,
    pub plan_budget: u64,
    pub grid_resolution: u32,
    pub oracle_mixture: Vec<f64>,
    pub oracle_objective: f64,
    pub strategies: Vec<StrategyRow>,
    pub recovery: RecoveryRow,
    pub n_records: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

pub fn report_to_file(
    report: &ComparisonReport<f64>,
    seed: u64,
    noise_sigma: f64,
    manifest: Option<String>,
) -> ReportFile {
    ReportFile {
        languages: report.languages.clone(),
        seed,
        noise_sigma,
        plan_budget: report.plan_budget,
        grid_resolution: report.grid_resolution,
        oracle_mixture: report.oracle_mixture.clone(),
        oracle_objective: report.oracle_objective,
        strategies: report
            .strategies
            .iter()
            .map(|s| StrategyRow {
                name: s.name.clone(),
                mixture: s.mixture.clone(),
                objective: s.objective,
                regret: s.regret,
            })
            .collect(),
        recovery: RecoveryRow {
            mono_b_rel: report.recovery.mono_b_rel.clone(),
            mono_beta_abs: report.recovery.mono_beta_abs.clone(),
            mono_e_rel: report.recovery.mono_e_rel.clone(),
            alpha_rel: report.recovery.alpha_rel.clone(),
            eta_rel: report.recovery.eta_rel.clone(),
        },
        n_records: report.n_records,
        manifest,
    }
}

// ---------------------------------------------------------------------------
// Plot-data CSV
// ---------------------------------------------------------------------------

/// Points per curve family in the plot CSV.
pub const PLOT_BUDGET_POINTS: usize = 25;

/// Emits two curve families under `model` (for a benchmark this is the
/// ground-truth world): per-language validation loss over a two-decade budget
/// sweep around `plan_budget` at the supplied mixture, and per-language
/// effective ratio versus own share at `plan_budget`. Columns: curve, series,
/// x, y. Budget points where a loss is undefined are omitted.
pub fn plot_csv(
    model: &ClimbModel<f64>,
    mixture: &ProportionVector<f64>,
    plan_budget: u64,
    share_points: usize,
    manifest: Option<&str>,
) -> Result<String, FormatError> {
    let mut out = String::new();
    if let Some(name) = manifest {
        let _ = writeln!(out, "# manifest: {name}");
    }
    out.push_str(PLOT_HEADER);
    out.push('\n');
    let codes = model.languages().codes();
    let plan = plan_budget as f64;
    for (i, code) in codes.iter().enumerate() {
        for j in 0..PLOT_BUDGET_POINTS {
            let exponent = 2.0 * (j as f64 / (PLOT_BUDGET_POINTS - 1) as f64) - 1.0;
            let tokens = plan * 10f64.powf(exponent);
            match predicted_loss(model, mixture, i, tokens) {
                Ok(loss) => {
                    let _ = writeln!(
                        out,
                        "loss-vs-budget,{code},{},{}",
                        fmt_float(tokens),
                        fmt_float(loss)
                    );
                }
                Err(ScalingError::NonPositiveEffectiveRatio { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    for (i, code) in codes.iter().enumerate() {
        for (share, ratio) in ratio_curve(model, i, plan, share_points)? {
            let _ = writeln!(
                out,
                "ratio-vs-share,{code},{},{}",
                fmt_float(share),
                fmt_float(ratio)
            );
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// World specification and configuration files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangesFile {
    pub b: Option<[f64; 2]>,
    pub beta: Option<[f64; 2]>,
    pub e: Option<[f64; 2]>,
    pub transfer_b: Option<[f64; 2]>,
    pub transfer_k: Option<[f64; 2]>,
    pub eta: Option<[f64; 2]>,
    pub uniform_source_transfer: Option<bool>,
}

impl RangesFile {
    pub fn apply(&self, base: WorldRanges) -> WorldRanges {
        let pair = |o: Option<[f64; 2]>, d: (f64, f64)| o.map(|[a, b]| (a, b)).unwrap_or(d);
        WorldRanges {
            b: pair(self.b, base.b),
            beta: pair(self.beta, base.beta),
            e: pair(self.e, base.e),
            transfer_b: pair(self.transfer_b, base.transfer_b),
            transfer_k: pair(self.transfer_k, base.transfer_k),
            eta: pair(self.eta, base.eta),
            uniform_source_transfer: self
                .uniform_source_transfer
                .unwrap_or(base.uniform_source_transfer),
        }
    }
}

/// Resolves a preset name to base ranges: "default" or "floor_safe".
pub fn ranges_preset(name: &str) -> Result<WorldRanges, FormatError> {
    match name {
        "default" => Ok(WorldRanges::default()),
        "floor_safe" => Ok(WorldRanges::floor_safe()),
        other => Err(FormatError::Schema(format!(
            "unknown ranges preset {other:?}; expected \"default\" or \"floor_safe\""
        ))),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub budgets: Option<Vec<u64>>,
    pub target_shares: Option<Vec<f64>>,
    pub fractions: Option<Vec<f64>>,
}

impl DesignFile {
    pub fn apply(&self, base: DesignSpec) -> DesignSpec {
        DesignSpec {
            budgets: self.budgets.clone().unwrap_or(base.budgets),
            target_shares: self.target_shares.clone().unwrap_or(base.target_shares),
            fractions: self.fractions.clone().unwrap_or(base.fractions),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub languages: usize,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub ranges: Option<RangesFile>,
}

/// World specification for the simulate command: either an explicit model or
/// sampling instructions, plus the experiment design and noise level.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpecFile {
    #[serde(default)]
    pub model: Option<ModelFile>,
    #[serde(default)]
    pub sample: Option<SampleSpec>,
    #[serde(default)]
    pub design: Option<DesignFile>,
    #[serde(default)]
    pub noise_sigma: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOverrides {
    pub delta: Option<f64>,
    pub max_iterations: Option<usize>,
    pub beta_grid: Option<Vec<f64>>,
    pub e_grid_fractions: Option<Vec<f64>>,
    pub eta_bounds: Option<[f64; 2]>,
    pub min_tail_fraction: Option<f64>,
}

impl FitOverrides {
    pub fn apply(&self, base: &mut FitConfig<f64>) {
        if let Some(v) = self.delta {
            base.delta = v;
        }
        if let Some(v) = self.max_iterations {
            base.max_iterations = v;
        }
        if let Some(v) = &self.beta_grid {
            base.beta_grid = v.clone();
        }
        if let Some(v) = &self.e_grid_fractions {
            base.e_grid_fractions = v.clone();
        }
        if let Some([lo, hi]) = self.eta_bounds {
            base.eta_bounds = (lo, hi);
        }
        if let Some(v) = self.min_tail_fraction {
            base.min_tail_fraction = v;
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerOverrides {
    pub rho: Option<f64>,
    pub barrier_initial: Option<f64>,
    pub barrier_shrink: Option<f64>,
    pub trust_radius_initial: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
    pub tolerance: Option<f64>,
    pub n_random_starts: Option<usize>,
    pub seed: Option<u64>,
    pub feasibility_margin: Option<f64>,
}

impl OptimizerOverrides {
    pub fn apply(&self, base: &mut climb_core::alloc::OptimizerConfig<f64>) {
        if let Some(v) = self.rho {
            base.rho = v;
        }
        if let Some(v) = self.barrier_initial {
            base.barrier_initial = v;
        }
        if let Some(v) = self.barrier_shrink {
            base.barrier_shrink = v;
        }
        if let Some(v) = self.trust_radius_initial {
            base.trust_radius_initial = v;
        }
        if let Some(v) = self.max_outer {
            base.max_outer = v;
        }
        if let Some(v) = self.max_inner {
            base.max_inner = v;
        }
        if let Some(v) = self.tolerance {
            base.tolerance = v;
        }
        if let Some(v) = self.n_random_starts {
            base.n_random_starts = v;
        }
        if let Some(v) = self.seed {
            base.seed = v;
        }
        if let Some(v) = self.feasibility_margin {
            base.feasibility_margin = v;
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkOverrides {
    pub languages: Option<usize>,
    pub seed: Option<u64>,
    pub noise_sigma: Option<f64>,
    pub plan_budget: Option<u64>,
    pub grid_resolution: Option<u32>,
    pub preset: Option<String>,
    pub ranges: Option<RangesFile>,
    pub design: Option<DesignFile>,
    pub weights: Option<Vec<f64>>,
    pub natural_counts: Option<Vec<f64>>,
}

/// Optional configuration file passed with `--config`: overrides for the
/// fitting and optimizer settings plus benchmark world parameters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub fit: Option<FitOverrides>,
    #[serde(default)]
    pub optimizer: Option<OptimizerOverrides>,
    #[serde(default)]
    pub benchmark: Option<BenchmarkOverrides>,
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

/// Auxiliary provenance record written next to each primary output. The
/// primary artifacts reference it by name and stay timestamp-free themselves,
/// so they remain byte-identical across reruns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
    pub tool_version: String,
    pub timestamp_unix: u64,
}
