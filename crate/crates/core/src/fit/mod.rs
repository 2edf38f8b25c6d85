//! Fitting: monolingual laws, transfer saturation, budget-dependent strengths.
//!
//! The pipeline mirrors how the logs are produced. Tail records (late
//! checkpoints) are kept and everything earlier is discarded. Monolingual runs
//! pin each language's (B, beta, E) under a Huber objective on raw losses.
//! Every multilingual observation is then inverted through its language's
//! monolingual law into an effective ratio, giving (share, ratio) pairs per
//! language and checkpoint budget. Under equal per-source transfer the model
//! collapses to
//!
//! ```text
//! rtilde = r + abar(D) * (1 - r) * (1 - exp(-eta * r))
//! ```
//!
//! with a closed-form abar(D) given eta, so the saturation rate eta (shared
//! across budgets) reduces to a one-dimensional search. A final least-squares
//! line of abar against 1/D yields the offset and budget-scaled strengths
//! (b, k), which can both be negative.

mod qn;

use crate::model::{
    ClimbModel, ExperimentRecord, LanguageSet, ModelError, MonoScalingParams, TransferParams,
};
use crate::scalar::Scalar;
use crate::scaling::{interaction_ratio_from_loss, ScalingError};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("insufficient data: {context}")]
    InsufficientData { context: String },
    #[error("no start converged: {context}")]
    NoConvergence { context: String },
    #[error("no records remain after the tail filter")]
    EmptyAfterFilter,
    #[error(
        "observed loss {loss} for language {language:?} in run {run_id:?} is at or below \
         the fitted floor {floor}"
    )]
    LossAtOrBelowFloor {
        run_id: String,
        language: String,
        loss: f64,
        floor: f64,
    },
    #[error("singular design: {context}")]
    SingularDesign { context: String },
    #[error("observed values are all identical; goodness of fit is undefined")]
    DegenerateVariance,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
}

/// Knobs for the fitting stages.
#[derive(Debug, Clone)]
pub struct FitConfig<F: Scalar = f64> {
    /// Huber threshold in raw loss units.
    pub delta: F,
    /// Quasi-Newton iteration cap per start.
    pub max_iterations: usize,
    /// Exponent starts for the monolingual multi-start.
    pub beta_grid: Vec<F>,
    /// Floor starts, as fractions of the smallest observed loss.
    pub e_grid_fractions: Vec<F>,
    /// Search interval for the saturation rate (lower exclusive, upper inclusive).
    pub eta_bounds: (F, F),
    /// Smallest checkpoint fraction kept by the tail filter.
    pub min_tail_fraction: F,
}

impl<F: Scalar> Default for FitConfig<F> {
    fn default() -> Self {
        Self {
            delta: F::c(1e-3),
            max_iterations: 500,
            beta_grid: (1..=10).map(|i| F::c(i as f64 / 10.0)).collect(),
            e_grid_fractions: vec![F::zero(), F::c(0.5), F::c(0.9)],
            eta_bounds: (F::c(crate::model::ETA_MIN), F::c(crate::model::ETA_MAX)),
            min_tail_fraction: F::c(0.85),
        }
    }
}

/// Huber loss: r^2/2 inside the threshold, linear with matched value and slope
/// outside: delta * (|r| - delta/2).
pub fn huber<F: Scalar>(residual: F, delta: F) -> F {
    let a = residual.abs();
    if a <= delta {
        F::c(0.5) * residual * residual
    } else {
        delta * (a - F::c(0.5) * delta)
    }
}

/// Derivative of [`huber`] in the residual: the residual clamped to [-delta, delta].
fn huber_psi<F: Scalar>(residual: F, delta: F) -> F {
    residual.max(-delta).min(delta)
}

/// Coefficient of determination and mean Huber loss of `predicted` against
/// `observed`. Errors with [`FitError::DegenerateVariance`] when the observed
/// values carry no variance.
pub fn goodness_of_fit<F: Scalar>(
    observed: &[F],
    predicted: &[F],
    delta: F,
) -> Result<(F, F), FitError> {
    if observed.is_empty() || observed.len() != predicted.len() {
        return Err(FitError::InsufficientData {
            context: format!(
                "goodness of fit needs matching nonempty vectors, got {} and {}",
                observed.len(),
                predicted.len()
            ),
        });
    }
    let n = F::from_usize(observed.len()).unwrap();
    let mean = observed.iter().copied().sum::<F>() / n;
    let ss_tot: F = observed.iter().map(|&y| (y - mean) * (y - mean)).sum();
    if ss_tot == F::zero() {
        return Err(FitError::DegenerateVariance);
    }
    let ss_res: F = observed
        .iter()
        .zip(predicted)
        .map(|(&y, &p)| (y - p) * (y - p))
        .sum();
    let huber_mean = observed
        .iter()
        .zip(predicted)
        .map(|(&y, &p)| huber(p - y, delta))
        .sum::<F>()
        / n;
    Ok((F::one() - ss_res / ss_tot, huber_mean))
}

/// Keeps records whose checkpoint fraction is at least `min_fraction`,
/// preserving order. The early part of a training curve does not follow the
/// budget law and would bias every later stage.
pub fn filter_tail<F: Scalar>(
    records: &[ExperimentRecord<F>],
    min_fraction: F,
) -> Result<Vec<ExperimentRecord<F>>, FitError> {
    let kept: Vec<_> = records
        .iter()
        .filter(|r| r.step_fraction >= min_fraction)
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(FitError::EmptyAfterFilter);
    }
    Ok(kept)
}

/// Fit summary paired with the fitted parameters.
#[derive(Debug, Clone)]
pub struct FitReport<P, F: Scalar = f64> {
    pub params: P,
    /// At most 1; can be negative for fits worse than the mean.
    pub r_squared: F,
    /// Mean Huber loss of the residuals.
    pub huber: F,
    pub n_points: usize,
    pub converged: bool,
    /// Predicted minus observed, in input order.
    pub residuals: Vec<F>,
}

impl<P, F: Scalar> FitReport<P, F> {
    fn new(
        params: P,
        observed: &[F],
        predicted: &[F],
        delta: F,
        n_free: usize,
        converged: bool,
    ) -> Result<Self, FitError> {
        if observed.len() < n_free {
            return Err(FitError::InsufficientData {
                context: format!(
                    "{} points cannot determine {} parameters",
                    observed.len(),
                    n_free
                ),
            });
        }
        let (r_squared, huber_mean) = goodness_of_fit(observed, predicted, delta)?;
        Ok(Self {
            params,
            r_squared,
            huber: huber_mean,
            n_points: observed.len(),
            converged,
            residuals: observed
                .iter()
                .zip(predicted)
                .map(|(&y, &p)| p - y)
                .collect(),
        })
    }
}

/// Fits `L(D) = B / D^beta + E` to (tokens, loss) points under the Huber
/// objective.
///
/// Multi-start: every (beta, floor-fraction) grid pair seeds a start, B is
/// solved per start by linear least squares on D^-beta, and each start is
/// refined by box-constrained BFGS (B > 0, beta in (0, 2], E >= 0). The best
/// converged objective wins; exact ties go to the earliest start.
pub fn fit_monolingual<F: Scalar>(
    points: &[(F, F)],
    config: &FitConfig<F>,
) -> Result<FitReport<MonoScalingParams<F>, F>, FitError> {
    if points.len() < 3 {
        return Err(FitError::InsufficientData {
            context: format!("monolingual fit needs at least 3 points, got {}", points.len()),
        });
    }
    for &(tokens, loss) in points {
        if !(tokens.is_finite() && tokens > F::zero()) {
            return Err(FitError::Scaling(ScalingError::NonPositiveTokens {
                tokens: tokens.as_f64(),
            }));
        }
        if !loss.is_finite() {
            return Err(FitError::InsufficientData {
                context: "non-finite loss".into(),
            });
        }
    }
    let mut distinct = 0usize;
    for (i, &(t, _)) in points.iter().enumerate() {
        if points[..i].iter().all(|&(u, _)| u != t) {
            distinct += 1;
        }
    }
    if distinct < 2 {
        return Err(FitError::InsufficientData {
            context: "monolingual fit needs at least 2 distinct token budgets".into(),
        });
    }

    let ln_d: Vec<F> = points.iter().map(|&(t, _)| t.ln()).collect();
    let losses: Vec<F> = points.iter().map(|&(_, l)| l).collect();
    let delta = config.delta;
    // params = [ln B, beta, E]. Optimizing the coefficient on a log scale
    // keeps the search geometry sane when B is orders of magnitude larger
    // than the exponent; the reducible term is exp(ln B - beta ln D).
    let objective = |p: &[F]| {
        let (lb, beta, e) = (p[0], p[1], p[2]);
        let mut f = F::zero();
        let mut glb = F::zero();
        let mut gbeta = F::zero();
        let mut ge = F::zero();
        for (i, &l) in losses.iter().enumerate() {
            let term = (lb - beta * ln_d[i]).exp();
            let r = term + e - l;
            f += huber(r, delta);
            let psi = huber_psi(r, delta);
            glb += psi * term;
            gbeta += psi * (-ln_d[i]) * term;
            ge += psi;
        }
        (f, vec![glb, gbeta, ge])
    };

    let min_loss = losses.iter().copied().fold(F::infinity(), F::min);
    let mut starts = Vec::new();
    for &beta0 in &config.beta_grid {
        for &frac in &config.e_grid_fractions {
            let e0 = frac * min_loss;
            // Least-squares B given (beta0, e0).
            let mut sxx = F::zero();
            let mut sxy = F::zero();
            for (i, &l) in losses.iter().enumerate() {
                let x = (-beta0 * ln_d[i]).exp();
                sxx += x * x;
                sxy += x * (l - e0);
            }
            let b0 = (sxy / sxx).max(F::c(1e-12)).min(F::c(1e15));
            starts.push(vec![b0.ln(), beta0, e0]);
        }
    }

    let lower = [F::c(1e-12).ln(), F::c(1e-6), F::zero()];
    let upper = [F::c(1e15).ln(), F::c(2.0), F::infinity()];
    let runs: Vec<qn::BoxMin<F>> = starts
        .par_iter()
        .map(|s| qn::minimize_box(objective, s, &lower, &upper, config.max_iterations, F::c(1e-12)))
        .collect();

    let mut best: Option<(usize, &qn::BoxMin<F>)> = None;
    for (i, run) in runs.iter().enumerate() {
        if !run.converged || !run.value.is_finite() {
            continue;
        }
        if best.map_or(true, |(_, b)| run.value < b.value) {
            best = Some((i, run));
        }
    }
    let Some((_, winner)) = best else {
        return Err(FitError::NoConvergence {
            context: format!("all {} monolingual starts failed", starts.len()),
        });
    };
    let params = MonoScalingParams::new(winner.x[0].exp(), winner.x[1], winner.x[2])?;
    let predicted: Vec<F> = points
        .iter()
        .map(|&(t, _)| params.b * (-params.beta * t.ln()).exp() + params.e)
        .collect();
    FitReport::new(params, &losses, &predicted, delta, 3, true)
}

/// One inverted multilingual observation for a target language.
#[derive(Debug, Clone)]
pub struct RatioPoint<F: Scalar = f64> {
    pub run_id: String,
    /// Target language's share in the run's mixture.
    pub share: F,
    /// Effective ratio recovered from the observed loss.
    pub ratio: F,
    /// Tokens seen at the checkpoint (step fraction times nominal budget).
    pub tokens: F,
    /// Nominal budget of the run.
    pub token_budget: u64,
    /// Full mixture of the run, in language-set order.
    pub mixture: Vec<F>,
}

/// Inverts every multilingual record through its language's monolingual law,
/// producing per-language (share, ratio, tokens) observations.
///
/// Monolingual records and records measuring a language absent from the
/// mixture are outside the transfer model and are skipped. A loss at or below
/// the fitted floor cannot be inverted and fails with the record's identity.
pub fn ratio_pairs<F: Scalar>(
    records: &[ExperimentRecord<F>],
    languages: &LanguageSet,
    mono: &[MonoScalingParams<F>],
) -> Result<Vec<Vec<RatioPoint<F>>>, FitError> {
    let m = languages.len();
    if mono.len() != m {
        return Err(FitError::Model(ModelError::DimensionMismatch {
            expected: m,
            got: mono.len(),
        }));
    }
    let mut out: Vec<Vec<RatioPoint<F>>> = vec![Vec::new(); m];
    for record in records {
        if record.mixture.len() != m {
            return Err(FitError::Model(ModelError::DimensionMismatch {
                expected: m,
                got: record.mixture.len(),
            }));
        }
        if record.is_monolingual() {
            continue;
        }
        let target = languages.require(&record.language)?;
        let share = record.mixture.get(target);
        if share == F::zero() {
            continue;
        }
        let tokens = record.effective_tokens();
        let ratio = interaction_ratio_from_loss(&mono[target], tokens, record.val_loss).map_err(
            |e| match e {
                ScalingError::LossAtOrBelowFloor { loss, floor, .. } => {
                    FitError::LossAtOrBelowFloor {
                        run_id: record.run_id.clone(),
                        language: record.language.clone(),
                        loss,
                        floor,
                    }
                }
                other => FitError::Scaling(other),
            },
        )?;
        out[target].push(RatioPoint {
            run_id: record.run_id.clone(),
            share,
            ratio,
            tokens,
            token_budget: record.token_budget,
            mixture: record.mixture.values().to_vec(),
        });
    }
    Ok(out)
}

/// Collapsed-model fit at a single checkpoint budget.
#[derive(Debug, Clone)]
pub struct AlphaBudgetFit<F: Scalar = f64> {
    /// Aggregate transfer strength at this budget.
    pub alpha: F,
    pub eta: F,
    /// False when the aggregate strength is too small for eta to matter.
    pub eta_identifiable: bool,
    pub r_squared: F,
    pub huber: F,
    pub n_points: usize,
}

/// Aggregate strength below which the saturation rate has no leverage.
pub const ETA_IDENTIFIABLE_MIN_ALPHA: f64 = 1e-3;

fn collapsed_design<F: Scalar>(pairs: &[RatioPoint<F>], eta: F) -> (F, F) {
    // x = (1-r)(1-exp(-eta r)), y = ratio - r; returns (sum x^2, sum x y).
    let mut sxx = F::zero();
    let mut sxy = F::zero();
    for p in pairs {
        let x = (F::one() - p.share) * (F::one() - (-eta * p.share).exp());
        let y = p.ratio - p.share;
        sxx += x * x;
        sxy += x * y;
    }
    (sxx, sxy)
}

fn collapsed_ss<F: Scalar>(pairs: &[RatioPoint<F>], eta: F, alpha: F) -> F {
    pairs
        .iter()
        .map(|p| {
            let x = (F::one() - p.share) * (F::one() - (-eta * p.share).exp());
            let r = p.ratio - p.share - alpha * x;
            r * r
        })
        .sum()
}

/// Minimizes `cost` over (lo, hi] by a coarse log grid plus golden-section
/// refinement. Deterministic; ties go to the smaller grid value.
fn search_eta<F: Scalar>(lo: F, hi: F, cost: impl Fn(F) -> F) -> F {
    const GRID: usize = 96;
    let lo = lo * F::c(1.0 + 1e-9);
    let log_lo = lo.ln();
    let log_hi = hi.ln();
    // exp(ln hi) can round a hair above hi, so clamp back into the interval.
    let at = |i: usize| {
        (log_lo + (log_hi - log_lo) * F::c(i as f64 / (GRID - 1) as f64))
            .exp()
            .min(hi)
            .max(lo)
    };
    let mut best_i = 0usize;
    let mut best_c = F::infinity();
    for i in 0..GRID {
        let c = cost(at(i));
        if c < best_c {
            best_c = c;
            best_i = i;
        }
    }
    let mut a = at(best_i.saturating_sub(1));
    let mut b = at((best_i + 1).min(GRID - 1));
    // Golden-section on [a, b].
    let inv_phi = F::c(0.618_033_988_749_894_8);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = cost(x1);
    let mut f2 = cost(x2);
    for _ in 0..160 {
        if b - a <= F::c(1e-12) * b.abs().max(F::one()) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = cost(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = cost(x2);
        }
    }
    let mid = (F::c(0.5) * (a + b)).min(hi).max(lo);
    if cost(mid) <= best_c {
        mid
    } else {
        at(best_i)
    }
}

/// Fits the collapsed transfer model at one checkpoint budget.
///
/// With `eta` given only the aggregate strength is estimated (closed form);
/// otherwise (alpha, eta) are fit jointly by least squares, eta through a
/// one-dimensional search. When the fitted strength is below
/// [`ETA_IDENTIFIABLE_MIN_ALPHA`] the data carry no information about eta and
/// the fit is flagged accordingly.
pub fn fit_alpha_at_budget<F: Scalar>(
    pairs: &[RatioPoint<F>],
    eta: Option<F>,
    config: &FitConfig<F>,
) -> Result<AlphaBudgetFit<F>, FitError> {
    let needed = if eta.is_some() { 1 } else { 2 };
    if pairs.len() < needed {
        return Err(FitError::InsufficientData {
            context: format!(
                "collapsed fit needs at least {needed} pairs, got {}",
                pairs.len()
            ),
        });
    }
    let solve = |eta: F| -> Result<F, FitError> {
        let (sxx, sxy) = collapsed_design(pairs, eta);
        if sxx <= F::zero() {
            return Err(FitError::SingularDesign {
                context: "all shares sit at the simplex boundary".into(),
            });
        }
        Ok(sxy / sxx)
    };
    let eta_star = match eta {
        Some(v) => v,
        None => {
            let (lo, hi) = config.eta_bounds;
            // Guard the degenerate design once, outside the search.
            solve(F::c(0.5) * (lo + hi))?;
            search_eta(lo, hi, |e| {
                let (sxx, sxy) = collapsed_design(pairs, e);
                if sxx <= F::zero() {
                    return F::infinity();
                }
                collapsed_ss(pairs, e, sxy / sxx)
            })
        }
    };
    let alpha = solve(eta_star)?;
    let observed: Vec<F> = pairs.iter().map(|p| p.ratio).collect();
    let predicted: Vec<F> = pairs
        .iter()
        .map(|p| {
            p.share + alpha * (F::one() - p.share) * (F::one() - (-eta_star * p.share).exp())
        })
        .collect();
    let (r_squared, huber_mean) = goodness_of_fit(&observed, &predicted, config.delta)?;
    Ok(AlphaBudgetFit {
        alpha,
        eta: eta_star,
        eta_identifiable: alpha.abs() >= F::c(ETA_IDENTIFIABLE_MIN_ALPHA),
        r_squared,
        huber: huber_mean,
        n_points: pairs.len(),
    })
}

/// Collapsed-model fit across checkpoint budgets with one shared eta.
#[derive(Debug, Clone)]
pub struct SharedAlphaFit<F: Scalar = f64> {
    /// (tokens, aggregate strength) per budget group, ascending tokens.
    pub per_budget: Vec<(F, F)>,
    pub eta: F,
    pub eta_identifiable: bool,
    pub r_squared: F,
    pub huber: F,
    pub n_points: usize,
}

/// Joint fit of per-budget aggregate strengths with a single saturation rate.
/// For a candidate eta each group's strength is closed-form, so the joint
/// problem stays a one-dimensional search in eta.
pub fn fit_alpha_shared<F: Scalar>(
    groups: &[(F, Vec<RatioPoint<F>>)],
    config: &FitConfig<F>,
) -> Result<SharedAlphaFit<F>, FitError> {
    if groups.is_empty() {
        return Err(FitError::InsufficientData {
            context: "no budget groups".into(),
        });
    }
    let n_points: usize = groups.iter().map(|(_, g)| g.len()).sum();
    if n_points < groups.len() + 1 {
        return Err(FitError::InsufficientData {
            context: format!(
                "{} pairs cannot determine {} strengths plus a shared saturation rate",
                n_points,
                groups.len()
            ),
        });
    }
    for (tokens, pairs) in groups {
        if pairs.is_empty() {
            return Err(FitError::InsufficientData {
                context: format!("budget group at {} tokens is empty", tokens.as_f64()),
            });
        }
        let (sxx, _) = collapsed_design(pairs, F::one());
        if sxx <= F::zero() {
            return Err(FitError::SingularDesign {
                context: format!(
                    "budget group at {} tokens has no interior shares",
                    tokens.as_f64()
                ),
            });
        }
    }
    let total_cost = |eta: F| -> F {
        groups
            .iter()
            .map(|(_, pairs)| {
                let (sxx, sxy) = collapsed_design(pairs, eta);
                if sxx <= F::zero() {
                    return F::infinity();
                }
                collapsed_ss(pairs, eta, sxy / sxx)
            })
            .sum()
    };
    let (lo, hi) = config.eta_bounds;
    let eta = search_eta(lo, hi, total_cost);

    let mut per_budget = Vec::with_capacity(groups.len());
    let mut observed = Vec::with_capacity(n_points);
    let mut predicted = Vec::with_capacity(n_points);
    for (tokens, pairs) in groups {
        let (sxx, sxy) = collapsed_design(pairs, eta);
        let alpha = sxy / sxx;
        per_budget.push((*tokens, alpha));
        for p in pairs {
            observed.push(p.ratio);
            predicted.push(
                p.share + alpha * (F::one() - p.share) * (F::one() - (-eta * p.share).exp()),
            );
        }
    }
    per_budget.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let (r_squared, huber_mean) = goodness_of_fit(&observed, &predicted, config.delta)?;
    let max_alpha = per_budget
        .iter()
        .fold(F::zero(), |m, &(_, a)| m.max(a.abs()));
    Ok(SharedAlphaFit {
        per_budget,
        eta,
        eta_identifiable: max_alpha >= F::c(ETA_IDENTIFIABLE_MIN_ALPHA),
        r_squared,
        huber: huber_mean,
        n_points,
    })
}

/// Resolves per-source strengths for one target from runs with distinct
/// companion mixtures, given the saturation rate.
///
/// Each observation contributes one equation
/// `sum_{j != target} alpha_j * share_j = (ratio - share) / (1 - exp(-eta share))`
/// and the system is solved by least squares. Returns a full-length vector
/// with zero in the target slot.
pub fn fit_alpha_per_pair<F: Scalar>(
    points: &[RatioPoint<F>],
    target: usize,
    m: usize,
    eta: F,
) -> Result<Vec<F>, FitError> {
    let sources: Vec<usize> = (0..m).filter(|&j| j != target).collect();
    let n_free = sources.len();
    if points.len() < n_free {
        return Err(FitError::InsufficientData {
            context: format!(
                "per-source resolution needs at least {n_free} observations, got {}",
                points.len()
            ),
        });
    }
    // Normal equations A'A w = A'y.
    let mut ata = vec![vec![F::zero(); n_free]; n_free];
    let mut aty = vec![F::zero(); n_free];
    for p in points {
        if p.mixture.len() != m {
            return Err(FitError::Model(ModelError::DimensionMismatch {
                expected: m,
                got: p.mixture.len(),
            }));
        }
        let factor = F::one() - (-eta * p.share).exp();
        if factor <= F::zero() {
            return Err(FitError::SingularDesign {
                context: format!("share {} has no transfer leverage", p.share.as_f64()),
            });
        }
        let y = (p.ratio - p.share) / factor;
        let row: Vec<F> = sources.iter().map(|&j| p.mixture[j]).collect();
        for a in 0..n_free {
            aty[a] += row[a] * y;
            for b in 0..n_free {
                ata[a][b] += row[a] * row[b];
            }
        }
    }
    let w = solve_spd(&mut ata, &mut aty).ok_or_else(|| FitError::SingularDesign {
        context: "companion mixtures do not span the sources".into(),
    })?;
    let mut alpha = vec![F::zero(); m];
    for (slot, &j) in sources.iter().enumerate() {
        alpha[j] = w[slot];
    }
    Ok(alpha)
}

/// Gaussian elimination with partial pivoting; None when near-singular.
fn solve_spd<F: Scalar>(a: &mut [Vec<F>], y: &mut [F]) -> Option<Vec<F>> {
    let n = y.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(F::zero(), |m, v| m.max(v.abs()));
    if scale == F::zero() {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() <= F::c(1e-12) * scale {
            return None;
        }
        a.swap(col, pivot);
        y.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                let v = a[col][c];
                a[row][c] = a[row][c] - f * v;
            }
            let v = y[col];
            y[row] = y[row] - f * v;
        }
    }
    let mut x = vec![F::zero(); n];
    for row in (0..n).rev() {
        let mut s = y[row];
        for c in (row + 1)..n {
            s = s - a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Offset and budget-scaled strength from per-budget aggregates.
#[derive(Debug, Clone, Copy)]
pub struct TransferLineFit<F: Scalar = f64> {
    pub b: F,
    pub k: F,
    /// 1 for an exact (including constant) fit.
    pub r_squared: F,
    pub n_points: usize,
}

/// Ordinary least squares of strength against inverse budget:
/// `alpha(D) = b + k / D`. Two distinct budgets interpolate exactly; a
/// constant profile yields k = 0.
pub fn fit_transfer<F: Scalar>(points: &[(F, F)]) -> Result<TransferLineFit<F>, FitError> {
    if points.len() < 2 {
        return Err(FitError::InsufficientData {
            context: format!("strength line needs at least 2 budgets, got {}", points.len()),
        });
    }
    let mut distinct = 0usize;
    for (i, &(t, _)) in points.iter().enumerate() {
        if points[..i].iter().all(|&(u, _)| u != t) {
            distinct += 1;
        }
    }
    if distinct < 2 {
        return Err(FitError::InsufficientData {
            context: "strength line needs at least 2 distinct budgets".into(),
        });
    }
    let n = F::from_usize(points.len()).unwrap();
    let xs: Vec<F> = points.iter().map(|&(t, _)| F::one() / t).collect();
    let ys: Vec<F> = points.iter().map(|&(_, a)| a).collect();
    let x_mean = xs.iter().copied().sum::<F>() / n;
    let y_mean = ys.iter().copied().sum::<F>() / n;
    let mut sxx = F::zero();
    let mut sxy = F::zero();
    for (&x, &y) in xs.iter().zip(&ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    if sxx <= F::zero() {
        return Err(FitError::SingularDesign {
            context: "inverse budgets collapse to one point".into(),
        });
    }
    let ss_tot: F = ys.iter().map(|&y| (y - y_mean) * (y - y_mean)).sum();
    // A constant profile (variance at rounding level) has no variance to
    // explain; the flat line reproduces it exactly, so report that line and a
    // perfect fit rather than amplified rounding noise.
    if ss_tot <= F::c(1e-24) * n * y_mean * y_mean {
        return Ok(TransferLineFit {
            b: y_mean,
            k: F::zero(),
            r_squared: F::one(),
            n_points: points.len(),
        });
    }
    let k = sxy / sxx;
    let b = y_mean - k * x_mean;
    let ss_res: F = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            let r = b + k * x - y;
            r * r
        })
        .sum();
    Ok(TransferLineFit {
        b,
        k,
        r_squared: F::one() - ss_res / ss_tot,
        n_points: points.len(),
    })
}

/// Per-stage diagnostics from the full fitting pipeline.
#[derive(Debug, Clone)]
pub struct StageReport<F: Scalar = f64> {
    /// "mono", "alpha", or "transfer-line".
    pub stage: &'static str,
    pub language: String,
    pub n_points: usize,
    pub r_squared: F,
    pub huber: F,
    pub converged: bool,
    /// Only meaningful for "alpha" stages.
    pub eta_identifiable: bool,
}

/// Full fitting output: the model plus per-stage diagnostics.
#[derive(Debug, Clone)]
pub struct PipelineFit<F: Scalar = f64> {
    pub model: ClimbModel<F>,
    pub stages: Vec<StageReport<F>>,
}

/// Runs the complete fitting pipeline on raw records.
///
/// Stages: tail filter; per-language monolingual fits; ratio inversion of the
/// multilingual records; per-budget aggregate strengths with a shared
/// saturation rate; strength-versus-inverse-budget line. The fitted aggregate
/// for each target is stored identically at every source (the equal-share
/// design cannot attribute transfer to individual sources; any consistent
/// split reproduces the same predictions, and this one keeps the matrix
/// honest about what was measured).
pub fn fit_pipeline<F: Scalar>(
    records: &[ExperimentRecord<F>],
    languages: &LanguageSet,
    config: &FitConfig<F>,
) -> Result<PipelineFit<F>, FitError> {
    let m = languages.len();
    let filtered = filter_tail(records, config.min_tail_fraction)?;

    // Monolingual stage.
    let mono_inputs: Vec<Vec<(F, F)>> = (0..m)
        .map(|i| {
            filtered
                .iter()
                .filter(|r| {
                    r.is_monolingual()
                        && r.mixture.get(i) > F::zero()
                        && r.language == languages.code(i)
                })
                .map(|r| (r.effective_tokens(), r.val_loss))
                .collect()
        })
        .collect();
    for (i, pts) in mono_inputs.iter().enumerate() {
        if pts.len() < 3 {
            return Err(FitError::InsufficientData {
                context: format!(
                    "language {:?} has {} monolingual tail records, need at least 3",
                    languages.code(i),
                    pts.len()
                ),
            });
        }
    }
    let mono_fits: Vec<FitReport<MonoScalingParams<F>, F>> = mono_inputs
        .par_iter()
        .map(|pts| fit_monolingual(pts, config))
        .collect::<Result<_, _>>()?;
    let mono: Vec<MonoScalingParams<F>> = mono_fits.iter().map(|f| f.params).collect();

    // Ratio inversion.
    let pairs = ratio_pairs(&filtered, languages, &mono)?;

    // Transfer stages per language.
    struct LangTransfer<F: Scalar> {
        alpha_fit: SharedAlphaFit<F>,
        line: TransferLineFit<F>,
        line_huber: F,
    }
    let per_lang: Vec<LangTransfer<F>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut points = pairs[i].clone();
            if points.is_empty() {
                return Err(FitError::InsufficientData {
                    context: format!(
                        "language {:?} has no multilingual tail records",
                        languages.code(i)
                    ),
                });
            }
            let budgets: Vec<u64> = {
                let mut b: Vec<u64> = points.iter().map(|p| p.token_budget).collect();
                b.sort_unstable();
                b.dedup();
                b
            };
            if budgets.len() < 2 {
                return Err(FitError::InsufficientData {
                    context: format!(
                        "language {:?} has multilingual records at {} nominal budget(s), need 2",
                        languages.code(i),
                        budgets.len()
                    ),
                });
            }
            // Group by checkpoint tokens.
            points.sort_by(|a, b| {
                a.tokens
                    .partial_cmp(&b.tokens)
                    .unwrap()
                    .then_with(|| a.run_id.cmp(&b.run_id))
            });
            let mut groups: Vec<(F, Vec<RatioPoint<F>>)> = Vec::new();
            for p in points {
                match groups.last_mut() {
                    Some((t, g)) if *t == p.tokens => g.push(p),
                    _ => groups.push((p.tokens, vec![p])),
                }
            }
            let alpha_fit = fit_alpha_shared(&groups, config)?;
            let line = fit_transfer(&alpha_fit.per_budget)?;
            let n = F::from_usize(alpha_fit.per_budget.len()).unwrap();
            let line_huber = alpha_fit
                .per_budget
                .iter()
                .map(|&(t, a)| huber(line.b + line.k / t - a, config.delta))
                .sum::<F>()
                / n;
            Ok(LangTransfer {
                alpha_fit,
                line,
                line_huber,
            })
        })
        .collect::<Result<_, _>>()?;

    // Assemble: the aggregate strength for target i is copied to every source.
    let mut b = vec![vec![F::zero(); m]; m];
    let mut k = vec![vec![F::zero(); m]; m];
    let mut eta = Vec::with_capacity(m);
    for (i, lt) in per_lang.iter().enumerate() {
        for j in 0..m {
            if j != i {
                b[i][j] = lt.line.b;
                k[i][j] = lt.line.k;
            }
        }
        eta.push(lt.alpha_fit.eta);
    }
    let transfer = TransferParams::new(b, k, eta)?;
    let model = ClimbModel::new(languages.clone(), mono, transfer)?;

    let mut stages = Vec::with_capacity(3 * m);
    for (i, fitr) in mono_fits.iter().enumerate() {
        stages.push(StageReport {
            stage: "mono",
            language: languages.code(i).to_string(),
            n_points: fitr.n_points,
            r_squared: fitr.r_squared,
            huber: fitr.huber,
            converged: fitr.converged,
            eta_identifiable: true,
        });
    }
    for (i, lt) in per_lang.iter().enumerate() {
        stages.push(StageReport {
            stage: "alpha",
            language: languages.code(i).to_string(),
            n_points: lt.alpha_fit.n_points,
            r_squared: lt.alpha_fit.r_squared,
            huber: lt.alpha_fit.huber,
            converged: true,
            eta_identifiable: lt.alpha_fit.eta_identifiable,
        });
    }
    for (i, lt) in per_lang.iter().enumerate() {
        stages.push(StageReport {
            stage: "transfer-line",
            language: languages.code(i).to_string(),
            n_points: lt.line.n_points,
            r_squared: lt.line.r_squared,
            huber: lt.line_huber,
            converged: true,
            eta_identifiable: lt.alpha_fit.eta_identifiable,
        });
    }
    Ok(PipelineFit { model, stages })
}
