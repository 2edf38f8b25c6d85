//! Allocation: closed-form direction, interaction-aware refinement, oracles.
//!
//! Stage one ignores transfer. Minimizing the weighted reducible loss
//! `sum_i omega_i B_i (D r_i)^-beta_i` over the simplex has first-order
//! conditions that equalize the marginal benefit of every funded language;
//! with heterogeneous exponents those conditions do not normalize in closed
//! form, but the Lagrange multiplier is the root of a strictly decreasing
//! scalar function, so a bisection resolves it to machine precision.
//!
//! Stage two turns transfer back on and maximizes total effective data while
//! staying close to the stage-one direction: it minimizes
//!
//! ```text
//! F(r) = -sum_i rtilde_i(r) + rho * sum_i (rhat_i - p_i)^2
//! ```
//!
//! where `rhat = rtilde / sum(rtilde)`. The feasible region (positive shares
//! and positive effective ratios) is enforced by a logarithmic barrier whose
//! subproblems are solved by a dogleg trust region in simplex-reduced
//! coordinates, from several deterministic starts.
//!
//! A lattice oracle evaluates the true weighted objective on a simplex grid
//! for verification at small scale, and reference baselines cover the
//! comparisons the optimizer is judged against.

mod solver;

use crate::model::{
    make_proportion, AllocationResult, ClimbModel, ImportanceWeights, ModelError,
    ProportionVector,
};
use crate::scalar::Scalar;
use crate::scaling::{weighted_objective, ScalingError};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AllocError {
    #[error("allocation needs at least 2 languages, got {m}")]
    TooFewLanguages { m: usize },
    #[error(
        "no feasible starting point found ({tried} starts tried); transfer may be so \
         negative that no interior mixture keeps every effective ratio positive"
    )]
    InfeasibleStart { tried: usize },
    #[error("optimizer did not converge: {context}")]
    NoConvergence { context: String },
    #[error("lattice has {points} points, over the limit {limit}")]
    TooManyLatticePoints { points: u128, limit: u128 },
    #[error("grid resolution must be at least 1")]
    InvalidGridResolution,
    #[error("no lattice point yields a finite objective")]
    NoFeasiblePoint,
    #[error("natural-frequency baseline needs usable counts: {context}")]
    MissingNaturalCounts { context: String },
    #[error("direction entry {index} is zero; the profile is undefined there")]
    ZeroDirectionEntry { index: usize },
    #[error("scale values must be finite and positive, got {value}")]
    InvalidScale { value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
}

/// Knobs for the interaction-aware refinement stage.
#[derive(Debug, Clone)]
pub struct OptimizerConfig<F: Scalar = f64> {
    /// Penalty strength tying the refined mixture to the stage-one direction.
    pub rho: F,
    /// First barrier weight.
    pub barrier_initial: F,
    /// Multiplicative barrier decrease per outer iteration.
    pub barrier_shrink: F,
    /// Initial trust-region radius for each subproblem.
    pub trust_radius_initial: F,
    /// Number of barrier levels.
    pub max_outer: usize,
    /// Trust-region iteration cap per barrier level.
    pub max_inner: usize,
    /// Gradient sup-norm target at the final barrier level.
    pub tolerance: F,
    /// Random interior starts beyond the direction and the uniform mixture.
    pub n_random_starts: usize,
    /// Seed for the random starts.
    pub seed: u64,
    /// Minimum share and effective ratio for a start to count as feasible.
    pub feasibility_margin: F,
}

impl<F: Scalar> Default for OptimizerConfig<F> {
    fn default() -> Self {
        Self {
            rho: F::one(),
            barrier_initial: F::c(1e-2),
            barrier_shrink: F::c(0.2),
            trust_radius_initial: F::c(0.1),
            max_outer: 16,
            max_inner: 200,
            tolerance: F::c(1e-10),
            n_random_starts: 8,
            seed: 42,
            feasibility_margin: F::c(1e-9),
        }
    }
}

/// Stage one: the mixture that equalizes marginal reducible-loss benefit
/// across positively weighted languages, ignoring transfer.
///
/// Zero-weight languages receive exactly zero. The stationarity conditions
/// give `p_i = exp((a_i - u) / (beta_i + 1))` with
/// `a_i = ln(omega_i B_i beta_i) - beta_i ln(tokens)`; the multiplier `u` is
/// pinned by `sum_i p_i = 1` and found by bisection on that strictly
/// decreasing sum.
pub fn optimal_direction<F: Scalar>(
    model: &ClimbModel<F>,
    weights: &ImportanceWeights<F>,
    tokens: F,
) -> Result<ProportionVector<F>, AllocError> {
    let m = model.m();
    if weights.len() != m {
        return Err(AllocError::Model(ModelError::DimensionMismatch {
            expected: m,
            got: weights.len(),
        }));
    }
    if !(tokens.is_finite() && tokens > F::zero()) {
        return Err(AllocError::Scaling(ScalingError::NonPositiveTokens {
            tokens: tokens.as_f64(),
        }));
    }
    let ln_d = tokens.ln();
    let mut funded: Vec<(usize, F, F)> = Vec::new(); // (index, a_i, beta_i)
    for i in 0..m {
        let w = weights.get(i);
        if w == F::zero() {
            continue;
        }
        let mono = model.mono(i);
        let a = (w * mono.b * mono.beta).ln() - mono.beta * ln_d;
        funded.push((i, a, mono.beta));
    }
    debug_assert!(!funded.is_empty(), "weights guarantee a positive entry");

    let mut p = vec![F::zero(); m];
    if funded.len() == 1 {
        p[funded[0].0] = F::one();
        return Ok(make_proportion(&p)?);
    }

    let share_sum = |u: F| -> F {
        funded
            .iter()
            .map(|&(_, a, beta)| ((a - u) / (beta + F::one())).exp())
            .sum()
    };
    let a_min = funded.iter().map(|&(_, a, _)| a).fold(F::infinity(), F::min);
    let a_max = funded
        .iter()
        .map(|&(_, a, _)| a)
        .fold(-F::infinity(), F::max);
    let beta_max = funded
        .iter()
        .map(|&(_, _, b)| b)
        .fold(F::zero(), F::max);
    let n = F::from_usize(funded.len()).unwrap();
    let mut lo = a_min - F::one();
    let mut hi = a_max + (F::one() + beta_max) * n.ln() + F::one();
    debug_assert!(share_sum(lo) > F::one() && share_sum(hi) < F::one());
    for _ in 0..200 {
        let mid = F::c(0.5) * (lo + hi);
        if share_sum(mid) > F::one() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= F::c(1e-16) * hi.abs().max(F::one()) {
            break;
        }
    }
    let u = F::c(0.5) * (lo + hi);
    let total = share_sum(u);
    for &(i, a, beta) in &funded {
        p[i] = ((a - u) / (beta + F::one())).exp() / total;
    }
    Ok(make_proportion(&p)?)
}

/// Weighted reducible loss along the ray through a direction: for each scale
/// `c`, the value `sum_i B_i (c * tokens * p_i)^-beta_i`. Used to study how
/// much an effective-data multiplier is worth under a fixed mixture shape.
pub fn magnitude_profile<F: Scalar>(
    model: &ClimbModel<F>,
    direction: &ProportionVector<F>,
    tokens: F,
    scales: &[F],
) -> Result<Vec<F>, AllocError> {
    let m = model.m();
    if direction.len() != m {
        return Err(AllocError::Model(ModelError::DimensionMismatch {
            expected: m,
            got: direction.len(),
        }));
    }
    if !(tokens.is_finite() && tokens > F::zero()) {
        return Err(AllocError::Scaling(ScalingError::NonPositiveTokens {
            tokens: tokens.as_f64(),
        }));
    }
    if let Some(index) = (0..m).find(|&i| direction.get(i) == F::zero()) {
        return Err(AllocError::ZeroDirectionEntry { index });
    }
    let mut out = Vec::with_capacity(scales.len());
    for &c in scales {
        if !(c.is_finite() && c > F::zero()) {
            return Err(AllocError::InvalidScale { value: c.as_f64() });
        }
        let mut total = F::zero();
        for i in 0..m {
            let mono = model.mono(i);
            total += mono.b * (c * tokens * direction.get(i)).powf(-mono.beta);
        }
        out.push(total);
    }
    Ok(out)
}

/// Shared arithmetic for the refinement stage: the transfer matrix is frozen
/// at one budget so ratio evaluation is a tight double loop.
struct Stage2<F: Scalar> {
    alpha: Vec<Vec<F>>,
    eta: Vec<F>,
    p: Vec<F>,
    rho: F,
    m: usize,
}

impl<F: Scalar> Stage2<F> {
    fn new(model: &ClimbModel<F>, p: Vec<F>, tokens: F, rho: F) -> Self {
        let m = model.m();
        let tr = model.transfer();
        let alpha = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| {
                        if i == j {
                            F::zero()
                        } else {
                            tr.b(i, j) + tr.k(i, j) / tokens
                        }
                    })
                    .collect()
            })
            .collect();
        let eta = (0..m).map(|i| tr.eta(i)).collect();
        Self {
            alpha,
            eta,
            p,
            rho,
            m,
        }
    }

    fn ratios(&self, r: &[F]) -> Vec<F> {
        (0..self.m)
            .map(|i| {
                let mut t = F::zero();
                for j in 0..self.m {
                    t += self.alpha[i][j] * r[j];
                }
                r[i] + t * (F::one() - (-self.eta[i] * r[i]).exp())
            })
            .collect()
    }

    /// Expands reduced coordinates: the last share closes the simplex.
    fn expand(&self, y: &[F]) -> Vec<F> {
        let mut r = Vec::with_capacity(self.m);
        let mut sum = F::zero();
        for &v in y {
            r.push(v);
            sum += v;
        }
        r.push(F::one() - sum);
        r
    }

    fn objective(&self, rt: &[F]) -> F {
        let s: F = rt.iter().copied().sum();
        let mut pen = F::zero();
        for i in 0..self.m {
            let d = rt[i] / s - self.p[i];
            pen += d * d;
        }
        -s + self.rho * pen
    }

    /// Barrier objective in reduced coordinates; None outside the domain.
    fn barrier_value(&self, y: &[F], mu: F) -> Option<F> {
        let r = self.expand(y);
        if r.iter().any(|&v| !(v > F::zero() && v.is_finite())) {
            return None;
        }
        let rt = self.ratios(&r);
        if rt.iter().any(|&v| !(v > F::zero() && v.is_finite())) {
            return None;
        }
        let mut logs = F::zero();
        for i in 0..self.m {
            logs += r[i].ln() + rt[i].ln();
        }
        Some(self.objective(&rt) - mu * logs)
    }

    /// Analytic gradient of the barrier objective in reduced coordinates.
    fn barrier_grad(&self, y: &[F], mu: F) -> Option<Vec<F>> {
        let m = self.m;
        let r = self.expand(y);
        if r.iter().any(|&v| !(v > F::zero() && v.is_finite())) {
            return None;
        }
        let rt = self.ratios(&r);
        if rt.iter().any(|&v| !(v > F::zero() && v.is_finite())) {
            return None;
        }
        let s: F = rt.iter().copied().sum();
        let rhat: Vec<F> = rt.iter().map(|&v| v / s).collect();
        let q: F = (0..m).map(|i| (rhat[i] - self.p[i]) * rhat[i]).sum();
        // dF/drtilde_k, including the barrier's -mu ln(rtilde_k).
        let two_rho = self.rho + self.rho;
        let u: Vec<F> = (0..m)
            .map(|k| -F::one() + (two_rho / s) * ((rhat[k] - self.p[k]) - q) - mu / rt[k])
            .collect();
        // Chain through the ratio map, plus the barrier's -mu ln(r_l).
        let mut g_r = vec![F::zero(); m];
        for k in 0..m {
            let mut mass = F::zero();
            for j in 0..m {
                mass += self.alpha[k][j] * r[j];
            }
            let decay = (-self.eta[k] * r[k]).exp();
            let diag = F::one() + mass * self.eta[k] * decay;
            let factor = F::one() - decay;
            for l in 0..m {
                let jkl = if l == k { diag } else { self.alpha[k][l] * factor };
                g_r[l] += u[k] * jkl;
            }
        }
        for l in 0..m {
            g_r[l] = g_r[l] - mu / r[l];
        }
        Some((0..m - 1).map(|i| g_r[i] - g_r[m - 1]).collect())
    }

    fn feasible(&self, r: &[F], margin: F) -> bool {
        if r.iter().any(|&v| !(v >= margin && v.is_finite())) {
            return false;
        }
        self.ratios(r)
            .iter()
            .all(|&v| v >= margin && v.is_finite())
    }
}

/// Walks an infeasible start toward the worst offender's vertex (softened to
/// stay interior) and returns the first feasible blend, scanning 64 steps.
fn nudge_feasible<F: Scalar>(stage: &Stage2<F>, start: &[F], margin: F) -> Option<Vec<F>> {
    if stage.feasible(start, margin) {
        return Some(start.to_vec());
    }
    let m = stage.m;
    let rt = stage.ratios(start);
    let mut worst = 0usize;
    let mut worst_val = F::infinity();
    for i in 0..m {
        let v = start[i].min(rt[i]);
        if v < worst_val {
            worst_val = v;
            worst = i;
        }
    }
    let delta = F::c(1e-3);
    let base = delta / F::from_usize(m).unwrap();
    let target: Vec<F> = (0..m)
        .map(|i| {
            if i == worst {
                F::one() - delta + base
            } else {
                base
            }
        })
        .collect();
    for step in 1..=64usize {
        let t = F::c(step as f64 / 64.0);
        let cand: Vec<F> = start
            .iter()
            .zip(&target)
            .map(|(&a, &b)| (F::one() - t) * a + t * b)
            .collect();
        if stage.feasible(&cand, margin) {
            return Some(cand);
        }
    }
    None
}

/// Stage two: refines the closed-form direction under the interaction model.
///
/// Minimizes `-sum rtilde + rho * |rhat - p|^2` over the open simplex with a
/// shrinking logarithmic barrier on every share and every effective ratio.
/// Starts from the direction, the uniform mixture, and seeded random interior
/// points; the best converged start wins, ties broken by start order.
pub fn optimize_allocation<F: Scalar>(
    model: &ClimbModel<F>,
    weights: &ImportanceWeights<F>,
    token_budget: u64,
    config: &OptimizerConfig<F>,
) -> Result<AllocationResult<F>, AllocError> {
    let m = model.m();
    if m < 2 {
        return Err(AllocError::TooFewLanguages { m });
    }
    if token_budget == 0 {
        return Err(AllocError::Scaling(ScalingError::NonPositiveTokens {
            tokens: 0.0,
        }));
    }
    let tokens = F::c(token_budget as f64);
    let direction = optimal_direction(model, weights, tokens)?;
    let stage = Stage2::new(model, direction.values().to_vec(), tokens, config.rho);

    let mut starts: Vec<Vec<F>> = vec![
        direction.values().to_vec(),
        vec![F::one() / F::from_usize(m).unwrap(); m],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.n_random_starts {
        let raw: Vec<f64> = (0..m)
            .map(|_| {
                let u: f64 = rng.random();
                -(1.0 - u).ln()
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        starts.push(raw.iter().map(|&e| F::c(e / sum)).collect());
    }

    let tried = starts.len();
    let feasible_starts: Vec<Vec<F>> = starts
        .iter()
        .filter_map(|s| nudge_feasible(&stage, s, config.feasibility_margin))
        .collect();
    if feasible_starts.is_empty() {
        return Err(AllocError::InfeasibleStart { tried });
    }

    struct StartOutcome<F: Scalar> {
        y: Vec<F>,
        value: F,
        converged: bool,
    }
    let outcomes: Vec<StartOutcome<F>> = feasible_starts
        .par_iter()
        .map(|start| {
            let mut y: Vec<F> = start[..m - 1].to_vec();
            let mut mu = config.barrier_initial;
            let mut converged = false;
            for _ in 0..config.max_outer {
                let gtol = config.tolerance.max(mu * F::c(0.1));
                let value = |yy: &[F]| stage.barrier_value(yy, mu);
                let grad = |yy: &[F]| stage.barrier_grad(yy, mu);
                if let Some(out) = solver::minimize_dogleg(
                    &value,
                    &grad,
                    &y,
                    config.trust_radius_initial,
                    config.max_inner,
                    gtol,
                ) {
                    y = out.x;
                    converged = out.converged;
                } else {
                    converged = false;
                    break;
                }
                mu = mu * config.barrier_shrink;
            }
            let r = stage.expand(&y);
            let rt = stage.ratios(&r);
            let value = if rt.iter().all(|&v| v > F::zero()) {
                stage.objective(&rt)
            } else {
                F::infinity()
            };
            StartOutcome {
                y,
                value,
                converged,
            }
        })
        .collect();

    let mut winner: Option<&StartOutcome<F>> = None;
    for out in &outcomes {
        if !out.converged || !out.value.is_finite() {
            continue;
        }
        if winner.map_or(true, |w| out.value < w.value) {
            winner = Some(out);
        }
    }
    let Some(win) = winner else {
        return Err(AllocError::NoConvergence {
            context: format!("none of the {} feasible starts converged", feasible_starts.len()),
        });
    };

    let r = stage.expand(&win.y);
    let allocation = make_proportion(&r)?;
    let effective_ratios = stage.ratios(allocation.values());
    let predicted_losses: Vec<F> = (0..m)
        .map(|i| {
            let mono = model.mono(i);
            mono.b * (tokens * effective_ratios[i]).powf(-mono.beta) + mono.e
        })
        .collect();
    Ok(AllocationResult::new(
        model,
        stage.p.clone(),
        allocation,
        effective_ratios,
        predicted_losses,
        win.value,
        config.rho,
        token_budget,
    )?)
}

/// Cap on lattice size for [`grid_oracle`].
pub const GRID_POINT_LIMIT: u128 = 10_000_000;

/// Exact `C(n, k)` in 128-bit arithmetic; None on overflow.
fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - k + 1 + i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

fn for_each_composition<F: FnMut(&[u32])>(total: u32, slots: usize, f: &mut F) {
    fn rec<F: FnMut(&[u32])>(counts: &mut [u32], idx: usize, remaining: u32, f: &mut F) {
        if idx + 1 == counts.len() {
            counts[idx] = remaining;
            f(counts);
            return;
        }
        for v in 0..=remaining {
            counts[idx] = v;
            rec(counts, idx + 1, remaining - v, f);
        }
    }
    let mut counts = vec![0u32; slots];
    rec(&mut counts, 0, total, f);
}

/// Brute-force reference: evaluates the true weighted objective at every
/// lattice mixture `k / n` and returns the best point with its value.
///
/// Mixtures where a positively weighted language has no positive effective
/// ratio are infeasible and skipped. Deterministic regardless of thread
/// count: slices are merged in first-coordinate order and ties on the
/// objective go to the lexicographically smallest count vector.
pub fn grid_oracle<F: Scalar>(
    model: &ClimbModel<F>,
    weights: &ImportanceWeights<F>,
    token_budget: u64,
    n: u32,
) -> Result<(ProportionVector<F>, F), AllocError> {
    let m = model.m();
    if m < 2 {
        return Err(AllocError::TooFewLanguages { m });
    }
    if n == 0 {
        return Err(AllocError::InvalidGridResolution);
    }
    if token_budget == 0 {
        return Err(AllocError::Scaling(ScalingError::NonPositiveTokens {
            tokens: 0.0,
        }));
    }
    let points = binomial_u128(n as u64 + m as u64 - 1, m as u64 - 1)
        .unwrap_or(u128::MAX);
    if points > GRID_POINT_LIMIT {
        return Err(AllocError::TooManyLatticePoints {
            points,
            limit: GRID_POINT_LIMIT,
        });
    }
    let tokens = F::c(token_budget as f64);
    let nf = F::c(n as f64);

    type Best<F> = Option<(F, Vec<u32>)>;
    let better = |a: &(F, Vec<u32>), b: &(F, Vec<u32>)| -> bool {
        a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
    };

    let slices: Vec<Result<Best<F>, AllocError>> = (0..=n)
        .into_par_iter()
        .map(|k0| {
            let mut best: Best<F> = None;
            let mut failure: Option<AllocError> = None;
            for_each_composition(n - k0, m - 1, &mut |rest| {
                if failure.is_some() {
                    return;
                }
                let mut counts = Vec::with_capacity(m);
                counts.push(k0);
                counts.extend_from_slice(rest);
                let shares: Vec<F> = counts.iter().map(|&c| F::c(c as f64) / nf).collect();
                let mixture = match make_proportion(&shares) {
                    Ok(p) => p,
                    Err(e) => {
                        failure = Some(AllocError::Model(e));
                        return;
                    }
                };
                match weighted_objective(model, &mixture, weights, tokens) {
                    Ok(v) if v.is_finite() => {
                        let cand = (v, counts);
                        if best.as_ref().map_or(true, |b| better(&cand, b)) {
                            best = Some(cand);
                        }
                    }
                    Ok(_) => {}
                    Err(ScalingError::NonPositiveEffectiveRatio { .. }) => {}
                    Err(e) => failure = Some(AllocError::Scaling(e)),
                }
            });
            match failure {
                Some(e) => Err(e),
                None => Ok(best),
            }
        })
        .collect();

    let mut best: Best<F> = None;
    for slice in slices {
        if let Some(cand) = slice? {
            if best.as_ref().map_or(true, |b| better(&cand, b)) {
                best = Some(cand);
            }
        }
    }
    let Some((value, counts)) = best else {
        return Err(AllocError::NoFeasiblePoint);
    };
    let shares: Vec<F> = counts.iter().map(|&c| F::c(c as f64) / nf).collect();
    Ok((make_proportion(&shares)?, value))
}

/// Reference mixtures the optimizer is compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineStrategy<'a, F: Scalar = f64> {
    /// Equal share per language.
    Uniform,
    /// The closed-form direction: optimal if languages did not interact.
    Isolated,
    /// Proportional to external corpus counts.
    Natural(&'a [F]),
}

/// Produces a baseline mixture for comparison runs.
pub fn baseline_allocation<F: Scalar>(
    model: &ClimbModel<F>,
    weights: &ImportanceWeights<F>,
    tokens: F,
    strategy: BaselineStrategy<'_, F>,
) -> Result<ProportionVector<F>, AllocError> {
    let m = model.m();
    match strategy {
        BaselineStrategy::Uniform => Ok(ProportionVector::uniform(m)?),
        BaselineStrategy::Isolated => optimal_direction(model, weights, tokens),
        BaselineStrategy::Natural(counts) => {
            if counts.len() != m {
                return Err(AllocError::MissingNaturalCounts {
                    context: format!("got {} counts for {} languages", counts.len(), m),
                });
            }
            if counts.iter().any(|c| !(c.is_finite() && *c >= F::zero())) {
                return Err(AllocError::MissingNaturalCounts {
                    context: "counts must be finite and nonnegative".into(),
                });
            }
            let sum: F = counts.iter().copied().sum();
            if !(sum > F::zero()) {
                return Err(AllocError::MissingNaturalCounts {
                    context: "counts sum to zero".into(),
                });
            }
            let shares: Vec<F> = counts.iter().map(|&c| c / sum).collect();
            Ok(make_proportion(&shares)?)
        }
    }
}
