//! Shared vocabulary: language sets, mixtures, model parameters, run records.
//!
//! Everything downstream (scaling law, fitting, allocation, synthetic worlds)
//! speaks in these types. Constructors validate; fields are read through
//! accessors so invariants survive.

use crate::scalar::Scalar;
use thiserror::Error;

/// Tolerance accepted on a raw proportion sum before rejection.
pub const SUM_TOLERANCE: f64 = 1e-6;
/// Tolerance guaranteed on a proportion sum after renormalization.
pub const NORMALIZED_TOLERANCE: f64 = 1e-9;
/// Most negative entry accepted as floating-point noise (clamped to zero).
pub const NEGATIVE_ENTRY_TOLERANCE: f64 = -1e-12;
/// Index-wise tolerance for domain equality of proportion vectors.
pub const PROPORTION_EQ_TOLERANCE: f64 = 1e-12;

/// Validation failures for the shared types.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("proportion entry {index} is negative ({value:e})")]
    NegativeEntry { index: usize, value: f64 },
    #[error("proportions sum to {sum:.12} which is not 1 within {tolerance:e}")]
    NotNormalized { sum: f64, tolerance: f64 },
    #[error("language set is empty")]
    EmptyLanguages,
    #[error("duplicate language code {code:?}")]
    DuplicateLanguage { code: String },
    #[error("unknown language code {code:?}")]
    UnknownLanguage { code: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {what}")]
    InvalidParameter { what: String },
    #[error("invalid record {run_id:?}: {what}")]
    InvalidRecord { run_id: String, what: String },
    #[error("all importance weights are zero")]
    AllWeightsZero,
    #[error("invariant violation: {what}")]
    InvariantViolation { what: String },
}

/// Ordered set of language codes; the order defines every vector and matrix index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageSet {
    codes: Vec<String>,
}

impl LanguageSet {
    pub fn new<S: Into<String>>(codes: Vec<S>) -> Result<Self, ModelError> {
        let codes: Vec<String> = codes.into_iter().map(Into::into).collect();
        if codes.is_empty() {
            return Err(ModelError::EmptyLanguages);
        }
        for (i, c) in codes.iter().enumerate() {
            if c.is_empty() {
                return Err(ModelError::InvalidParameter {
                    what: format!("language code at index {i} is empty"),
                });
            }
            if codes[..i].contains(c) {
                return Err(ModelError::DuplicateLanguage { code: c.clone() });
            }
        }
        Ok(Self { codes })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn code(&self, index: usize) -> &str {
        &self.codes[index]
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.codes.iter().position(|c| c == code)
    }

    pub fn require(&self, code: &str) -> Result<usize, ModelError> {
        self.index_of(code).ok_or_else(|| ModelError::UnknownLanguage {
            code: code.to_string(),
        })
    }
}

/// Mixture over languages: nonnegative entries summing to 1 within
/// [`NORMALIZED_TOLERANCE`] (guaranteed by construction).
#[derive(Debug, Clone, PartialEq)]
pub struct ProportionVector<F: Scalar = f64> {
    values: Vec<F>,
}

/// Validates raw values and renormalizes them into a [`ProportionVector`].
///
/// Entries below [`NEGATIVE_ENTRY_TOLERANCE`] are rejected; entries in
/// `[NEGATIVE_ENTRY_TOLERANCE, 0)` are clamped to zero. The raw sum must be
/// within [`SUM_TOLERANCE`] of 1; the result is divided by the sum so the
/// stored vector is exactly normalized up to rounding.
pub fn make_proportion<F: Scalar>(values: &[F]) -> Result<ProportionVector<F>, ModelError> {
    if values.is_empty() {
        return Err(ModelError::EmptyLanguages);
    }
    let mut v = Vec::with_capacity(values.len());
    for (index, &x) in values.iter().enumerate() {
        if x < F::c(NEGATIVE_ENTRY_TOLERANCE) {
            return Err(ModelError::NegativeEntry {
                index,
                value: x.as_f64(),
            });
        }
        v.push(if x < F::zero() { F::zero() } else { x });
    }
    let sum: F = v.iter().copied().sum();
    if !((sum - F::one()).abs() <= F::c(SUM_TOLERANCE)) {
        return Err(ModelError::NotNormalized {
            sum: sum.as_f64(),
            tolerance: SUM_TOLERANCE,
        });
    }
    for x in &mut v {
        *x = *x / sum;
    }
    Ok(ProportionVector { values: v })
}

impl<F: Scalar> ProportionVector<F> {
    /// Uniform mixture 1/m.
    pub fn uniform(m: usize) -> Result<Self, ModelError> {
        let w = F::one() / F::from_usize(m).unwrap_or_else(F::one);
        make_proportion(&vec![w; m.max(1)])
    }

    /// Vertex mixture: everything on language `index`.
    pub fn vertex(m: usize, index: usize) -> Result<Self, ModelError> {
        if index >= m {
            return Err(ModelError::DimensionMismatch {
                expected: m,
                got: index,
            });
        }
        let mut v = vec![F::zero(); m];
        v[index] = F::one();
        make_proportion(&v)
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn get(&self, index: usize) -> F {
        self.values[index]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of strictly positive entries.
    pub fn support(&self) -> usize {
        self.values.iter().filter(|x| **x > F::zero()).count()
    }

    /// Domain equality: index-wise within [`PROPORTION_EQ_TOLERANCE`].
    pub fn approx_eq(&self, other: &Self) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| (*a - *b).abs() <= F::c(PROPORTION_EQ_TOLERANCE))
    }
}

/// Monolingual law L(D) = B / D^beta + E.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonoScalingParams<F: Scalar = f64> {
    /// Reducible-term multiplier B, strictly positive.
    pub b: F,
    /// Data exponent beta in (0, 2].
    pub beta: F,
    /// Irreducible floor E, nonnegative.
    pub e: F,
}

impl<F: Scalar> MonoScalingParams<F> {
    pub fn new(b: F, beta: F, e: F) -> Result<Self, ModelError> {
        if !(b.is_finite() && b > F::zero()) {
            return Err(ModelError::InvalidParameter {
                what: format!("B must be finite and positive, got {}", b.as_f64()),
            });
        }
        if !(beta.is_finite() && beta > F::zero() && beta <= F::c(2.0)) {
            return Err(ModelError::InvalidParameter {
                what: format!("beta must lie in (0, 2], got {}", beta.as_f64()),
            });
        }
        if !(e.is_finite() && e >= F::zero()) {
            return Err(ModelError::InvalidParameter {
                what: format!("E must be finite and nonnegative, got {}", e.as_f64()),
            });
        }
        Ok(Self { b, beta, e })
    }
}

/// Lower bound (exclusive) for the saturation rate eta.
pub const ETA_MIN: f64 = 1e-3;
/// Upper bound (inclusive) for the saturation rate eta.
pub const ETA_MAX: f64 = 50.0;

/// Cross-lingual transfer parameters.
///
/// `b` and `k` are m-by-m matrices indexed `[target][source]`: the strength of
/// source j acting on target i at budget D is `b[i][j] + k[i][j] / D`. Both
/// entries may be negative (interference). Diagonals are identically zero.
/// `eta[i]` is target i's saturation rate in ([`ETA_MIN`], [`ETA_MAX`]].
#[derive(Debug, Clone, PartialEq)]
pub struct TransferParams<F: Scalar = f64> {
    b: Vec<Vec<F>>,
    k: Vec<Vec<F>>,
    eta: Vec<F>,
}

impl<F: Scalar> TransferParams<F> {
    pub fn new(b: Vec<Vec<F>>, k: Vec<Vec<F>>, eta: Vec<F>) -> Result<Self, ModelError> {
        let m = eta.len();
        if m == 0 {
            return Err(ModelError::EmptyLanguages);
        }
        for (name, mat) in [("b", &b), ("k", &k)] {
            if mat.len() != m {
                return Err(ModelError::DimensionMismatch {
                    expected: m,
                    got: mat.len(),
                });
            }
            for (i, row) in mat.iter().enumerate() {
                if row.len() != m {
                    return Err(ModelError::DimensionMismatch {
                        expected: m,
                        got: row.len(),
                    });
                }
                for (j, &x) in row.iter().enumerate() {
                    if !x.is_finite() {
                        return Err(ModelError::InvalidParameter {
                            what: format!("{name}[{i}][{j}] is not finite"),
                        });
                    }
                    if i == j && x != F::zero() {
                        return Err(ModelError::InvalidParameter {
                            what: format!("{name}[{i}][{i}] must be zero, got {}", x.as_f64()),
                        });
                    }
                }
            }
        }
        for (i, &x) in eta.iter().enumerate() {
            if !(x.is_finite() && x > F::c(ETA_MIN) && x <= F::c(ETA_MAX)) {
                return Err(ModelError::InvalidParameter {
                    what: format!(
                        "eta[{i}] must lie in ({ETA_MIN:e}, {ETA_MAX}], got {}",
                        x.as_f64()
                    ),
                });
            }
        }
        Ok(Self { b, k, eta })
    }

    /// No transfer at all: b = k = 0, eta = 1.
    pub fn zero(m: usize) -> Result<Self, ModelError> {
        Self::new(
            vec![vec![F::zero(); m]; m],
            vec![vec![F::zero(); m]; m],
            vec![F::one(); m],
        )
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    /// Offset term of source -> target strength.
    pub fn b(&self, target: usize, source: usize) -> F {
        self.b[target][source]
    }

    /// Budget-scaled term of source -> target strength.
    pub fn k(&self, target: usize, source: usize) -> F {
        self.k[target][source]
    }

    pub fn eta(&self, target: usize) -> F {
        self.eta[target]
    }

    pub fn b_matrix(&self) -> &[Vec<F>] {
        &self.b
    }

    pub fn k_matrix(&self) -> &[Vec<F>] {
        &self.k
    }

    pub fn etas(&self) -> &[F] {
        &self.eta
    }
}

/// Fitted (or ground-truth) model: per-language monolingual laws plus transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct ClimbModel<F: Scalar = f64> {
    languages: LanguageSet,
    mono: Vec<MonoScalingParams<F>>,
    transfer: TransferParams<F>,
}

impl<F: Scalar> ClimbModel<F> {
    pub fn new(
        languages: LanguageSet,
        mono: Vec<MonoScalingParams<F>>,
        transfer: TransferParams<F>,
    ) -> Result<Self, ModelError> {
        let m = languages.len();
        if mono.len() != m {
            return Err(ModelError::DimensionMismatch {
                expected: m,
                got: mono.len(),
            });
        }
        if transfer.len() != m {
            return Err(ModelError::DimensionMismatch {
                expected: m,
                got: transfer.len(),
            });
        }
        Ok(Self {
            languages,
            mono,
            transfer,
        })
    }

    pub fn m(&self) -> usize {
        self.languages.len()
    }

    pub fn languages(&self) -> &LanguageSet {
        &self.languages
    }

    pub fn mono(&self, index: usize) -> &MonoScalingParams<F> {
        &self.mono[index]
    }

    pub fn mono_all(&self) -> &[MonoScalingParams<F>] {
        &self.mono
    }

    pub fn transfer(&self) -> &TransferParams<F> {
        &self.transfer
    }
}

/// One logged measurement: a training run's mixture, budget, checkpoint
/// fraction, and the validation loss of one language at that checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord<F: Scalar = f64> {
    pub run_id: String,
    /// Nominal training budget in tokens.
    pub token_budget: u64,
    /// Checkpoint position in (0, 1]; the tokens seen so far are
    /// `step_fraction * token_budget`.
    pub step_fraction: F,
    /// Full training mixture of the run.
    pub mixture: ProportionVector<F>,
    /// Language code the loss was measured on.
    pub language: String,
    pub val_loss: F,
}

impl<F: Scalar> ExperimentRecord<F> {
    pub fn new(
        run_id: impl Into<String>,
        token_budget: u64,
        step_fraction: F,
        mixture: ProportionVector<F>,
        language: impl Into<String>,
        val_loss: F,
    ) -> Result<Self, ModelError> {
        let run_id = run_id.into();
        let language = language.into();
        let reject = |what: String| ModelError::InvalidRecord {
            run_id: run_id.clone(),
            what,
        };
        if run_id.is_empty() {
            return Err(ModelError::InvalidRecord {
                run_id,
                what: "run_id is empty".into(),
            });
        }
        if token_budget == 0 {
            return Err(reject("token_budget must be positive".into()));
        }
        if !(step_fraction.is_finite()
            && step_fraction > F::zero()
            && step_fraction <= F::one())
        {
            return Err(reject(format!(
                "step_fraction must lie in (0, 1], got {}",
                step_fraction.as_f64()
            )));
        }
        if language.is_empty() {
            return Err(reject("language code is empty".into()));
        }
        if !(val_loss.is_finite() && val_loss > F::zero()) {
            return Err(reject(format!(
                "val_loss must be finite and positive, got {}",
                val_loss.as_f64()
            )));
        }
        Ok(Self {
            run_id,
            token_budget,
            step_fraction,
            mixture,
            language,
            val_loss,
        })
    }

    /// Tokens actually seen at this checkpoint.
    pub fn effective_tokens(&self) -> F {
        F::c(self.token_budget as f64) * self.step_fraction
    }

    /// True when the run's mixture puts everything on a single language.
    pub fn is_monolingual(&self) -> bool {
        self.mixture.support() == 1
    }
}

/// Per-language importance weights for the evaluation objective.
/// Nonnegative, at least one strictly positive; normalization is not required.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceWeights<F: Scalar = f64> {
    omega: Vec<F>,
}

impl<F: Scalar> ImportanceWeights<F> {
    pub fn new(omega: Vec<F>) -> Result<Self, ModelError> {
        if omega.is_empty() {
            return Err(ModelError::EmptyLanguages);
        }
        for (i, &w) in omega.iter().enumerate() {
            if !(w.is_finite() && w >= F::zero()) {
                return Err(ModelError::InvalidParameter {
                    what: format!(
                        "weight {i} must be finite and nonnegative, got {}",
                        w.as_f64()
                    ),
                });
            }
        }
        if omega.iter().all(|w| *w == F::zero()) {
            return Err(ModelError::AllWeightsZero);
        }
        Ok(Self { omega })
    }

    pub fn uniform(m: usize) -> Result<Self, ModelError> {
        Self::new(vec![F::one(); m.max(1)])
    }

    pub fn values(&self) -> &[F] {
        &self.omega
    }

    pub fn get(&self, index: usize) -> F {
        self.omega[index]
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }
}

/// Output of the two-stage allocation optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult<F: Scalar = f64> {
    /// Direction stage output p: nonnegative, sums to 1 within
    /// [`NORMALIZED_TOLERANCE`]. Entries are strictly positive whenever every
    /// importance weight is positive.
    pub direction: Vec<F>,
    /// Optimized mixture r*.
    pub allocation: ProportionVector<F>,
    /// Effective ratios at r* (may exceed 1 under positive transfer).
    pub effective_ratios: Vec<F>,
    /// Per-language predicted losses at r*.
    pub predicted_losses: Vec<F>,
    /// Surrogate objective value at r*.
    pub objective_value: F,
    /// Penalty strength used.
    pub rho: F,
    pub token_budget: u64,
}

impl<F: Scalar> AllocationResult<F> {
    /// Validates the cross-field invariants against the model that produced it.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &ClimbModel<F>,
        direction: Vec<F>,
        allocation: ProportionVector<F>,
        effective_ratios: Vec<F>,
        predicted_losses: Vec<F>,
        objective_value: F,
        rho: F,
        token_budget: u64,
    ) -> Result<Self, ModelError> {
        let m = model.m();
        for (name, len) in [
            ("direction", direction.len()),
            ("allocation", allocation.len()),
            ("effective_ratios", effective_ratios.len()),
            ("predicted_losses", predicted_losses.len()),
        ] {
            if len != m {
                return Err(ModelError::InvariantViolation {
                    what: format!("{name} has length {len}, expected {m}"),
                });
            }
        }
        let sum: F = direction.iter().copied().sum();
        if !((sum - F::one()).abs() <= F::c(NORMALIZED_TOLERANCE)) {
            return Err(ModelError::InvariantViolation {
                what: format!("direction sums to {}", sum.as_f64()),
            });
        }
        if let Some((i, &d)) = direction
            .iter()
            .enumerate()
            .find(|(_, d)| !(**d >= F::zero()))
        {
            return Err(ModelError::InvariantViolation {
                what: format!("direction[{i}] = {} is negative", d.as_f64()),
            });
        }
        for i in 0..m {
            if effective_ratios[i] > F::zero() && predicted_losses[i] < model.mono(i).e {
                return Err(ModelError::InvariantViolation {
                    what: format!(
                        "predicted loss {} for language {} is below its floor {}",
                        predicted_losses[i].as_f64(),
                        model.languages().code(i),
                        model.mono(i).e.as_f64()
                    ),
                });
            }
        }
        if !objective_value.is_finite() {
            return Err(ModelError::InvariantViolation {
                what: "objective value is not finite".into(),
            });
        }
        if token_budget == 0 {
            return Err(ModelError::InvariantViolation {
                what: "token budget must be positive".into(),
            });
        }
        Ok(Self {
            direction,
            allocation,
            effective_ratios,
            predicted_losses,
            objective_value,
            rho,
            token_budget,
        })
    }
}
