//! Forward model: monolingual law, effective-ratio machinery, loss prediction.
//!
//! The monolingual law is `L(D) = B / D^beta + E`. In a multilingual run with
//! mixture r, language i behaves as if trained on `D * rtilde_i` tokens, where
//! the effective ratio
//!
//! ```text
//! rtilde_i = r_i + (sum_{j != i} alpha_{j->i}(D) * r_j) * (1 - exp(-eta_i * r_i))
//! alpha_{j->i}(D) = b[i][j] + k[i][j] / D
//! ```
//!
//! folds in cross-lingual transfer. Transfer strengths may be negative, so an
//! effective ratio can be nonpositive; prediction then has no defined loss and
//! the operations here return typed errors instead of NaNs.

use crate::model::{ClimbModel, ImportanceWeights, ModelError, MonoScalingParams, ProportionVector};
use crate::scalar::Scalar;
use thiserror::Error;

/// Observed losses this close to (or below) the floor E cannot be inverted.
pub const FLOOR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ScalingError {
    #[error("token count must be positive, got {tokens:e}")]
    NonPositiveTokens { tokens: f64 },
    #[error("observed loss {loss} is at or below the floor {floor} (within {tolerance:e})")]
    LossAtOrBelowFloor {
        loss: f64,
        floor: f64,
        tolerance: f64,
    },
    #[error("effective ratio {ratio:e} for language {language} is not positive")]
    NonPositiveEffectiveRatio { language: usize, ratio: f64 },
    #[error("share {index} must be finite and nonnegative, got {value}")]
    InvalidShare { index: usize, value: f64 },
    #[error("language index {index} out of range for {len} languages")]
    IndexOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check_tokens<F: Scalar>(tokens: F) -> Result<(), ScalingError> {
    if tokens.is_finite() && tokens > F::zero() {
        Ok(())
    } else {
        Err(ScalingError::NonPositiveTokens {
            tokens: tokens.as_f64(),
        })
    }
}

/// Monolingual loss `B / tokens^beta + E`.
pub fn mono_loss<F: Scalar>(params: &MonoScalingParams<F>, tokens: F) -> Result<F, ScalingError> {
    check_tokens(tokens)?;
    Ok(params.b * tokens.powf(-params.beta) + params.e)
}

/// Inverts the monolingual law: the ratio x such that a monolingual model of
/// this language trained on `tokens * x` tokens reaches `observed_loss`.
///
/// `x = (1 / tokens) * (B / (observed_loss - E))^(1 / beta)`.
pub fn interaction_ratio_from_loss<F: Scalar>(
    params: &MonoScalingParams<F>,
    tokens: F,
    observed_loss: F,
) -> Result<F, ScalingError> {
    check_tokens(tokens)?;
    let excess = observed_loss - params.e;
    if !(excess.is_finite() && excess > F::c(FLOOR_TOLERANCE)) {
        return Err(ScalingError::LossAtOrBelowFloor {
            loss: observed_loss.as_f64(),
            floor: params.e.as_f64(),
            tolerance: FLOOR_TOLERANCE,
        });
    }
    Ok((params.b / excess).powf(F::one() / params.beta) / tokens)
}

/// Budget-dependent transfer strength `b + k / tokens`.
pub fn transfer_strength<F: Scalar>(b: F, k: F, tokens: F) -> Result<F, ScalingError> {
    check_tokens(tokens)?;
    Ok(b + k / tokens)
}

fn check_shares<F: Scalar>(model: &ClimbModel<F>, shares: &[F], target: usize) -> Result<(), ScalingError> {
    let m = model.m();
    if shares.len() != m {
        return Err(ScalingError::Model(ModelError::DimensionMismatch {
            expected: m,
            got: shares.len(),
        }));
    }
    if target >= m {
        return Err(ScalingError::IndexOutOfRange {
            index: target,
            len: m,
        });
    }
    for (index, &s) in shares.iter().enumerate() {
        if !(s.is_finite() && s >= F::zero()) {
            return Err(ScalingError::InvalidShare {
                index,
                value: s.as_f64(),
            });
        }
    }
    Ok(())
}

/// Effective ratio for `target` given raw nonnegative shares (no simplex
/// requirement). The boundary cases are algebraically exact: the result is
/// `shares[target]` whenever the transfer factor or companion mass vanishes.
pub fn effective_ratio_raw<F: Scalar>(
    model: &ClimbModel<F>,
    shares: &[F],
    target: usize,
    tokens: F,
) -> Result<F, ScalingError> {
    check_tokens(tokens)?;
    check_shares(model, shares, target)?;
    let t = transfer_mass(model, shares, target, tokens);
    let r = shares[target];
    let factor = F::one() - (-model.transfer().eta(target) * r).exp();
    Ok(r + t * factor)
}

/// Partial derivative of the effective ratio with respect to the target's own
/// share, holding companion shares fixed:
/// `1 + (sum_{j != i} alpha_{j->i} r_j) * eta_i * exp(-eta_i * r_i)`.
pub fn effective_ratio_partial<F: Scalar>(
    model: &ClimbModel<F>,
    shares: &[F],
    target: usize,
    tokens: F,
) -> Result<F, ScalingError> {
    check_tokens(tokens)?;
    check_shares(model, shares, target)?;
    let t = transfer_mass(model, shares, target, tokens);
    let eta = model.transfer().eta(target);
    Ok(F::one() + t * eta * (-eta * shares[target]).exp())
}

/// Companion transfer mass `sum_{j != target} alpha_{j->target}(tokens) * shares[j]`.
fn transfer_mass<F: Scalar>(model: &ClimbModel<F>, shares: &[F], target: usize, tokens: F) -> F {
    let tr = model.transfer();
    let mut t = F::zero();
    for j in 0..model.m() {
        if j != target {
            t += (tr.b(target, j) + tr.k(target, j) / tokens) * shares[j];
        }
    }
    t
}

/// Effective ratio of `target` under a proper mixture.
pub fn predicted_ratio<F: Scalar>(
    model: &ClimbModel<F>,
    mixture: &ProportionVector<F>,
    target: usize,
    tokens: F,
) -> Result<F, ScalingError> {
    effective_ratio_raw(model, mixture.values(), target, tokens)
}

/// Effective ratios of every language under a proper mixture.
pub fn predicted_ratios<F: Scalar>(
    model: &ClimbModel<F>,
    mixture: &ProportionVector<F>,
    tokens: F,
) -> Result<Vec<F>, ScalingError> {
    (0..model.m())
        .map(|i| effective_ratio_raw(model, mixture.values(), i, tokens))
        .collect()
}

/// Predicted validation loss of `target` under `mixture` at `tokens`:
/// the monolingual law evaluated at the attributed budget `tokens * rtilde`.
pub fn predicted_loss<F: Scalar>(
    model: &ClimbModel<F>,
    mixture: &ProportionVector<F>,
    target: usize,
    tokens: F,
) -> Result<F, ScalingError> {
    let ratio = predicted_ratio(model, mixture, target, tokens)?;
    if !(ratio > F::zero()) {
        return Err(ScalingError::NonPositiveEffectiveRatio {
            language: target,
            ratio: ratio.as_f64(),
        });
    }
    mono_loss(model.mono(target), tokens * ratio)
}

/// Importance-weighted total loss `sum_i omega_i * L_i`.
///
/// Languages with zero weight are skipped entirely, so an undefined loss there
/// does not error; a nonpositive effective ratio on a positively weighted
/// language propagates as [`ScalingError::NonPositiveEffectiveRatio`].
pub fn weighted_objective<F: Scalar>(
    model: &ClimbModel<F>,
    mixture: &ProportionVector<F>,
    weights: &ImportanceWeights<F>,
    tokens: F,
) -> Result<F, ScalingError> {
    if weights.len() != model.m() {
        return Err(ScalingError::Model(ModelError::DimensionMismatch {
            expected: model.m(),
            got: weights.len(),
        }));
    }
    let mut total = F::zero();
    for i in 0..model.m() {
        let w = weights.get(i);
        if w == F::zero() {
            continue;
        }
        total += w * predicted_loss(model, mixture, i, tokens)?;
    }
    Ok(total)
}
