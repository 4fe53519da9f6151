//! Focal loss for the imbalanced entailment/contradiction objective.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Label;

const CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("probability {0} is outside [0, 1]")]
    Probability(f64),
    #[error("gamma must be non-negative, got {0}")]
    Gamma(f64),
    #[error("alpha must lie in [0, 1], got {0}")]
    Alpha(f64),
    #[error("class weights must be positive, got ({0}, {1})")]
    Weights(f64, f64),
}

/// Focusing parameter, class balance factor and per-class weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalLossParams {
    pub gamma: f64,
    /// Balance factor for the entailment class; contradiction gets 1 - alpha.
    pub alpha: f64,
    /// (entailment, contradiction) weights.
    pub class_weights: (f64, f64),
}

impl Default for FocalLossParams {
    /// gamma 2, alpha 0.75, weights 2.7 for the minority entailment class
    /// and 1.0 for contradiction.
    fn default() -> Self {
        Self { gamma: 2.0, alpha: 0.75, class_weights: (2.7, 1.0) }
    }
}

impl FocalLossParams {
    pub fn new(gamma: f64, alpha: f64, class_weights: (f64, f64)) -> Result<Self, DomainError> {
        let p = Self { gamma, alpha, class_weights };
        p.validate()?;
        Ok(p)
    }

    /// Plain cross-entropy: gamma 0, alpha 1 and unit weights.
    pub fn cross_entropy() -> Self {
        Self { gamma: 0.0, alpha: 1.0, class_weights: (1.0, 1.0) }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.gamma.is_nan() || self.gamma < 0.0 || !self.gamma.is_finite() {
            return Err(DomainError::Gamma(self.gamma));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(DomainError::Alpha(self.alpha));
        }
        let (a, b) = self.class_weights;
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(DomainError::Weights(a, b));
        }
        Ok(())
    }
}

/// `w_y * alpha_t * (1 - p_t)^gamma * -ln(p_t)`, where `p` is the predicted
/// entailment probability, `p_t` the probability of the true label and
/// `alpha_t` is alpha for entailment and 1 - alpha for contradiction.
/// `p` is clamped 1e-12 away from 0 and 1.
pub fn focal_loss(p: f64, y: Label, params: &FocalLossParams) -> Result<f64, DomainError> {
    params.validate()?;
    if !(0.0..=1.0).contains(&p) {
        return Err(DomainError::Probability(p));
    }
    let p = p.clamp(CLAMP, 1.0 - CLAMP);
    let (p_t, alpha_t, weight) = match y {
        Label::Entailment => (p, params.alpha, params.class_weights.0),
        Label::Contradiction => (1.0 - p, 1.0 - params.alpha, params.class_weights.1),
    };
    Ok(weight * alpha_t * (1.0 - p_t).powf(params.gamma) * -p_t.ln())
}
