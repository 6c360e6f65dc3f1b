//! Early-exit gate: a two-unit dense softmax evaluated on the sensor after `g`
//! completes. Logit 0 is "suppress", logit 1 is "activate the host".

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{dense_forward, exit_spec, Activation, FeatureVector, LayerWeights};

pub const SUPPRESS: usize = 0;
pub const ACTIVATE: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExitHead {
    weights: LayerWeights<f32>,
    in_dim: usize,
    threshold: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Activate,
    Suppress,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitDecision {
    pub gate: Gate,
    /// Softmax probability of the activate class.
    pub confidence: f32,
}

impl ExitHead {
    pub fn new(weights: LayerWeights<f32>, in_dim: usize, threshold: f32) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "exit threshold must lie in (0, 1), got {threshold}"
            )));
        }
        match &weights {
            LayerWeights::Dense { matrix, bias }
                if matrix.len() == 2 * in_dim && bias.len() == 2 => {}
            _ => {
                return Err(Error::mismatch(
                    "exit head",
                    format!("dense {in_dim}->2"),
                    format!("{} parameters", weights.values().count()),
                ))
            }
        }
        if weights.values().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("exit head weights".into()));
        }
        Ok(ExitHead {
            weights,
            in_dim,
            threshold,
        })
    }

    pub fn zeros(in_dim: usize, threshold: f32) -> Result<Self> {
        Self::new(LayerWeights::zeros(&exit_spec(in_dim)), in_dim, threshold)
    }

    pub fn weights(&self) -> &LayerWeights<f32> {
        &self.weights
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn threshold(&self) -> f32 {
        self.threshold
    }

    pub fn with_threshold(&self, threshold: f32) -> Result<Self> {
        Self::new(self.weights.clone(), self.in_dim, threshold)
    }

    /// Raw logits `[suppress, activate]`.
    pub fn logits(&self, features: &FeatureVector) -> Result<Vec<f32>> {
        if features.len() != self.in_dim {
            return Err(Error::mismatch(
                "exit head input",
                self.in_dim,
                features.len(),
            ));
        }
        let LayerWeights::Dense { matrix, bias } = &self.weights else {
            unreachable!("checked in ExitHead::new")
        };
        dense_forward(2, Activation::None, matrix, bias, &features.values)
    }
}

/// Activate iff the activate-class probability reaches the threshold; a tie
/// at exactly the threshold activates.
pub fn ee_decide(head: &ExitHead, features: &FeatureVector) -> Result<ExitDecision> {
    Ok(decide_from_logits(&head.logits(features)?, head.threshold))
}

pub(crate) fn decide_from_logits(logits: &[f32], threshold: f32) -> ExitDecision {
    let p = crate::model::softmax(logits);
    let confidence = p[ACTIVATE];
    ExitDecision {
        gate: if confidence >= threshold {
            Gate::Activate
        } else {
            Gate::Suppress
        },
        confidence,
    }
}
