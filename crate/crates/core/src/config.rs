use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("blank threshold must be <= 0 (log domain), got {0}")]
    BlankThreshold(f64),
    #[error("non-blank threshold must be <= 0 (log domain), got {0}")]
    NonBlankThreshold(f64),
    #[error("beam threshold must be > 0, got {0}")]
    BeamThreshold(f64),
    #[error("ctc alignment weight must be >= 0, got {0}")]
    CtcWeight(f64),
    #[error("context-biasing weight must be finite, got {0}")]
    CbWeight(f64),
}

/// Word spotter hyperparameters. All thresholds are natural-log values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotterConfig {
    /// Bonus added on every non-blank emission.
    pub cb_w: f64,
    /// Weight of token log-probabilities in greedy word scores.
    pub ctc_w: f64,
    /// An empty hypothesis skips a frame whose blank log-prob exceeds this.
    pub beta_thr: f64,
    /// An empty hypothesis may only enter first tokens at or above this.
    pub gamma_thr: f64,
    /// Beam width relative to the frame-best score.
    pub beam_thr: f64,
    /// Disables both prunings and both thresholds when false.
    pub pruning_enabled: bool,
}

impl Default for SpotterConfig {
    fn default() -> Self {
        Self {
            cb_w: 3.0,
            ctc_w: 0.5,
            beta_thr: 0.80f64.ln(),
            gamma_thr: 0.001f64.ln(),
            beam_thr: 7.0,
            pruning_enabled: true,
        }
    }
}

impl SpotterConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.beta_thr <= 0.0) {
            return Err(ConfigError::BlankThreshold(self.beta_thr));
        }
        if !(self.gamma_thr <= 0.0) {
            return Err(ConfigError::NonBlankThreshold(self.gamma_thr));
        }
        if !(self.beam_thr > 0.0) {
            return Err(ConfigError::BeamThreshold(self.beam_thr));
        }
        if !(self.ctc_w >= 0.0) || !self.ctc_w.is_finite() {
            return Err(ConfigError::CtcWeight(self.ctc_w));
        }
        if !self.cb_w.is_finite() {
            return Err(ConfigError::CbWeight(self.cb_w));
        }
        Ok(())
    }

    /// Same configuration with pruning and thresholds off.
    pub fn exhaustive(self) -> Self {
        Self {
            pruning_enabled: false,
            ..self
        }
    }

    pub fn with_cb_w(self, cb_w: f64) -> Self {
        Self { cb_w, ..self }
    }
}
