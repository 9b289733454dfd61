use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the amplitude interpolation rate is chosen for each transfer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMode {
    /// Drawn uniformly from `(0, 1)` per transferred image.
    Random,
    Fixed(f64),
}

/// Component switches. Each flag removes one part of the pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    pub no_sa: bool,
    pub no_st: bool,
    pub no_lrit: bool,
    pub no_kd: bool,
    pub no_dt: bool,
}

impl Ablations {
    pub const NAMES: [&'static str; 5] = ["no_sa", "no_st", "no_lrit", "no_kd", "no_dt"];

    /// Turns on the named switch.
    pub fn set(&mut self, name: &str) -> Result<()> {
        match name {
            "no_sa" => self.no_sa = true,
            "no_st" => self.no_st = true,
            "no_lrit" => self.no_lrit = true,
            "no_kd" => self.no_kd = true,
            "no_dt" => self.no_dt = true,
            other => return Err(Error::Config(format!("unknown ablation `{other}`"))),
        }
        Ok(())
    }

    pub fn only(name: &str) -> Result<Self> {
        let mut a = Self::default();
        a.set(name)?;
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Last epoch of the teachers-only phase.
    pub tau: usize,
    pub total_epochs: usize,
    pub lr: f64,
    /// Half-extent of the low-frequency mask as a fraction of each side.
    pub alpha: f64,
    pub lambda_mode: LambdaMode,
    pub seed: u64,
    /// Source images per optimizer step.
    pub batch_size: usize,
    pub ablations: Ablations,
    /// Pixels with probability strictly above this are foreground.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 200,
            total_epochs: 600,
            lr: 1e-3,
            alpha: 0.2,
            lambda_mode: LambdaMode::Random,
            seed: 0,
            batch_size: 1,
            ablations: Ablations::default(),
            threshold: 0.5,
        }
    }
}

/// Learning rate of the desk schedule. The short schedule needs larger steps
/// than the full-length default to converge.
pub const DESK_LR: f64 = 3e-3;

impl TrainConfig {
    /// Small schedule used by the desk-scale benchmark.
    pub fn desk() -> Self {
        Self {
            tau: 30,
            total_epochs: 120,
            lr: DESK_LR,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.tau == 0 || self.tau >= self.total_epochs {
            return bad(format!(
                "need 0 < tau < total_epochs, got tau={} total_epochs={}",
                self.tau, self.total_epochs
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return bad(format!("alpha must be in (0, 0.5], got {}", self.alpha));
        }
        if let LambdaMode::Fixed(l) = self.lambda_mode {
            if !(0.0..=1.0).contains(&l) {
                return bad(format!("fixed lambda must be in [0, 1], got {l}"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return bad(format!("threshold must be in [0, 1), got {}", self.threshold));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Network input channels: the image plus four LRIT planes unless ablated.
    pub fn in_channels(&self) -> usize {
        if self.ablations.no_lrit {
            1
        } else {
            5
        }
    }
}
