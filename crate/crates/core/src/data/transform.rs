use serde::{Deserialize, Serialize};

use super::LearningCurve;
use crate::error::{Error, Result};

/// Z-score on targets, log10 on inputs. Fitted on a training view only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformState {
    pub y_mean: f64,
    /// Population standard deviation of the training targets.
    pub y_std: f64,
}

impl TransformState {
    pub const X_LOG_BASE: f64 = 10.0;

    pub fn fit(train: &[LearningCurve]) -> Result<Self> {
        Self::fit_values(train.iter().flat_map(|c| c.y.iter().copied()))
    }

    pub fn fit_values(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let ys: Vec<f64> = values.into_iter().collect();
        if ys.len() < 2 {
            return Err(Error::invalid("need at least 2 training points to fit a transform"));
        }
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::ConstantTarget);
        }
        Ok(TransformState {
            y_mean: mean,
            y_std: std,
        })
    }

    pub fn y(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }

    pub fn invert_y(&self, z: f64) -> f64 {
        z * self.y_std + self.y_mean
    }

    pub fn invert_var(&self, v: f64) -> f64 {
        v * self.y_std * self.y_std
    }

    pub fn x(&self, x: f64) -> f64 {
        x.log10()
    }

    pub fn invert_x(&self, u: f64) -> f64 {
        Self::X_LOG_BASE.powf(u)
    }
}
