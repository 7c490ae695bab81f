//! Point metrics, Gaussian predictive density, and the area between two
//! log-log scaling-law lines.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::ScalingLaw;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Predictive variances are floored here before taking logs.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Which points of each curve a metric covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalSlice {
    All,
    LastK(usize),
}

impl EvalSlice {
    pub fn apply<'a, T>(&self, v: &'a [T]) -> Result<&'a [T]> {
        match *self {
            EvalSlice::All => Ok(v),
            EvalSlice::LastK(0) => Err(Error::invalid("last_k slice needs k >= 1")),
            EvalSlice::LastK(k) => Ok(&v[v.len().saturating_sub(k)..]),
        }
    }
}

impl fmt::Display for EvalSlice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalSlice::All => f.write_str("all"),
            EvalSlice::LastK(k) => write!(f, "last{k}"),
        }
    }
}

impl std::str::FromStr for EvalSlice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(EvalSlice::All);
        }
        let k = s
            .strip_prefix("last")
            .map(|r| r.trim_start_matches(['_', '-']))
            .and_then(|r| r.parse::<usize>().ok())
            .filter(|&k| k >= 1)
            .ok_or_else(|| Error::invalid(format!("bad slice `{s}` (expected all or lastK)")))?;
        Ok(EvalSlice::LastK(k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
}

pub fn point_metrics(y_true: &[f64], y_pred: &[f64], slice: EvalSlice) -> Result<PointMetrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} truths vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let t = slice.apply(y_true)?;
    let p = slice.apply(y_pred)?;
    if t.is_empty() {
        return Err(Error::invalid("empty metric slice"));
    }
    let n = t.len() as f64;
    let mse = t.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    let mae = t.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    Ok(PointMetrics {
        mse,
        mae,
        rmse: mse.sqrt(),
    })
}

/// Mean over points of `0.5 ln(2 pi s2) + (y - m)^2 / (2 s2)`.
pub fn mnlpd(y_true: &[f64], means: &[f64], variances: &[f64], slice: EvalSlice) -> Result<f64> {
    if y_true.len() != means.len() || means.len() != variances.len() {
        return Err(Error::invalid("mnlpd inputs differ in length"));
    }
    if let Some(v) = variances.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::invalid(format!("predictive variance must be positive, got {v}")));
    }
    let (t, m, v) = (slice.apply(y_true)?, slice.apply(means)?, slice.apply(variances)?);
    if t.is_empty() {
        return Err(Error::invalid("empty metric slice"));
    }
    let total: f64 = t
        .iter()
        .zip(m)
        .zip(v)
        .map(|((y, mu), s2)| {
            let s2 = s2.max(VARIANCE_FLOOR);
            HALF_LN_2PI + 0.5 * s2.ln() + (y - mu).powi(2) / (2.0 * s2)
        })
        .sum();
    Ok(total / t.len() as f64)
}

/// `integral_{lo}^{hi} |(b1 - b1') u + (b0 - b0')| du`, split at the sign
/// change when it falls inside the window. Bounds are in log10 compute.
pub fn abc_lines(a: &ScalingLaw, b: &ScalingLaw, lo: f64, hi: f64) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::invalid(format!("AbC range [{lo}, {hi}] is empty")));
    }
    let slope = a.beta1 - b.beta1;
    let icpt = a.beta0 - b.beta0;
    let prim = |u: f64| 0.5 * slope * u * u + icpt * u;
    let seg = |u0: f64, u1: f64| (prim(u1) - prim(u0)).abs();
    if slope != 0.0 {
        let root = -icpt / slope;
        if root > lo && root < hi {
            return Ok(seg(lo, root) + seg(root, hi));
        }
    }
    Ok(seg(lo, hi))
}

/// One curve's predictions aligned with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveEval<'a> {
    pub y_true: &'a [f64],
    pub means: &'a [f64],
    /// `None` for point predictors, which then report no MNLPD.
    pub variances: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub slice: EvalSlice,
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    pub mnlpd: Option<f64>,
    pub n_curves: usize,
    pub n_points: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "model,split,slice,mse,mae,rmse,mnlpd,n_curves,n_points";

    pub fn csv_row(&self, model: &str, split: &str) -> String {
        format!(
            "{model},{split},{},{},{},{},{},{},{}",
            self.slice,
            self.mse,
            self.mae,
            self.rmse,
            self.mnlpd.map(|v| v.to_string()).unwrap_or_default(),
            self.n_curves,
            self.n_points
        )
    }
}

/// Per-curve metrics averaged across curves, one report per slice. The
/// aggregated RMSE is the root of the aggregated MSE.
pub fn eval_report(curves: &[CurveEval], slices: &[EvalSlice]) -> Result<Vec<MetricReport>> {
    if curves.is_empty() {
        return Err(Error::invalid("no curves to evaluate"));
    }
    slices
        .iter()
        .map(|&slice| {
            let mut mse = 0.0;
            let mut mae = 0.0;
            let mut nlpd = Some(0.0);
            let mut n_points = 0;
            for c in curves {
                let pm = point_metrics(c.y_true, c.means, slice)?;
                mse += pm.mse;
                mae += pm.mae;
                nlpd = match (nlpd, c.variances) {
                    (Some(acc), Some(v)) => Some(acc + mnlpd(c.y_true, c.means, v, slice)?),
                    _ => None,
                };
                n_points += slice.apply(c.y_true)?.len();
            }
            let n = curves.len() as f64;
            let mse = mse / n;
            Ok(MetricReport {
                slice,
                mse,
                mae: mae / n,
                rmse: mse.sqrt(),
                mnlpd: nlpd.map(|v| v / n),
                n_curves: curves.len(),
                n_points,
            })
        })
        .collect()
}
