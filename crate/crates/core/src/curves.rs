//! Parametric learning-curve families, multi-start least-squares fitting,
//! and the two naive baselines: the averaged-neighbour curve (NBL) and the
//! averaged-family regression (NRBL).

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CurveKey, LearningCurve};
use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmConfig};
use crate::metrics::{point_metrics, EvalSlice, PointMetrics};

/// Three-parameter curve families `f(x; a, b, c)`. Logarithms are natural.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveFamily {
    /// `a * (x + 1e-5)^(-b) + c`
    PowDecay,
    /// `a * exp(-b x) + c`
    ExpDecay,
    /// `a - b * ln(x + 1e-5) + c`
    LogDecay,
    /// `exp(-exp(-a - b / (x + 1e-5) - c * ln(x + 1e-5)))`
    VaporBnn,
    /// `1 - (c + a * ln(b x + 1e-10)) / 10`
    BnnLog,
    /// `1 - a / ((c / (x + 1e-5))^b + 1)`
    Hill3,
    /// `exp(a + b / x + c * ln x)`
    Vapor,
    /// `(a b + c x) / (b + x)`
    Mmf,
    /// `a * x^b + c`
    Power,
    /// `c + a * ln(b x)`
    LogGrowth,
}

impl CurveFamily {
    pub const ALL: [CurveFamily; 10] = [
        CurveFamily::PowDecay,
        CurveFamily::ExpDecay,
        CurveFamily::LogDecay,
        CurveFamily::VaporBnn,
        CurveFamily::BnnLog,
        CurveFamily::Hill3,
        CurveFamily::Vapor,
        CurveFamily::Mmf,
        CurveFamily::Power,
        CurveFamily::LogGrowth,
    ];

    /// Families fitted by the averaged-regression baseline.
    pub const NRBL: [CurveFamily; 4] = [
        CurveFamily::Vapor,
        CurveFamily::Mmf,
        CurveFamily::Power,
        CurveFamily::LogGrowth,
    ];

    pub const ARITY: usize = 3;

    pub fn name(self) -> &'static str {
        match self {
            CurveFamily::PowDecay => "pow_decay",
            CurveFamily::ExpDecay => "exp_decay",
            CurveFamily::LogDecay => "log_decay",
            CurveFamily::VaporBnn => "vapor_bnn",
            CurveFamily::BnnLog => "bnn_log",
            CurveFamily::Hill3 => "hill3",
            CurveFamily::Vapor => "vapor",
            CurveFamily::Mmf => "mmf",
            CurveFamily::Power => "power",
            CurveFamily::LogGrowth => "log_growth",
        }
    }

    /// Default `(lo, hi)` per parameter.
    pub fn default_bounds(self) -> [(f64, f64); 3] {
        const WIDE: (f64, f64) = (-1e3, 1e3);
        const RATE: (f64, f64) = (1e-6, 1e3);
        match self {
            CurveFamily::PowDecay
            | CurveFamily::ExpDecay
            | CurveFamily::LogDecay
            | CurveFamily::BnnLog
            | CurveFamily::Mmf
            | CurveFamily::LogGrowth => [WIDE, RATE, WIDE],
            CurveFamily::Hill3 => [WIDE, RATE, RATE],
            CurveFamily::VaporBnn => [(-20.0, 20.0), (-20.0, 20.0), (-20.0, 20.0)],
            CurveFamily::Vapor => [(-50.0, 50.0), WIDE, (-10.0, 10.0)],
            CurveFamily::Power => [WIDE, (-10.0, 10.0), WIDE],
        }
    }

    pub fn eval(self, params: &[f64], x: f64) -> Result<f64> {
        let [a, b, c] = [params[0], params[1], params[2]];
        if !(x > 0.0) {
            return Err(Error::Domain(format!("{self}: x must be positive, got {x}")));
        }
        let v = match self {
            CurveFamily::PowDecay => a * (x + 1e-5).powf(-b) + c,
            CurveFamily::ExpDecay => a * (-b * x).exp() + c,
            CurveFamily::LogDecay => a - b * (x + 1e-5).ln() + c,
            CurveFamily::VaporBnn => {
                let xs = x + 1e-5;
                (-(-a - b / xs - c * xs.ln()).exp()).exp()
            }
            CurveFamily::BnnLog => {
                let arg = b * x + 1e-10;
                if arg <= 0.0 {
                    return Err(Error::Domain(format!("{self}: b*x + 1e-10 must be positive")));
                }
                1.0 - (c + a * arg.ln()) / 10.0
            }
            CurveFamily::Hill3 => {
                if c < 0.0 {
                    return Err(Error::Domain(format!("{self}: c must be non-negative")));
                }
                1.0 - a * (1.0 / ((c / (x + 1e-5)).powf(b) + 1.0))
            }
            CurveFamily::Vapor => (a + b / x + c * x.ln()).exp(),
            CurveFamily::Mmf => {
                if b + x == 0.0 {
                    return Err(Error::Domain(format!("{self}: b + x must be non-zero")));
                }
                (a * b + c * x) / (b + x)
            }
            CurveFamily::Power => a * x.powf(b) + c,
            CurveFamily::LogGrowth => {
                if b * x <= 0.0 {
                    return Err(Error::Domain(format!("{self}: b*x must be positive")));
                }
                c + a * (b * x).ln()
            }
        };
        Ok(v)
    }
}

impl fmt::Display for CurveFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CurveFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CurveFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown curve family `{s}`")))
    }
}

pub fn family_eval(family: CurveFamily, params: &[f64], x: f64) -> Result<f64> {
    family.eval(params, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_starts: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    /// Overrides [`CurveFamily::default_bounds`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[(f64, f64); 3]>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_starts: 20,
            seed: 0,
            max_iters: 500,
            tol: 1e-15,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: CurveFamily,
    pub params: [f64; 3],
    /// Sum of squared residuals.
    pub residual: f64,
    pub n_starts: usize,
    pub seed: u64,
}

impl FitResult {
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        x.iter().map(|&v| self.family.eval(&self.params, v)).collect()
    }
}

/// Draws a start uniformly inside the bounds; strictly positive ranges are
/// sampled uniformly in log space.
fn draw_start(rng: &mut ChaCha8Rng, bounds: &[(f64, f64); 3]) -> [f64; 3] {
    bounds.map(|(lo, hi)| {
        if lo > 0.0 {
            rng.random_range(lo.ln()..=hi.ln()).exp()
        } else {
            rng.random_range(lo..=hi)
        }
    })
}

/// Multi-start least-squares fit; returns the lowest-residual start
/// (earliest start on ties).
pub fn family_fit(family: CurveFamily, x: &[f64], y: &[f64], config: &FitConfig) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::invalid("x and y lengths differ"));
    }
    if x.len() < CurveFamily::ARITY + 1 {
        return Err(Error::invalid(format!(
            "{family} needs at least {} points, got {}",
            CurveFamily::ARITY + 1,
            x.len()
        )));
    }
    if config.n_starts == 0 {
        return Err(Error::invalid("n_starts must be at least 1"));
    }
    let bounds = config.bounds.unwrap_or_else(|| family.default_bounds());
    let lo = bounds.map(|b| b.0);
    let hi = bounds.map(|b| b.1);
    let residuals = |p: &[f64]| -> Option<Vec<f64>> {
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| {
                let v = family.eval(p, xi).ok()? - yi;
                v.is_finite().then_some(v)
            })
            .collect()
    };
    let lm = LmConfig {
        max_iters: config.max_iters,
        tol: config.tol,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<([f64; 3], f64)> = None;
    for _ in 0..config.n_starts {
        let start = draw_start(&mut rng, &bounds);
        let Some(out) = levenberg_marquardt(&residuals, &start, &lo, &hi, &lm) else {
            continue;
        };
        if best.as_ref().is_none_or(|(_, s)| out.ssr < *s) {
            best = Some(([out.params[0], out.params[1], out.params[2]], out.ssr));
        }
    }
    let (params, residual) = best.ok_or(Error::AllStartsDiverged(config.n_starts))?;
    Ok(FitResult {
        family,
        params,
        residual,
        n_starts: config.n_starts,
        seed: config.seed,
    })
}

/// Linear interpolation in log10(x); `None` outside the curve's range.
pub fn interp_log(curve: &LearningCurve, x: f64) -> Option<f64> {
    let n = curve.x.len();
    if n == 0 || x < curve.x[0] || x > curve.x[n - 1] {
        return None;
    }
    let i = curve.x.partition_point(|&v| v < x);
    if curve.x[i] == x {
        return Some(curve.y[i]);
    }
    let (x0, x1) = (curve.x[i - 1].log10(), curve.x[i].log10());
    let t = (x.log10() - x0) / (x1 - x0);
    Some(curve.y[i - 1] + t * (curve.y[i] - curve.y[i - 1]))
}

/// Averaged-neighbour baseline for the curve `target`.
///
/// At every evaluation point the curves sharing the target's `within`
/// (other tasks) and the curves sharing its `task` (other withins) are
/// averaged separately over those covering the point; the two set means are
/// then averaged with weight 1/2. A set with no covering curve drops out, and
/// a point covered by neither set is a hole (`None`).
pub fn nbl_predict(train: &[LearningCurve], target: &CurveKey, eval_x: &[f64]) -> Result<Vec<Option<f64>>> {
    let same_within: Vec<&LearningCurve> = train
        .iter()
        .filter(|c| c.key.within == target.within && c.key.task != target.task)
        .collect();
    let same_task: Vec<&LearningCurve> = train
        .iter()
        .filter(|c| c.key.task == target.task && c.key.within != target.within)
        .collect();
    if same_within.is_empty() || same_task.is_empty() {
        return Err(Error::invalid(format!(
            "NBL for {target} needs curves sharing both its task and its within label"
        )));
    }
    let set_mean = |set: &[&LearningCurve], x: f64| -> Option<f64> {
        let vals: Vec<f64> = set.iter().filter_map(|c| interp_log(c, x)).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Ok(eval_x
        .iter()
        .map(|&x| match (set_mean(&same_within, x), set_mean(&same_task, x)) {
            (Some(a), Some(b)) => Some(0.5 * (a + b)),
            (Some(a), None) | (None, Some(a)) => Some(a),
            (None, None) => None,
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct FamilyPrediction {
    pub family: CurveFamily,
    pub fit: Result<FitResult, String>,
    pub predictions: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct NrblResult {
    pub eval_x: Vec<f64>,
    pub families: Vec<FamilyPrediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NrblMetrics {
    pub per_family: Vec<(CurveFamily, PointMetrics)>,
    /// Metric averages over the families that fitted.
    pub average: PointMetrics,
}

/// Fits every averaged-regression family to the pooled training points.
pub fn nrbl_predict(points: &[(f64, f64)], eval_x: &[f64], config: &FitConfig) -> Result<NrblResult> {
    nrbl_predict_with(&CurveFamily::NRBL, points, eval_x, config)
}

pub fn nrbl_predict_with(
    families: &[CurveFamily],
    points: &[(f64, f64)],
    eval_x: &[f64],
    config: &FitConfig,
) -> Result<NrblResult> {
    if points.is_empty() {
        return Err(Error::invalid("NRBL needs training points"));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let families = families
        .iter()
        .map(|&family| {
            let fit = family_fit(family, &x, &y, config).map_err(|e| e.to_string());
            let predictions = fit.as_ref().ok().and_then(|f| f.predict(eval_x).ok());
            if predictions.is_none() {
                log::warn!("NRBL: family {family} excluded ({:?})", fit.as_ref().err());
            }
            FamilyPrediction {
                family,
                fit,
                predictions,
            }
        })
        .collect();
    Ok(NrblResult {
        eval_x: eval_x.to_vec(),
        families,
    })
}

impl NrblResult {
    /// Per-family metrics and their average (metrics are averaged, not the
    /// predictions).
    pub fn metrics(&self, y_true: &[f64], slice: EvalSlice) -> Result<NrblMetrics> {
        let mut per_family = Vec::new();
        for f in &self.families {
            if let Some(pred) = &f.predictions {
                per_family.push((f.family, point_metrics(y_true, pred, slice)?));
            }
        }
        if per_family.is_empty() {
            return Err(Error::AllStartsDiverged(self.families.len()));
        }
        let n = per_family.len() as f64;
        let mse = per_family.iter().map(|(_, m)| m.mse).sum::<f64>() / n;
        let mae = per_family.iter().map(|(_, m)| m.mae).sum::<f64>() / n;
        let rmse = per_family.iter().map(|(_, m)| m.rmse).sum::<f64>() / n;
        Ok(NrblMetrics {
            per_family,
            average: PointMetrics { mse, mae, rmse },
        })
    }
}
