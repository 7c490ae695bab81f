//! Compute-efficient frontiers, log-log scaling laws, and Monte-Carlo law
//! estimation from hierarchical-GP ensembles.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{apply_split, CurveDataset, CurveKey, Direction, LearningCurve, SplitSpec};
use crate::error::{Error, Result};
use crate::gp::factorize;
use crate::hier::{fit_runs, HierConfig, HierGpModel};
use crate::kernels::ModelKind;
use crate::metrics::abc_lines;

pub const DEFAULT_FIT_RANGE: (f64, f64) = (1e18, 1e20);
pub const DEFAULT_ABC_RANGE: (f64, f64) = (13.0, 23.0);
pub const PFLOPS: f64 = 1e15;

/// `log10 l = beta0 + beta1 * log10 c`, fitted over `fit_range` (FLOPs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingLaw {
    pub beta0: f64,
    pub beta1: f64,
    #[serde(default = "default_fit_range")]
    pub fit_range: (f64, f64),
}

fn default_fit_range() -> (f64, f64) {
    DEFAULT_FIT_RANGE
}

impl ScalingLaw {
    pub fn new(beta0: f64, beta1: f64) -> Self {
        ScalingLaw {
            beta0,
            beta1,
            fit_range: DEFAULT_FIT_RANGE,
        }
    }

    pub fn with_fit_range(mut self, range: (f64, f64)) -> Self {
        self.fit_range = range;
        self
    }

    pub fn gamma(&self) -> f64 {
        -self.beta1
    }

    pub fn c0(&self) -> Result<f64> {
        if self.beta1 == 0.0 {
            return Err(Error::Domain("c0 is undefined for a zero slope".into()));
        }
        Ok(10f64.powf(-self.beta0 / self.beta1))
    }

    /// `(c0, gamma)` such that `l(c) = (c / c0)^(-gamma)`.
    pub fn to_c0_gamma(&self) -> Result<(f64, f64)> {
        Ok((self.c0()?, self.gamma()))
    }

    pub fn from_c0_gamma(c0: f64, gamma: f64) -> Result<Self> {
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(Error::Domain(format!("c0 must be positive and finite, got {c0}")));
        }
        Ok(ScalingLaw::new(gamma * c0.log10(), -gamma))
    }

    pub fn log_loss(&self, compute: f64) -> f64 {
        self.beta0 + self.beta1 * compute.log10()
    }

    pub fn loss(&self, compute: f64) -> f64 {
        10f64.powf(self.log_loss(compute))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub compute: f64,
    pub loss: f64,
    pub key: CurveKey,
}

/// Lower envelope of the pooled `(compute, loss)` points, restricted to
/// `range` (inclusive).
pub fn frontier_extract(curves: &[LearningCurve], range: (f64, f64)) -> Result<Vec<FrontierPoint>> {
    let mut pool = Vec::new();
    for c in curves {
        let compute = c
            .compute
            .as_ref()
            .ok_or_else(|| Error::schema(c.key.to_string(), "curve has no compute axis"))?;
        for (&cp, &l) in compute.iter().zip(&c.y) {
            pool.push(FrontierPoint {
                compute: cp,
                loss: l,
                key: c.key.clone(),
            });
        }
    }
    pool.sort_by(|a, b| {
        a.compute
            .total_cmp(&b.compute)
            .then(a.loss.total_cmp(&b.loss))
            .then_with(|| a.key.cmp(&b.key))
    });
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for p in pool {
        if p.loss < best {
            best = p.loss;
            if p.compute >= range.0 && p.compute <= range.1 {
                out.push(p);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyFrontier {
            lo: range.0,
            hi: range.1,
        });
    }
    Ok(out)
}

/// Ordinary least squares of `log10 loss` on `log10 compute` over
/// `(compute, loss)` pairs. The returned fit range is the compute extent.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<ScalingLaw> {
    if points.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 points, got {}", points.len())));
    }
    let mut us = Vec::with_capacity(points.len());
    let mut vs = Vec::with_capacity(points.len());
    for &(c, l) in points {
        if !(c > 0.0) || !(l > 0.0) {
            return Err(Error::Domain(format!("non-positive point ({c}, {l}) in log-log fit")));
        }
        us.push(c.log10());
        vs.push(l.log10());
    }
    let n = us.len() as f64;
    let mu = us.iter().sum::<f64>() / n;
    let mv = vs.iter().sum::<f64>() / n;
    let sxx: f64 = us.iter().map(|u| (u - mu).powi(2)).sum();
    let sxy: f64 = us.iter().zip(&vs).map(|(u, v)| (u - mu) * (v - mv)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all points share one compute value".into()));
    }
    let beta1 = sxy / sxx;
    let beta0 = mv - beta1 * mu;
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalingLaw {
        beta0,
        beta1,
        fit_range: (lo, hi),
    })
}

pub fn fit_frontier(frontier: &[FrontierPoint]) -> Result<ScalingLaw> {
    let pts: Vec<(f64, f64)> = frontier.iter().map(|p| (p.compute, p.loss)).collect();
    fit_loglog(&pts)
}

/// OLS residual variance `SSR / (n - 2)` in log10-loss units; zero for two
/// points.
pub fn residual_variance(law: &ScalingLaw, points: &[(f64, f64)]) -> f64 {
    let ssr: f64 = points.iter().map(|&(c, l)| (l.log10() - law.log_loss(c)).powi(2)).sum();
    if points.len() > 2 {
        ssr / (points.len() - 2) as f64
    } else {
        0.0
    }
}

/// Sum of the curves' final cumulative compute, in PetaFLOPs.
pub fn cost_pflops(curves: &[LearningCurve]) -> Result<f64> {
    curves
        .iter()
        .map(|c| {
            c.final_compute()
                .map(|v| v / PFLOPS)
                .ok_or_else(|| Error::schema(c.key.to_string(), "curve has no compute axis"))
        })
        .sum()
}

/// Law fitted to the frontier of every curve in `ds` inside `fit_range`.
pub fn ground_truth_law(ds: &CurveDataset, fit_range: (f64, f64)) -> Result<ScalingLaw> {
    let law = fit_frontier(&frontier_extract(&ds.curves, fit_range)?)?;
    Ok(law.with_fit_range(fit_range))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub hier: HierConfig,
    pub fit_range: (f64, f64),
    pub abc_range: (f64, f64),
    /// Draw each run's test curves from the joint posterior instead of
    /// using posterior means.
    pub posterior_sampling: bool,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            hier: HierConfig::default(),
            fit_range: DEFAULT_FIT_RANGE,
            abc_range: DEFAULT_ABC_RANGE,
            posterior_sampling: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunLaw {
    pub seed: u64,
    pub beta0: f64,
    pub beta1: f64,
    pub abc: f64,
    pub residual_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawReport {
    pub beta0: MeanStd,
    pub beta1: MeanStd,
    pub abc: MeanStd,
    pub runs: Vec<RunLaw>,
    pub fit_range: (f64, f64),
    pub abc_range: (f64, f64),
    pub gt_law: ScalingLaw,
    pub cost_pflops: f64,
}

impl LawReport {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn predicted_curve(model: &HierGpModel, target: &LearningCurve, sample_seed: Option<u64>) -> Result<LearningCurve> {
    let pred = model.predict_curve(&target.key, &target.x, sample_seed.is_some())?;
    let y = match (sample_seed, pred.covariance) {
        (Some(seed), Some(cov)) => {
            let f = factorize(&cov)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z = DVector::from_iterator(cov.nrows(), (0..cov.nrows()).map(|_| StandardNormal.sample(&mut rng)));
            let draw = f.chol.l() * z;
            pred.mean.iter().zip(draw.iter()).map(|(m, d)| m + d).collect()
        }
        _ => pred.mean,
    };
    let mut c = target.clone();
    c.y = y;
    Ok(c)
}

/// One law per fitted model: each model's predicted `test` curves are pooled
/// with `train`, and the law is fitted to that pool's frontier.
pub fn laws_from_models(
    train: &[LearningCurve],
    test: &[LearningCurve],
    models: &[HierGpModel],
    config: &ScalingConfig,
    gt_law: &ScalingLaw,
) -> Result<Vec<RunLaw>> {
    use rayon::prelude::*;
    models
        .par_iter()
        .enumerate()
        .map(|(r, m)| {
            let run = || -> Result<RunLaw> {
                let mut pool = train.to_vec();
                for t in test {
                    let sample = config.posterior_sampling.then(|| m.seed ^ 0x5eed_0000_0000);
                    pool.push(predicted_curve(m, t, sample)?);
                }
                law_run(&pool, m.seed, config, gt_law)
            };
            run().map_err(|e| Error::RunFailed {
                run: r,
                source: Box::new(e),
            })
        })
        .collect()
}

fn law_run(pool: &[LearningCurve], seed: u64, config: &ScalingConfig, gt_law: &ScalingLaw) -> Result<RunLaw> {
    let frontier = frontier_extract(pool, config.fit_range)?;
    let law = fit_frontier(&frontier)?;
    let pts: Vec<(f64, f64)> = frontier.iter().map(|p| (p.compute, p.loss)).collect();
    Ok(RunLaw {
        seed,
        beta0: law.beta0,
        beta1: law.beta1,
        abc: abc_lines(&law, gt_law, config.abc_range.0, config.abc_range.1)?,
        residual_variance: residual_variance(&law, &pts),
    })
}

pub fn summarize(runs: Vec<RunLaw>, config: &ScalingConfig, gt_law: ScalingLaw, cost: f64) -> LawReport {
    let pick = |f: fn(&RunLaw) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
    LawReport {
        beta0: pick(|r| r.beta0),
        beta1: pick(|r| r.beta1),
        abc: pick(|r| r.abc),
        fit_range: config.fit_range,
        abc_range: config.abc_range,
        gt_law,
        cost_pflops: cost,
        runs,
    }
}

/// Monte-Carlo scaling law over `runs` ensemble members (seeds
/// `master_seed + r`). Without `gt_law`, the law of the full dataset is used.
pub fn mc_scaling_law(
    ds: &CurveDataset,
    split: &SplitSpec,
    kind: ModelKind,
    runs: usize,
    config: &ScalingConfig,
    master_seed: u64,
    gt_law: Option<ScalingLaw>,
) -> Result<LawReport> {
    if runs == 0 {
        return Err(Error::invalid("need R >= 1 runs"));
    }
    if ds.direction != Direction::LowerBetter {
        return Err(Error::invalid("scaling laws need a lower-is-better metric"));
    }
    let gt = match gt_law {
        Some(l) => l,
        None => ground_truth_law(ds, config.fit_range)?,
    };
    let view = apply_split(ds, split)?;
    Ok(mc_from_view(&view.train, &view.test, kind, runs, config, master_seed, gt)?.0)
}

/// Monte-Carlo law for an explicit train/test partition. Also returns the
/// fitted ensemble (empty when there is nothing to predict).
pub fn mc_from_view(
    train: &[LearningCurve],
    test: &[LearningCurve],
    kind: ModelKind,
    runs: usize,
    config: &ScalingConfig,
    master_seed: u64,
    gt: ScalingLaw,
) -> Result<(LawReport, Vec<HierGpModel>)> {
    if runs == 0 {
        return Err(Error::invalid("need R >= 1 runs"));
    }
    let cost = cost_pflops(train)?;
    let (laws, models) = if test.is_empty() {
        let one = law_run(train, master_seed, config, &gt)?;
        let laws = (0..runs)
            .map(|r| RunLaw {
                seed: master_seed.wrapping_add(r as u64),
                ..one
            })
            .collect();
        (laws, Vec::new())
    } else {
        let models = fit_runs(kind, train, runs, &config.hier, master_seed)?;
        (laws_from_models(train, test, &models, config, &gt)?, models)
    };
    Ok((summarize(laws, config, gt, cost), models))
}
