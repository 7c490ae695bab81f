//! Hierarchical GP models over learning-curve grids: fitting, whole-curve
//! prediction, and multi-run ensembles.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{apply_split, CurveDataset, CurveKey, LearningCurve, SplitSpec, TransformState};
use crate::error::{Error, Result};
use crate::gp::{optimize, posterior_predict, GpProblem, Objective, OptimizeConfig};
use crate::kernels::{GpPoint, KernelParams, KernelSpec, ModelKind, SeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierConfig {
    pub q_h: usize,
    pub q_w: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Standard deviation of the initial latent draws.
    pub latent_init_std: f64,
    /// Initial `(variance, lengthscale)` per kernel component, in
    /// normalized units.
    pub init_components: [(f64, f64); 3],
    pub init_noise: f64,
}

impl Default for HierConfig {
    fn default() -> Self {
        HierConfig {
            q_h: 2,
            q_w: 2,
            restarts: 1,
            max_iters: 200,
            tol: 1e-6,
            latent_init_std: 0.1,
            init_components: [(0.5, 1.0), (0.5, 1.0), (0.1, 1.0)],
            init_noise: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub objective: f64,
    pub iterations: usize,
    pub restarts_used: usize,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierGpModel {
    pub kind: ModelKind,
    pub problem: GpProblem,
    pub transform: TransformState,
    pub seed: u64,
    pub report: FitReport,
}

/// One curve's predictive distribution in the original domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePrediction {
    pub key: CurveKey,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Latent joint covariance (original units), when requested.
    pub covariance: Option<nalgebra::DMatrix<f64>>,
}

fn gp_points(train: &[LearningCurve], transform: &TransformState) -> (Vec<GpPoint>, Vec<f64>) {
    let mut pts = Vec::new();
    let mut ys = Vec::new();
    for c in train {
        for (&x, &y) in c.x.iter().zip(&c.y) {
            pts.push(GpPoint::new(transform.x(x), c.key.task.clone(), c.key.within.clone()));
            ys.push(transform.y(y));
        }
    }
    (pts, ys)
}

/// Starting parameters: configured kernel values plus latent coordinates
/// drawn i.i.d. from `N(0, latent_init_std^2)` for every task and within
/// label in `train` (magp only), tasks first, each in label order.
pub fn initial_params(kind: ModelKind, train: &[LearningCurve], config: &HierConfig, seed: u64) -> KernelParams {
    let comps = config.init_components.map(|(v, l)| SeParams::new(v, l));
    let mut params = KernelParams::new(comps, config.init_noise);
    params.q_h = config.q_h;
    params.q_w = config.q_w;
    if kind == ModelKind::Magp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.latent_init_std.max(0.0)).expect("finite std");
        let tasks: std::collections::BTreeSet<&str> = train.iter().map(|c| c.key.task.as_str()).collect();
        let withins: std::collections::BTreeSet<&str> = train.iter().map(|c| c.key.within.as_str()).collect();
        for t in tasks {
            params.h.insert(
                t.to_string(),
                (0..config.q_h).map(|_| normal.sample(&mut rng)).collect(),
            );
        }
        for w in withins {
            params.w.insert(
                w.to_string(),
                (0..config.q_w).map(|_| normal.sample(&mut rng)).collect(),
            );
        }
    }
    params
}

pub fn objective_for(kind: ModelKind) -> Objective {
    match kind {
        ModelKind::Magp => Objective::LmlPlusLatentPrior,
        ModelKind::Dhgp => Objective::Lml,
    }
}

pub fn fit(kind: ModelKind, train: &[LearningCurve], config: &HierConfig, seed: u64) -> Result<HierGpModel> {
    let init = initial_params(kind, train, config, seed);
    fit_from(kind, train, config, seed, init)
}

/// Fits starting from explicit initial parameters.
pub fn fit_from(
    kind: ModelKind,
    train: &[LearningCurve],
    config: &HierConfig,
    seed: u64,
    init: KernelParams,
) -> Result<HierGpModel> {
    if train.is_empty() {
        return Err(Error::invalid("training view is empty"));
    }
    let transform = TransformState::fit(train)?;
    let (points, targets) = gp_points(train, &transform);
    let problem = GpProblem::new(KernelSpec::new(kind), init, points, targets)?;
    let opt = optimize(
        &problem,
        objective_for(kind),
        &OptimizeConfig {
            restarts: config.restarts,
            max_iters: config.max_iters,
            tol: config.tol,
            seed,
        },
    )?;
    let report = FitReport {
        objective: opt.objective,
        iterations: opt.iterations,
        restarts_used: opt.restarts_used(),
        trace: opt.trace.clone(),
    };
    Ok(HierGpModel {
        kind,
        problem: GpProblem {
            params: opt.params,
            ..problem
        },
        transform,
        seed,
        report,
    })
}

impl HierGpModel {
    /// Joint prediction for one curve at `x` (original units).
    pub fn predict_curve(&self, key: &CurveKey, x: &[f64], full_covariance: bool) -> Result<CurvePrediction> {
        let query: Vec<GpPoint> = x
            .iter()
            .map(|&v| GpPoint::new(self.transform.x(v), key.task.clone(), key.within.clone()))
            .collect();
        let pred = posterior_predict(&self.problem, &query, full_covariance)?;
        let t = &self.transform;
        Ok(CurvePrediction {
            key: key.clone(),
            x: x.to_vec(),
            mean: pred.means.iter().map(|&m| t.invert_y(m)).collect(),
            variance: pred.variances.iter().map(|&v| t.invert_var(v)).collect(),
            covariance: pred.covariance.map(|c| c * (t.y_std * t.y_std)),
        })
    }
}

/// Predicts every key on a shared x grid.
pub fn predict_curves(model: &HierGpModel, keys: &[CurveKey], x_grid: &[f64]) -> Result<Vec<CurvePrediction>> {
    keys.iter().map(|k| model.predict_curve(k, x_grid, false)).collect()
}

/// Fits `runs` models with seeds `master_seed + r`. Runs are independent;
/// results are returned in run order.
pub fn fit_runs(
    kind: ModelKind,
    train: &[LearningCurve],
    runs: usize,
    config: &HierConfig,
    master_seed: u64,
) -> Result<Vec<HierGpModel>> {
    if kind == ModelKind::Dhgp && config.restarts == 1 && runs > 1 {
        // the seed only enters through latents and restarts, so every run is
        // the same fit
        let first = fit(kind, train, config, master_seed).map_err(|e| Error::RunFailed {
            run: 0,
            source: Box::new(e),
        })?;
        return Ok((0..runs)
            .map(|r| HierGpModel {
                seed: master_seed.wrapping_add(r as u64),
                ..first.clone()
            })
            .collect());
    }
    (0..runs)
        .into_par_iter()
        .map(|r| {
            fit(kind, train, config, master_seed.wrapping_add(r as u64)).map_err(|e| Error::RunFailed {
                run: r,
                source: Box::new(e),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleCurve {
    pub key: CurveKey,
    pub x: Vec<f64>,
    pub run_means: Vec<Vec<f64>>,
    pub run_variances: Vec<Vec<f64>>,
    /// Per-point mean over runs.
    pub mean: Vec<f64>,
    /// Per-point `(1/R) sum_r (mean_r - mean)^2`.
    pub var: Vec<f64>,
    /// Mean of `var` over the curve's points.
    pub mvar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub curves: Vec<EnsembleCurve>,
}

impl EnsembleResult {
    /// Aggregates per-run predictions (`per_run[r][c]` is curve `c` in run `r`).
    pub fn from_runs(seeds: Vec<u64>, per_run: Vec<Vec<CurvePrediction>>) -> Result<Self> {
        let runs = per_run.len();
        if runs == 0 {
            return Err(Error::invalid("ensemble needs at least one run"));
        }
        let n_curves = per_run[0].len();
        let mut curves = Vec::with_capacity(n_curves);
        for c in 0..n_curves {
            let first = &per_run[0][c];
            let run_means: Vec<Vec<f64>> = per_run.iter().map(|r| r[c].mean.clone()).collect();
            let run_variances: Vec<Vec<f64>> = per_run.iter().map(|r| r[c].variance.clone()).collect();
            let np = first.x.len();
            let rf = runs as f64;
            let mean: Vec<f64> = (0..np)
                .map(|j| {
                    let base = run_means[0][j];
                    base + run_means.iter().map(|m| m[j] - base).sum::<f64>() / rf
                })
                .collect();
            let var: Vec<f64> = (0..np)
                .map(|j| run_means.iter().map(|m| (m[j] - mean[j]).powi(2)).sum::<f64>() / rf)
                .collect();
            let mvar = if np == 0 {
                0.0
            } else {
                var.iter().sum::<f64>() / np as f64
            };
            curves.push(EnsembleCurve {
                key: first.key.clone(),
                x: first.x.clone(),
                run_means,
                run_variances,
                mean,
                var,
                mvar,
            });
        }
        Ok(EnsembleResult { runs, seeds, curves })
    }

    pub fn mvar_by_key(&self) -> BTreeMap<CurveKey, f64> {
        self.curves.iter().map(|c| (c.key.clone(), c.mvar)).collect()
    }

    pub const CSV_HEADER: &'static str = "run,task,within,x,mean,variance";

    /// Prediction dump; `run = -1` rows hold the pooled mean and the
    /// across-run variance.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for c in &self.curves {
            for r in 0..self.runs {
                for j in 0..c.x.len() {
                    let _ = writeln!(
                        out,
                        "{r},{},{},{},{},{}",
                        c.key.task, c.key.within, c.x[j], c.run_means[r][j], c.run_variances[r][j]
                    );
                }
            }
            for j in 0..c.x.len() {
                let _ = writeln!(
                    out,
                    "-1,{},{},{},{},{}",
                    c.key.task, c.key.within, c.x[j], c.mean[j], c.var[j]
                );
            }
        }
        out
    }
}

/// Predicts every target curve of `test` with each fitted model.
pub fn predict_targets(models: &[HierGpModel], test: &[LearningCurve]) -> Result<Vec<Vec<CurvePrediction>>> {
    models
        .par_iter()
        .enumerate()
        .map(|(r, m)| {
            test.iter()
                .map(|c| m.predict_curve(&c.key, &c.x, false))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::RunFailed {
                    run: r,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Fits `runs` models on the split's training view and predicts its targets.
pub fn ensemble_run(
    ds: &CurveDataset,
    split: &SplitSpec,
    kind: ModelKind,
    runs: usize,
    config: &HierConfig,
    master_seed: u64,
) -> Result<EnsembleResult> {
    if runs == 0 {
        return Err(Error::invalid("ensemble needs R >= 1"));
    }
    let view = apply_split(ds, split)?;
    let models = fit_runs(kind, &view.train, runs, config, master_seed)?;
    let per_run = predict_targets(&models, &view.test)?;
    let seeds = (0..runs).map(|r| master_seed.wrapping_add(r as u64)).collect();
    EnsembleResult::from_runs(seeds, per_run)
}
