//! Exact Gaussian-process inference: marginal likelihood, its gradient,
//! multi-restart optimization and posterior prediction.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{resolve, Evaluator, GpPoint, KernelParams, KernelSpec, Resolved, NOISE_INDEX, N_HYPER};
use crate::optim::{self, LbfgsConfig};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative diagonal jitter added before every factorization.
pub const JITTER: f64 = 1e-8;
/// Number of times the jitter is multiplied by 10 before giving up.
pub const JITTER_ESCALATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct GpProblem {
    pub spec: KernelSpec,
    pub params: KernelParams,
    pub points: Vec<GpPoint>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub means: Vec<f64>,
    /// Observation-space variances (latent variance plus noise).
    pub variances: Vec<f64>,
    /// Latent (noise-free) joint covariance, when requested.
    pub covariance: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Lml,
    /// Marginal likelihood plus the standard-normal log prior on latents
    /// (without its constant).
    LmlPlusLatentPrior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            restarts: 1,
            max_iters: 200,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub params: KernelParams,
    pub objective: f64,
    /// Objective values of the winning restart, starting at its init.
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// Final objective per restart, `None` for restarts that failed.
    pub restart_objectives: Vec<Option<f64>>,
}

impl OptimizeResult {
    pub fn restarts_used(&self) -> usize {
        self.restart_objectives.iter().filter(|o| o.is_some()).count()
    }
}

pub(crate) struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    /// Multiplier on `mean(diag)` that was added to the diagonal.
    pub jitter_factor: f64,
}

/// Cholesky factorization with the fixed jitter schedule.
pub(crate) fn factorize(k: &DMatrix<f64>) -> Result<Factor> {
    let n = k.nrows();
    let mean_diag = k.diagonal().sum() / n as f64;
    let mut factor = JITTER;
    for _ in 0..=JITTER_ESCALATIONS {
        let mut kj = k.clone();
        let add = factor * mean_diag;
        for i in 0..n {
            kj[(i, i)] += add;
        }
        if kj.iter().all(|v| v.is_finite()) {
            if let Some(chol) = Cholesky::new(kj) {
                return Ok(Factor {
                    chol,
                    jitter_factor: factor,
                });
            }
        }
        factor *= 10.0;
    }
    Err(Error::IllConditioned {
        jitter: factor / 10.0 * mean_diag,
    })
}

struct Prepared<'a> {
    ev: Evaluator<'a>,
    pts: Vec<Resolved>,
    factor: Factor,
    alpha: DVector<f64>,
}

impl GpProblem {
    pub fn new(spec: KernelSpec, params: KernelParams, points: Vec<GpPoint>, targets: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != targets.len() {
            return Err(Error::invalid(format!(
                "GP problem needs matching non-empty points ({}) and targets ({})",
                points.len(),
                targets.len()
            )));
        }
        Ok(GpProblem {
            spec,
            params,
            points,
            targets,
        })
    }

    fn prepare<'a>(&self, theta: &'a [f64]) -> Result<Prepared<'a>> {
        let pts = resolve(&self.params, &[&self.points]).pop().unwrap_or_default();
        let ev = Evaluator::new(self.spec.kind, &self.params, theta);
        let factor = factorize(&ev.gram(&pts))?;
        let alpha = factor.chol.solve(&DVector::from_column_slice(&self.targets));
        Ok(Prepared { ev, pts, factor, alpha })
    }

    fn lml_at(&self, prep: &Prepared) -> f64 {
        let n = self.targets.len() as f64;
        let y = DVector::from_column_slice(&self.targets);
        let log_det: f64 = prep
            .factor
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>()
            * 2.0;
        -0.5 * y.dot(&prep.alpha) - 0.5 * log_det - 0.5 * n * LN_2PI
    }

    fn lml_grad_at(&self, prep: &Prepared, theta: &[f64]) -> Vec<f64> {
        let n = self.pts_len();
        let kinv = prep.factor.chol.inverse();
        let a = &prep.alpha;
        // W = a a^T - K^{-1}; the jitter scales with mean(diag K), so its
        // derivative contributes tr(W) * jitter_factor / n on the diagonal.
        let mut trace_w = 0.0;
        for i in 0..n {
            trace_w += a[i] * a[i] - kinv[(i, i)];
        }
        let diag_extra = trace_w * prep.factor.jitter_factor / n as f64;
        let mut grad = vec![0.0; theta.len()];
        for i in 0..n {
            for j in 0..i {
                let w = a[i] * a[j] - kinv[(i, j)];
                // off-diagonal entries appear twice; the 1/2 cancels
                prep.ev.accumulate_grad(&prep.pts[i], &prep.pts[j], false, w, &mut grad);
            }
            let w = a[i] * a[i] - kinv[(i, i)] + diag_extra;
            prep.ev
                .accumulate_grad(&prep.pts[i], &prep.pts[i], true, 0.5 * w, &mut grad);
        }
        grad
    }

    fn pts_len(&self) -> usize {
        self.points.len()
    }

    fn objective_and_grad(&self, theta: &[f64], objective: Objective) -> Result<(f64, Vec<f64>)> {
        let prep = self.prepare(theta)?;
        let mut value = self.lml_at(&prep);
        let mut grad = self.lml_grad_at(&prep, theta);
        if objective == Objective::LmlPlusLatentPrior {
            for k in N_HYPER..theta.len() {
                value -= 0.5 * theta[k] * theta[k];
                grad[k] -= theta[k];
            }
        }
        Ok((value, grad))
    }
}

pub fn log_marginal_likelihood(p: &GpProblem) -> Result<f64> {
    let theta = p.params.to_flat();
    let prep = p.prepare(&theta)?;
    Ok(p.lml_at(&prep))
}

/// Gradient of the log marginal likelihood over the flat parameter vector
/// (see [`KernelParams::to_flat`]).
pub fn lml_gradient(p: &GpProblem) -> Result<Vec<f64>> {
    let theta = p.params.to_flat();
    let prep = p.prepare(&theta)?;
    Ok(p.lml_grad_at(&prep, &theta))
}

pub fn objective_value(p: &GpProblem, objective: Objective) -> Result<f64> {
    Ok(p.objective_and_grad(&p.params.to_flat(), objective)?.0)
}

pub fn objective_gradient(p: &GpProblem, objective: Objective) -> Result<Vec<f64>> {
    Ok(p.objective_and_grad(&p.params.to_flat(), objective)?.1)
}

/// Box constraints on the non-latent parameters during optimization.
fn hyper_bounds(n: usize) -> Vec<Option<(f64, f64)>> {
    let mut b = vec![None; n];
    for c in 0..3 {
        b[2 * c] = Some((-12.0, 8.0));
        b[2 * c + 1] = Some((-6.0, 6.0));
    }
    b[NOISE_INDEX] = Some((-28.0, 4.0));
    b
}

fn restart_init(p: &KernelParams, seed: u64, restart: usize) -> KernelParams {
    if restart == 0 {
        return p.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let hyper = Normal::new(0.0, 0.5).expect("valid normal");
    let latent = Normal::new(0.0, 0.1).expect("valid normal");
    let mut flat = p.to_flat();
    for (k, v) in flat.iter_mut().enumerate() {
        if k < N_HYPER {
            *v += hyper.sample(&mut rng);
        } else {
            *v = latent.sample(&mut rng);
        }
    }
    // keep restarts inside the optimizer box
    let bounds = hyper_bounds(flat.len());
    for (v, b) in flat.iter_mut().zip(&bounds) {
        if let Some((lo, hi)) = b {
            *v = v.clamp(*lo, *hi);
        }
    }
    p.with_flat(&flat)
}

/// Gradient ascent on `objective` from `p.params` (restart 0) and from
/// seeded perturbations of it (restarts 1..).
pub fn optimize(p: &GpProblem, objective: Objective, config: &OptimizeConfig) -> Result<OptimizeResult> {
    if config.restarts == 0 {
        return Err(Error::invalid("restarts must be at least 1"));
    }
    let lcfg = LbfgsConfig {
        max_iters: config.max_iters,
        tol: config.tol,
        memory: 10,
        max_step: 2.0,
    };
    let runs: Vec<Option<(KernelParams, optim::LbfgsOutcome)>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let init = restart_init(&p.params, config.seed, r);
            let problem = GpProblem {
                params: init.clone(),
                ..p.clone()
            };
            let x0 = init.to_flat();
            let bounds = hyper_bounds(x0.len());
            let out = optim::minimize(
                |theta| {
                    problem
                        .objective_and_grad(theta, objective)
                        .ok()
                        .map(|(v, g)| (-v, g.into_iter().map(|x| -x).collect()))
                },
                &x0,
                &bounds,
                &lcfg,
            )?;
            Some((init.with_flat(&out.x), out))
        })
        .collect();

    let restart_objectives: Vec<Option<f64>> = runs.iter().map(|r| r.as_ref().map(|(_, o)| -o.f)).collect();
    let mut best: Option<usize> = None;
    for (i, obj) in restart_objectives.iter().enumerate() {
        if let Some(v) = obj {
            if best.is_none_or(|b| *v > restart_objectives[b].unwrap_or(f64::NEG_INFINITY)) {
                best = Some(i);
            }
        }
    }
    let best = best.ok_or(Error::AllRestartsFailed(config.restarts))?;
    let (params, out) = runs.into_iter().nth(best).flatten().expect("best restart exists");
    Ok(OptimizeResult {
        params,
        objective: -out.f,
        trace: out.trace.iter().map(|v| -v).collect(),
        iterations: out.iterations,
        restart_objectives,
    })
}

/// Posterior predictive at `query` in the problem's (normalized) space.
pub fn posterior_predict(p: &GpProblem, query: &[GpPoint], full_covariance: bool) -> Result<PredictiveDistribution> {
    let theta = p.params.to_flat();
    let mut sets = resolve(&p.params, &[&p.points, query]);
    let q = sets.pop().unwrap_or_default();
    let pts = sets.pop().unwrap_or_default();
    let ev = Evaluator::new(p.spec.kind, &p.params, &theta);
    let factor = factorize(&ev.gram(&pts))?;
    let alpha = factor.chol.solve(&DVector::from_column_slice(&p.targets));
    let kx = ev.cross(&pts, &q);
    let means = (kx.transpose() * &alpha).iter().copied().collect();
    // v = L^{-1} K_*
    let mut v = kx;
    factor.chol.l_dirty().solve_lower_triangular_mut(&mut v);
    let noise = ev.noise();
    let variances = (0..q.len())
        .map(|j| {
            let prior = ev.cov(&q[j], &q[j], false);
            let reduce = v.column(j).norm_squared();
            (prior - reduce).max(0.0) + noise
        })
        .collect();
    let covariance = full_covariance.then(|| {
        let mut c = ev.cross(&q, &q) - v.transpose() * &v;
        // symmetrize round-off
        let ct = c.transpose();
        c = (c + ct) * 0.5;
        c
    });
    Ok(PredictiveDistribution {
        means,
        variances,
        covariance,
    })
}
