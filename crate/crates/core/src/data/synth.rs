//! Seeded synthetic curve grids, drawn either from the hierarchical GP prior
//! or from a parametric family.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CurveDataset, CurveKey, Direction, LearningCurve, Metric, XKind, N_PARAMS};
use crate::curves::CurveFamily;
use crate::error::{Error, Result};
use crate::gp::factorize;
use crate::kernels::{gram, GpPoint, KernelParams, KernelSpec, ModelKind, SeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    Magp,
    Parametric,
}

/// Deterministic mean added to every curve:
/// `intercept + slope_x * log10(x) + slope_size * log10(n_params / base)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Trend {
    pub intercept: f64,
    pub slope_x: f64,
    pub slope_size: f64,
}

impl Default for Trend {
    fn default() -> Self {
        Trend {
            intercept: 0.0,
            slope_x: 0.0,
            slope_size: 0.0,
        }
    }
}

/// Curve `(t, d)` gets `n_params = base_params * 2^t * 3^d` and compute
/// `6 * n_params * tokens_per_step * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeAxis {
    pub base_params: f64,
    pub tokens_per_step: f64,
}

impl Default for ComputeAxis {
    fn default() -> Self {
        ComputeAxis {
            base_params: 1e6,
            tokens_per_step: 65536.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub name: String,
    pub mode: SynthMode,
    pub tasks: usize,
    pub withins: usize,
    pub points_per_curve: usize,
    pub x_min: f64,
    pub x_max: f64,
    /// `(variance, lengthscale)` of the shared, task-correlated and
    /// per-curve components (magp mode; x in log10 units).
    pub kernel: [(f64, f64); 3],
    pub q_h: usize,
    pub q_w: usize,
    pub family: CurveFamily,
    /// Uniform sampling ranges for `(a, b, c)` (parametric mode).
    pub param_ranges: [(f64, f64); 3],
    pub noise_std: f64,
    pub trend: Trend,
    pub compute: Option<ComputeAxis>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            name: "synthetic".into(),
            mode: SynthMode::Magp,
            tasks: 5,
            withins: 6,
            points_per_curve: 11,
            x_min: 10.0,
            x_max: 1e4,
            kernel: [(0.5, 1.0), (1.0, 1.0), (0.05, 1.0)],
            q_h: 2,
            q_w: 2,
            family: CurveFamily::PowDecay,
            param_ranges: [(1.0, 3.0), (0.2, 0.8), (0.0, 1.0)],
            noise_std: 0.01,
            trend: Trend::default(),
            compute: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn x_grid(&self) -> Vec<f64> {
        let n = self.points_per_curve;
        let (lo, hi) = (self.x_min.log10(), self.x_max.log10());
        (0..n)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.tasks == 0 || self.withins == 0 {
            return Err(Error::invalid("synthetic grid needs at least one task and one within"));
        }
        if self.points_per_curve < 2 {
            return Err(Error::invalid("points_per_curve must be at least 2"));
        }
        if !(self.x_min > 0.0 && self.x_min < self.x_max) {
            return Err(Error::invalid("need 0 < x_min < x_max"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be non-negative"));
        }
        if self.kernel.iter().any(|&(v, l)| !(v > 0.0 && l > 0.0)) {
            return Err(Error::invalid("kernel variances and lengthscales must be positive"));
        }
        if self.param_ranges.iter().any(|&(lo, hi)| !(lo <= hi)) {
            return Err(Error::invalid("parameter ranges must satisfy lo <= hi"));
        }
        Ok(())
    }

    pub fn task_label(t: usize) -> String {
        format!("t{t}")
    }

    pub fn within_label(d: usize) -> String {
        format!("{}", d + 1)
    }

    /// Parameters that generate magp-mode data; latents are filled in by
    /// [`synth_generate`].
    pub fn generating_params(&self) -> KernelParams {
        let comps = self.kernel.map(|(v, l)| SeParams::new(v, l));
        let noise = (self.noise_std * self.noise_std).max(1e-12);
        let mut p = KernelParams::new(comps, noise);
        p.q_h = self.q_h;
        p.q_w = self.q_w;
        p
    }
}

/// Latent coordinates drawn for a magp-mode dataset, in draw order.
pub(crate) fn draw_latents(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> KernelParams {
    let mut p = cfg.generating_params();
    for t in 0..cfg.tasks {
        let v = (0..cfg.q_h).map(|_| StandardNormal.sample(rng)).collect();
        p.h.insert(SynthConfig::task_label(t), v);
    }
    for d in 0..cfg.withins {
        let v = (0..cfg.q_w).map(|_| StandardNormal.sample(rng)).collect();
        p.w.insert(SynthConfig::within_label(d), v);
    }
    p
}

/// Generates a `tasks x withins` grid. Deterministic given `config.seed`.
pub fn synth_generate(config: &SynthConfig) -> Result<CurveDataset> {
    Ok(synth_generate_with_params(config)?.0)
}

/// Like [`synth_generate`], also returning the generating kernel parameters
/// (magp mode; latents included).
pub fn synth_generate_with_params(config: &SynthConfig) -> Result<(CurveDataset, Option<KernelParams>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let xs = config.x_grid();
    let n = xs.len();
    let keys: Vec<(usize, usize)> = (0..config.tasks)
        .flat_map(|t| (0..config.withins).map(move |d| (t, d)))
        .collect();

    let (raw, params): (Vec<Vec<f64>>, Option<KernelParams>) = match config.mode {
        SynthMode::Magp => {
            let params = draw_latents(config, &mut rng);
            let mut pts = Vec::with_capacity(keys.len() * n);
            for &(t, d) in &keys {
                for &x in &xs {
                    pts.push(GpPoint::new(
                        x.log10(),
                        SynthConfig::task_label(t),
                        SynthConfig::within_label(d),
                    ));
                }
            }
            let mut latent = params.clone();
            latent.log_noise = (1e-12f64).ln();
            let k = gram(&KernelSpec::new(ModelKind::Magp), &pts, &latent);
            let chol = factorize(&k)?.chol;
            let z = DVector::from_iterator(pts.len(), (0..pts.len()).map(|_| StandardNormal.sample(&mut rng)));
            let f = chol.l() * z;
            let raw = f.as_slice().chunks(n).map(|c| c.to_vec()).collect();
            (raw, Some(params))
        }
        SynthMode::Parametric => {
            let mut raw = Vec::with_capacity(keys.len());
            for _ in &keys {
                let p: Vec<f64> = config
                    .param_ranges
                    .iter()
                    .map(|&(lo, hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) })
                    .collect();
                let ys = xs
                    .iter()
                    .map(|&x| config.family.eval(&p, x))
                    .collect::<Result<Vec<f64>>>()?;
                raw.push(ys);
            }
            (raw, None)
        }
    };

    let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let axis = config.compute.unwrap_or_default();
    let mut curves = Vec::with_capacity(keys.len());
    for (&(t, d), f) in keys.iter().zip(raw) {
        let n_params = axis.base_params * 2f64.powi(t as i32) * 3f64.powi(d as i32);
        let size_term = config.trend.slope_size * (n_params / axis.base_params).log10();
        let y: Vec<f64> = xs
            .iter()
            .zip(&f)
            .map(|(&x, &v)| {
                let eps = if config.noise_std > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                v + config.trend.intercept + config.trend.slope_x * x.log10() + size_term + eps
            })
            .collect();
        let key = CurveKey::new(SynthConfig::task_label(t), SynthConfig::within_label(d));
        let mut c = LearningCurve::new(key, xs.clone(), y)?.with_meta(N_PARAMS, n_params);
        if config.compute.is_some() {
            c = c.derive_compute(n_params, axis.tokens_per_step)?;
        }
        curves.push(c);
    }

    let ds = CurveDataset {
        name: config.name.clone(),
        metric: Metric::Loss,
        direction: Direction::LowerBetter,
        x_kind: XKind::Steps,
        task_axis_label: "task".into(),
        within_axis_label: "within".into(),
        curves,
    };
    ds.validate()?;
    Ok((ds, params))
}
