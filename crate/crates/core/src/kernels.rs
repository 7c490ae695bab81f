//! Composite covariance functions over `(x, task, within)` points.
//!
//! Every component is squared-exponential on the (already log10-mapped)
//! input. The latent-variable model adds a product of squared-exponential
//! kernels on per-task and per-within latent coordinates:
//!
//! ```text
//! magp: k_g(x,x') + k_H(h_t,h_t') k_W(w_d,w_d') k_x(x,x') + [t=t', d=d'] k_l(x,x') + [i=j] s2
//! dhgp: k_f(x,x') + [t=t'] k_g(x,x') + [t=t', d=d'] k_l(x,x') + [i=j] s2
//! ```
//!
//! The latent kernels have unit variance and unit lengthscale; the scale of
//! the latent coordinates is set by their standard-normal prior.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Number of non-latent entries at the front of the flat parameter vector.
pub const N_HYPER: usize = 7;
pub const NOISE_INDEX: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Magp,
    Dhgp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Magp => "magp",
            ModelKind::Dhgp => "dhgp",
        }
    }

    /// Component names in parameter order.
    pub fn components(self) -> [&'static str; 3] {
        match self {
            ModelKind::Magp => ["g", "x", "l"],
            ModelKind::Dhgp => ["f", "g", "l"],
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "magp" => Ok(ModelKind::Magp),
            "dhgp" => Ok(ModelKind::Dhgp),
            other => Err(format!("unknown GP model kind `{other}`")),
        }
    }
}

/// Fixed kernel families; only [`KernelParams`] vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: ModelKind,
}

impl KernelSpec {
    pub fn new(kind: ModelKind) -> Self {
        KernelSpec { kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeParams {
    pub log_variance: f64,
    pub log_lengthscale: f64,
}

impl SeParams {
    pub fn new(variance: f64, lengthscale: f64) -> Self {
        SeParams {
            log_variance: variance.ln(),
            log_lengthscale: lengthscale.ln(),
        }
    }
}

/// Kernel hyperparameters plus latent coordinates.
///
/// `components` are `[g, x, l]` for magp and `[f, g, l]` for dhgp. Latent
/// maps are empty for dhgp. Keys missing from `h`/`w` sit at the prior mean
/// (the zero vector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub components: [SeParams; 3],
    pub log_noise: f64,
    pub q_h: usize,
    pub q_w: usize,
    pub h: BTreeMap<String, Vec<f64>>,
    pub w: BTreeMap<String, Vec<f64>>,
}

impl KernelParams {
    pub fn new(components: [SeParams; 3], noise_variance: f64) -> Self {
        KernelParams {
            components,
            log_noise: noise_variance.ln(),
            q_h: 2,
            q_w: 2,
            h: BTreeMap::new(),
            w: BTreeMap::new(),
        }
    }

    pub fn noise_variance(&self) -> f64 {
        self.log_noise.exp()
    }

    pub fn n_flat(&self) -> usize {
        N_HYPER + self.h.len() * self.q_h + self.w.len() * self.q_w
    }

    /// Flat layout: `[lv0, ll0, lv1, ll1, lv2, ll2, log_noise, h..., w...]`
    /// with latent maps in key order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_flat());
        for c in &self.components {
            out.push(c.log_variance);
            out.push(c.log_lengthscale);
        }
        out.push(self.log_noise);
        out.extend(self.h.values().flatten());
        out.extend(self.w.values().flatten());
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_flat(), "flat parameter length mismatch");
        for (i, c) in self.components.iter_mut().enumerate() {
            c.log_variance = flat[2 * i];
            c.log_lengthscale = flat[2 * i + 1];
        }
        self.log_noise = flat[NOISE_INDEX];
        let mut at = N_HYPER;
        for v in self.h.values_mut() {
            v.copy_from_slice(&flat[at..at + self.q_h]);
            at += self.q_h;
        }
        for v in self.w.values_mut() {
            v.copy_from_slice(&flat[at..at + self.q_w]);
            at += self.q_w;
        }
    }

    pub fn with_flat(&self, flat: &[f64]) -> Self {
        let mut out = self.clone();
        out.set_flat(flat);
        out
    }

    /// Human-readable name of each flat entry.
    pub fn flat_names(&self, kind: ModelKind) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_flat());
        for c in kind.components() {
            names.push(format!("log_var_{c}"));
            names.push(format!("log_len_{c}"));
        }
        names.push("log_noise".into());
        for k in self.h.keys() {
            names.extend((0..self.q_h).map(|q| format!("h[{k}][{q}]")));
        }
        for k in self.w.keys() {
            names.extend((0..self.q_w).map(|q| format!("w[{k}][{q}]")));
        }
        names
    }

    /// Exchanges the two latent levels (and their dimensions).
    pub fn transposed(&self) -> Self {
        let mut out = self.clone();
        std::mem::swap(&mut out.h, &mut out.w);
        std::mem::swap(&mut out.q_h, &mut out.q_w);
        out
    }

    /// Sum of squared latent coordinates.
    pub fn latent_sq_norm(&self) -> f64 {
        self.h.values().chain(self.w.values()).flatten().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpPoint {
    /// Input on the model scale (log10 of steps or dataset size).
    pub x: f64,
    pub task: String,
    pub within: String,
}

impl GpPoint {
    pub fn new(x: f64, task: impl Into<String>, within: impl Into<String>) -> Self {
        GpPoint {
            x,
            task: task.into(),
            within: within.into(),
        }
    }
}

/// A point with labels interned and latents located in the flat vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Resolved {
    pub x: f64,
    pub task: usize,
    pub within: usize,
    pub h: Option<usize>,
    pub w: Option<usize>,
}

/// Resolves several point sets against one shared label table so that
/// indicator comparisons agree across sets.
pub(crate) fn resolve(params: &KernelParams, sets: &[&[GpPoint]]) -> Vec<Vec<Resolved>> {
    let mut h_off = HashMap::new();
    let mut at = N_HYPER;
    for k in params.h.keys() {
        h_off.insert(k.as_str(), at);
        at += params.q_h;
    }
    let mut w_off = HashMap::new();
    for k in params.w.keys() {
        w_off.insert(k.as_str(), at);
        at += params.q_w;
    }
    let mut tasks: HashMap<&str, usize> = HashMap::new();
    let mut withins: HashMap<&str, usize> = HashMap::new();
    sets.iter()
        .map(|set| {
            set.iter()
                .map(|p| {
                    let nt = tasks.len();
                    let nw = withins.len();
                    Resolved {
                        x: p.x,
                        task: *tasks.entry(p.task.as_str()).or_insert(nt),
                        within: *withins.entry(p.within.as_str()).or_insert(nw),
                        h: h_off.get(p.task.as_str()).copied(),
                        w: w_off.get(p.within.as_str()).copied(),
                    }
                })
                .collect()
        })
        .collect()
}

/// Kernel evaluation on a flat parameter vector.
pub(crate) struct Evaluator<'a> {
    kind: ModelKind,
    theta: &'a [f64],
    q_h: usize,
    q_w: usize,
    var: [f64; 3],
    inv_ls2: [f64; 3],
    noise: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(kind: ModelKind, params: &KernelParams, theta: &'a [f64]) -> Self {
        let mut var = [0.0; 3];
        let mut inv_ls2 = [0.0; 3];
        for i in 0..3 {
            var[i] = theta[2 * i].exp();
            inv_ls2[i] = (-2.0 * theta[2 * i + 1]).exp();
        }
        Evaluator {
            kind,
            theta,
            q_h: params.q_h,
            q_w: params.q_w,
            var,
            inv_ls2,
            noise: theta[NOISE_INDEX].exp(),
        }
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    fn latent_sq_dist(&self, a: Option<usize>, b: Option<usize>, q: usize) -> f64 {
        let th = self.theta;
        match (a, b) {
            (Some(i), Some(j)) if i == j => 0.0,
            (Some(i), Some(j)) => (0..q).map(|k| (th[i + k] - th[j + k]).powi(2)).sum(),
            (Some(i), None) | (None, Some(i)) => (0..q).map(|k| th[i + k].powi(2)).sum(),
            (None, None) => 0.0,
        }
    }

    #[inline]
    fn se(&self, c: usize, r2: f64) -> f64 {
        self.var[c] * (-0.5 * r2 * self.inv_ls2[c]).exp()
    }

    pub fn cov(&self, a: &Resolved, b: &Resolved, same: bool) -> f64 {
        let r2 = (a.x - b.x).powi(2);
        let same_task = a.task == b.task;
        let same_curve = same_task && a.within == b.within;
        let mut k = self.se(0, r2);
        match self.kind {
            ModelKind::Magp => {
                let dh = self.latent_sq_dist(a.h, b.h, self.q_h);
                let dw = self.latent_sq_dist(a.w, b.w, self.q_w);
                k += (-0.5 * (dh + dw)).exp() * self.se(1, r2);
            }
            ModelKind::Dhgp => {
                if same_task {
                    k += self.se(1, r2);
                }
            }
        }
        if same_curve {
            k += self.se(2, r2);
        }
        if same {
            k += self.noise;
        }
        k
    }

    /// Adds `weight * d cov(a, b) / d theta` into `grad`.
    pub fn accumulate_grad(&self, a: &Resolved, b: &Resolved, same: bool, weight: f64, grad: &mut [f64]) {
        let r2 = (a.x - b.x).powi(2);
        let same_task = a.task == b.task;
        let same_curve = same_task && a.within == b.within;

        let k0 = self.se(0, r2);
        grad[0] += weight * k0;
        grad[1] += weight * k0 * r2 * self.inv_ls2[0];

        match self.kind {
            ModelKind::Magp => {
                let dh = self.latent_sq_dist(a.h, b.h, self.q_h);
                let dw = self.latent_sq_dist(a.w, b.w, self.q_w);
                let t = (-0.5 * (dh + dw)).exp() * self.se(1, r2);
                grad[2] += weight * t;
                grad[3] += weight * t * r2 * self.inv_ls2[1];
                self.latent_grad(a.h, b.h, self.q_h, weight * t, grad);
                self.latent_grad(a.w, b.w, self.q_w, weight * t, grad);
            }
            ModelKind::Dhgp => {
                if same_task {
                    let k1 = self.se(1, r2);
                    grad[2] += weight * k1;
                    grad[3] += weight * k1 * r2 * self.inv_ls2[1];
                }
            }
        }
        if same_curve {
            let k2 = self.se(2, r2);
            grad[4] += weight * k2;
            grad[5] += weight * k2 * r2 * self.inv_ls2[2];
        }
        if same {
            grad[NOISE_INDEX] += weight * self.noise;
        }
    }

    /// Gradient of `scale * exp(-|u - v|^2 / 2)` with respect to u and v.
    fn latent_grad(&self, a: Option<usize>, b: Option<usize>, q: usize, scale: f64, grad: &mut [f64]) {
        let th = self.theta;
        match (a, b) {
            (Some(i), Some(j)) if i == j => {}
            (Some(i), Some(j)) => {
                for k in 0..q {
                    let d = th[i + k] - th[j + k];
                    grad[i + k] -= scale * d;
                    grad[j + k] += scale * d;
                }
            }
            (Some(i), None) | (None, Some(i)) => {
                for k in 0..q {
                    grad[i + k] -= scale * th[i + k];
                }
            }
            (None, None) => {}
        }
    }

    pub fn gram(&self, pts: &[Resolved]) -> DMatrix<f64> {
        let n = pts.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.cov(&pts[i], &pts[j], i == j);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Noise-free cross covariance, `rows x cols`.
    pub fn cross(&self, rows: &[Resolved], cols: &[Resolved]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.cov(&rows[i], &cols[j], false))
    }
}

fn single(kind: ModelKind, pi: &GpPoint, pj: &GpPoint, params: &KernelParams, same: bool) -> f64 {
    let theta = params.to_flat();
    let r = resolve(params, &[std::slice::from_ref(pi), std::slice::from_ref(pj)]);
    Evaluator::new(kind, params, &theta).cov(&r[0][0], &r[1][0], same)
}

/// Latent-variable covariance between two points; `same` adds the noise
/// variance (set it when both arguments are the same observation).
pub fn magp_cov(pi: &GpPoint, pj: &GpPoint, params: &KernelParams, same: bool) -> f64 {
    single(ModelKind::Magp, pi, pj, params, same)
}

/// Three-level hierarchical covariance between two points.
pub fn dhgp_cov(pi: &GpPoint, pj: &GpPoint, params: &KernelParams, same: bool) -> f64 {
    single(ModelKind::Dhgp, pi, pj, params, same)
}

/// Gram matrix with the noise variance on the diagonal.
pub fn gram(spec: &KernelSpec, points: &[GpPoint], params: &KernelParams) -> DMatrix<f64> {
    let theta = params.to_flat();
    let r = resolve(params, &[points]);
    Evaluator::new(spec.kind, params, &theta).gram(&r[0])
}

/// `d gram / d theta_k` for every entry of the flat parameter vector.
pub fn gram_grad(spec: &KernelSpec, points: &[GpPoint], params: &KernelParams) -> Vec<DMatrix<f64>> {
    let theta = params.to_flat();
    let r = &resolve(params, &[points])[0];
    let ev = Evaluator::new(spec.kind, params, &theta);
    let n = points.len();
    let p = theta.len();
    let mut out = vec![DMatrix::zeros(n, n); p];
    let mut buf = vec![0.0; p];
    for i in 0..n {
        for j in 0..=i {
            buf.iter_mut().for_each(|v| *v = 0.0);
            ev.accumulate_grad(&r[i], &r[j], i == j, 1.0, &mut buf);
            for (k, &g) in buf.iter().enumerate() {
                if g != 0.0 {
                    out[k][(i, j)] = g;
                    out[k][(j, i)] = g;
                }
            }
        }
    }
    out
}
