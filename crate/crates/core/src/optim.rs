//! Limited-memory BFGS with projected Armijo backtracking.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub(crate) struct LbfgsConfig {
    pub max_iters: usize,
    /// Stop once an accepted step changes the objective by less than this.
    pub tol: f64,
    pub memory: usize,
    /// Largest Euclidean step length tried by the line search.
    pub max_step: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    /// Objective after initialization and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Minimizes `f`, which returns `None` where it cannot be evaluated.
/// Iterates are clamped into `bounds` (per coordinate, `None` = free).
/// Returns `None` only when the starting point cannot be evaluated.
pub(crate) fn minimize<F>(
    mut f: F,
    x0: &[f64],
    bounds: &[Option<(f64, f64)>],
    cfg: &LbfgsConfig,
) -> Option<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let project = |x: &mut [f64]| {
        for (v, b) in x.iter_mut().zip(bounds) {
            if let Some((lo, hi)) = b {
                *v = v.clamp(*lo, *hi);
            }
        }
    };
    let mut x = x0.to_vec();
    project(&mut x);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return None;
    }
    let mut trace = vec![fx];
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let mut d = two_loop(&g, &hist);
        freeze_active(&mut d, &x, bounds);
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            // not a descent direction; fall back to steepest descent
            hist.clear();
            d = g.iter().map(|v| -v).collect();
            freeze_active(&mut d, &x, bounds);
            slope = dot(&d, &g);
            if !(slope < 0.0) {
                break;
            }
        }
        let norm = dot(&d, &d).sqrt();
        let mut step = if norm > cfg.max_step { cfg.max_step / norm } else { 1.0 };

        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            project(&mut xn);
            if let Some((fn_, gn)) = f(&xn) {
                if fn_.is_finite() && fn_ <= fx + 1e-4 * step * slope {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else { break };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if hist.len() == cfg.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let change = (fx - fn_).abs();
        x = xn;
        fx = fn_;
        g = gn;
        trace.push(fx);
        if change < cfg.tol {
            break;
        }
    }
    Some(LbfgsOutcome {
        x,
        f: fx,
        trace,
        iterations,
    })
}

/// Drops direction components that push a coordinate further past its bound.
fn freeze_active(d: &mut [f64], x: &[f64], bounds: &[Option<(f64, f64)>]) {
    for ((di, &xi), b) in d.iter_mut().zip(x).zip(bounds) {
        if let Some((lo, hi)) = b {
            if (xi <= *lo && *di < 0.0) || (xi >= *hi && *di > 0.0) {
                *di = 0.0;
            }
        }
    }
}

fn two_loop(g: &[f64], hist: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y, rho) in hist.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = hist.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
