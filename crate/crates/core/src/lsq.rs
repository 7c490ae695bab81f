//! Bounded Levenberg-Marquardt for small dense least-squares problems.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmConfig {
    pub max_iters: usize,
    /// Relative decrease of the residual sum of squares below which an
    /// accepted step ends the search.
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub params: Vec<f64>,
    pub ssr: f64,
}

fn ssr(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimizes the sum of squares of `residuals(p)` with `p` clamped to
/// `[lo, hi]`. `residuals` returns `None` (or non-finite values) where the
/// model cannot be evaluated. Jacobians are central differences.
pub(crate) fn levenberg_marquardt<F>(
    residuals: F,
    p0: &[f64],
    lo: &[f64],
    hi: &[f64],
    cfg: &LmConfig,
) -> Option<LmOutcome>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let eval = |p: &[f64]| -> Option<(Vec<f64>, f64)> {
        let r = residuals(p)?;
        let s = ssr(&r);
        s.is_finite().then_some((r, s))
    };
    let clamp = |p: &mut [f64]| {
        for i in 0..p.len() {
            p[i] = p[i].clamp(lo[i], hi[i]);
        }
    };
    let mut p = p0.to_vec();
    clamp(&mut p);
    let (mut r, mut s) = eval(&p)?;
    let np = p.len();
    let mut lambda = 1e-3;

    for _ in 0..cfg.max_iters {
        if s == 0.0 {
            break;
        }
        let Some(jac) = jacobian(&residuals, &p, lo, hi, r.len()) else {
            break;
        };
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);

        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..np {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(delta) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let mut cand: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            clamp(&mut cand);
            if let Some((rc, sc)) = eval(&cand) {
                if sc < s {
                    let rel = (s - sc) / s;
                    p = cand;
                    r = rc;
                    s = sc;
                    lambda = (lambda / 3.0).max(1e-15);
                    improved = true;
                    if rel < cfg.tol {
                        return Some(LmOutcome { params: p, ssr: s });
                    }
                    break;
                }
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved {
            break;
        }
    }
    Some(LmOutcome { params: p, ssr: s })
}

fn jacobian<F>(residuals: &F, p: &[f64], lo: &[f64], hi: &[f64], m: usize) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let np = p.len();
    let mut jac = DMatrix::zeros(m, np);
    for k in 0..np {
        let h = 1e-7 * p[k].abs().max(1e-3);
        let up = (p[k] + h).min(hi[k]);
        let down = (p[k] - h).max(lo[k]);
        if up <= down {
            continue;
        }
        let mut pu = p.to_vec();
        pu[k] = up;
        let mut pd = p.to_vec();
        pd[k] = down;
        let ru = residuals(&pu)?;
        let rd = residuals(&pd)?;
        for i in 0..m {
            let d = (ru[i] - rd[i]) / (up - down);
            if !d.is_finite() {
                return None;
            }
            jac[(i, k)] = d;
        }
    }
    Some(jac)
}
