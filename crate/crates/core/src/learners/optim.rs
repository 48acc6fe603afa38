//! Unconstrained smooth minimisation: L-BFGS and truncated Newton.

/// Outcome of an optimiser run.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const STALL_LIMIT: usize = 5;

/// Decrease lost in rounding: the gradient test can no longer be met.
fn stalled(before: f64, after: f64) -> bool {
    before - after <= 4.0 * f64::EPSILON * before.abs().max(1.0)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Backtracking Armijo search along `d` from `x`. Returns the accepted step
/// and the new value, or `None` if no strict decrease was found.
fn backtrack<F>(
    f: &mut F,
    x: &[f64],
    fx: f64,
    g: &[f64],
    d: &[f64],
    mut step: f64,
) -> Option<(f64, f64, Vec<f64>, Vec<f64>)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let slope = dot(g, d);
    if slope >= 0.0 {
        return None;
    }
    let mut xn = vec![0.0; x.len()];
    let mut gn = vec![0.0; x.len()];
    for _ in 0..60 {
        for i in 0..x.len() {
            xn[i] = x[i] + step * d[i];
        }
        let fxn = f(&xn, &mut gn);
        if fxn.is_finite() && fxn <= fx + 1e-4 * step * slope && fxn < fx {
            return Some((step, fxn, xn, gn));
        }
        step *= 0.5;
    }
    None
}

/// Limited-memory BFGS with `m` correction pairs. `f` writes the gradient
/// into its second argument and returns the value.
pub fn lbfgs<F>(mut f: F, x0: Vec<f64>, m: usize, gtol: f64, max_iter: usize) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho: Vec<f64> = Vec::new();
    let mut stalls = 0;
    for it in 0..max_iter {
        if max_abs(&g) < gtol {
            return Minimum {
                x,
                value: fx,
                iterations: it,
                converged: true,
            };
        }
        // two-loop recursion
        let mut q = g.clone();
        let k = s_hist.len();
        let mut a = vec![0.0; k];
        for i in (0..k).rev() {
            a[i] = rho[i] * dot(&s_hist[i], &q);
            for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
                *qj -= a[i] * yj;
            }
        }
        let gamma = if k > 0 {
            dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1])
        } else {
            1.0 / max_abs(&g).max(1.0)
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for i in 0..k {
            let b = rho[i] * dot(&y_hist[i], &q);
            for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
                *qj += (a[i] - b) * sj;
            }
        }
        let d: Vec<f64> = q.iter().map(|v| -v).collect();
        let accepted = backtrack(&mut f, &x, fx, &g, &d, 1.0).or_else(|| {
            s_hist.clear();
            y_hist.clear();
            rho.clear();
            let sd: Vec<f64> = g.iter().map(|v| -v).collect();
            backtrack(&mut f, &x, fx, &g, &sd, 1.0 / max_abs(&g).max(1.0))
        });
        let Some((_, fxn, xn, gn)) = accepted else {
            return Minimum {
                x,
                value: fx,
                iterations: it,
                converged: false,
            };
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&yv, &yv).sqrt() * dot(&s, &s).sqrt() {
            if s_hist.len() == m {
                s_hist.remove(0);
                y_hist.remove(0);
                rho.remove(0);
            }
            s_hist.push(s);
            y_hist.push(yv);
            rho.push(1.0 / sy);
        }
        stalls = if stalled(fx, fxn) { stalls + 1 } else { 0 };
        x = xn;
        g = gn;
        fx = fxn;
        if stalls >= STALL_LIMIT {
            return Minimum {
                converged: max_abs(&g) < gtol,
                x,
                value: fx,
                iterations: it + 1,
            };
        }
    }
    let converged = max_abs(&g) < gtol;
    Minimum {
        x,
        value: fx,
        iterations: max_iter,
        converged,
    }
}

/// Truncated Newton: conjugate gradients on Hessian-vector products, then a
/// backtracking step. `hess` is prepared at a point and returns a closure
/// computing `H v`.
pub fn newton_cg<F, H>(mut f: F, mut hess: H, x0: Vec<f64>, gtol: f64, max_iter: usize) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    H: FnMut(&[f64], &[f64], &mut [f64]),
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut stalls = 0;
    for it in 0..max_iter {
        let gnorm = max_abs(&g);
        if gnorm < gtol {
            return Minimum {
                x,
                value: fx,
                iterations: it,
                converged: true,
            };
        }
        // solve H p = -g
        let g2 = dot(&g, &g);
        let tol = (0.5f64).min(g2.sqrt().sqrt()) * g2.sqrt();
        let mut p = vec![0.0; n];
        let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut dir = r.clone();
        let mut rr = g2;
        let mut hd = vec![0.0; n];
        for _ in 0..(2 * n).max(20) {
            if rr.sqrt() <= tol {
                break;
            }
            hess(&x, &dir, &mut hd);
            let curv = dot(&dir, &hd);
            if curv <= 1e-16 * dot(&dir, &dir) {
                if p.iter().all(|v| *v == 0.0) {
                    p = g.iter().map(|v| -v).collect();
                }
                break;
            }
            let alpha = rr / curv;
            for i in 0..n {
                p[i] += alpha * dir[i];
                r[i] -= alpha * hd[i];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n {
                dir[i] = r[i] + beta * dir[i];
            }
        }
        let accepted = backtrack(&mut f, &x, fx, &g, &p, 1.0).or_else(|| {
            let sd: Vec<f64> = g.iter().map(|v| -v).collect();
            backtrack(&mut f, &x, fx, &g, &sd, 1.0 / gnorm.max(1.0))
        });
        let Some((_, fxn, xn, gn)) = accepted else {
            return Minimum {
                x,
                value: fx,
                iterations: it,
                converged: false,
            };
        };
        stalls = if stalled(fx, fxn) { stalls + 1 } else { 0 };
        x = xn;
        g = gn;
        fx = fxn;
        if stalls >= STALL_LIMIT {
            return Minimum {
                converged: max_abs(&g) < gtol,
                x,
                value: fx,
                iterations: it + 1,
            };
        }
    }
    let converged = max_abs(&g) < gtol;
    Minimum {
        x,
        value: fx,
        iterations: max_iter,
        converged,
    }
}
