//! Small dense BFGS minimiser with finite-difference gradients.
//!
//! The objective may return `+inf` to mark points outside the feasible
//! region; line searches backtrack out of such points and gradients fall
//! back to one-sided differences next to them.

#[derive(Debug, Clone, Copy)]
pub struct BfgsSettings {
    pub max_iter: usize,
    /// Stop when an iteration lowers the objective by less than this.
    pub f_tol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
    /// Longest step allowed in one iteration (Euclidean).
    pub max_step: f64,
}

impl Default for BfgsSettings {
    fn default() -> Self {
        Self {
            max_iter: 200,
            f_tol: 1e-4,
            fd_step: 1e-4,
            max_step: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
#[allow(dead_code)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Counted<F> {
    f: F,
    calls: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.calls += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn gradient<F: FnMut(&[f64]) -> f64>(obj: &mut Counted<F>, x: &[f64], fx: f64, rel: f64) -> Option<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = rel * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = obj.eval(&probe);
        probe[i] = x[i] - h;
        let down = obj.eval(&probe);
        probe[i] = x[i];
        g[i] = match (up.is_finite(), down.is_finite()) {
            (true, true) => (up - down) / (2.0 * h),
            (true, false) => (up - fx) / h,
            (false, true) => (fx - down) / h,
            (false, false) => return None,
        };
    }
    Some(g)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Minimises `f` starting from `x0`, which must have a finite value.
pub fn minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], settings: &BfgsSettings) -> BfgsOutcome {
    let n = x0.len();
    let mut obj = Counted { f, calls: 0 };
    let mut x = x0.to_vec();
    let mut fx = obj.eval(&x);
    let mut h_inv = identity(n);
    let mut converged = false;
    let mut iterations = 0;

    if !fx.is_finite() {
        return BfgsOutcome {
            x,
            f: fx,
            iterations,
            evaluations: obj.calls,
            converged,
        };
    }
    let mut g = match gradient(&mut obj, &x, fx, settings.fd_step) {
        Some(g) => g,
        None => {
            return BfgsOutcome {
                x,
                f: fx,
                iterations,
                evaluations: obj.calls,
                converged,
            }
        }
    };

    while iterations < settings.max_iter {
        iterations += 1;
        if dot(&g, &g).sqrt() < 1e-12 {
            converged = true;
            break;
        }
        let mut accepted = None;
        for attempt in 0..2 {
            if attempt == 1 {
                h_inv = identity(n);
            }
            let mut p: Vec<f64> = h_inv.iter().map(|row| -dot(row, &g)).collect();
            let mut slope = dot(&p, &g);
            if slope >= 0.0 {
                p = g.iter().map(|v| -v).collect();
                slope = dot(&p, &g);
            }
            let norm = dot(&p, &p).sqrt();
            let mut step = if norm > settings.max_step {
                settings.max_step / norm
            } else {
                1.0
            };
            for _ in 0..40 {
                let trial: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| xi + step * pi).collect();
                let ft = obj.eval(&trial);
                if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                    accepted = Some((trial, ft));
                    break;
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        let (x_new, f_new) = match accepted {
            Some(a) => a,
            None => {
                // no descent along either direction: a stationary point
                converged = true;
                break;
            }
        };
        let g_new = match gradient(&mut obj, &x_new, f_new, settings.fd_step) {
            Some(g) => g,
            None => {
                x = x_new;
                fx = f_new;
                break;
            }
        };
        let improvement = fx - f_new;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            let rho = 1.0 / sy;
            let hy: Vec<f64> = h_inv.iter().map(|row| dot(row, &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h_inv[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        if improvement < settings.f_tol {
            converged = true;
            break;
        }
    }

    BfgsOutcome {
        x,
        f: fx,
        iterations,
        evaluations: obj.calls,
        converged,
    }
}
