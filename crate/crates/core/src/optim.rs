//! Derivative-free local minimisers.
//!
//! [`nelder_mead`] is the reference backend: simplex search with dimension-adaptive
//! coefficients and restarts from the best vertex whenever the simplex collapses
//! before the evaluation budget is spent. [`trust_linear`] fits a linear model on
//! `n + 1` interpolation points and steps against its gradient inside a shrinking
//! trust radius, in the spirit of COBYLA without constraints.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Simplex,
    TrustLinear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOptions {
    pub max_evals: usize,
    /// Initial simplex edge / trust radius.
    pub initial_step: f64,
    /// Simplex diameter (or trust radius) below which a run has converged.
    pub xtol: f64,
    /// Spread of simplex values below which a run has converged.
    pub ftol: f64,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self {
            max_evals: 200,
            initial_step: 0.3,
            xtol: 1e-8,
            ftol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
}

pub fn minimize(
    kind: OptimizerKind,
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &LocalOptions,
) -> LocalResult {
    match kind {
        OptimizerKind::Simplex => nelder_mead(f, x0, opts),
        OptimizerKind::TrustLinear => trust_linear(f, x0, opts),
    }
}

struct Counted<'a> {
    f: &'a mut dyn FnMut(&[f64]) -> f64,
    evals: usize,
    best_x: Vec<f64>,
    best_f: f64,
}

impl<'a> Counted<'a> {
    fn new(f: &'a mut dyn FnMut(&[f64]) -> f64, x0: &[f64]) -> Self {
        Self {
            f,
            evals: 0,
            best_x: x0.to_vec(),
            best_f: f64::INFINITY,
        }
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < self.best_f {
            self.best_f = v;
            self.best_x.clear();
            self.best_x.extend_from_slice(x);
        }
        v
    }

    fn finish(self) -> LocalResult {
        LocalResult {
            x: self.best_x,
            fx: self.best_f,
            evals: self.evals,
        }
    }
}

/// Adaptive Nelder–Mead with best-vertex restarts.
pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &LocalOptions,
) -> LocalResult {
    let n = x0.len();
    let mut obj = Counted::new(f, x0);
    if n == 0 {
        obj.eval(x0);
        return obj.finish();
    }
    let nf = n as f64;
    let (alpha, chi) = (1.0, 1.0 + 2.0 / nf);
    let gamma = 0.75 - 1.0 / (2.0 * nf);
    let sigma = 1.0 - 1.0 / nf;

    let mut start = x0.to_vec();
    let mut last_restart_value = f64::INFINITY;
    'restart: while obj.evals + n < opts.max_evals {
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let f0 = obj.eval(&start);
        simplex.push((start.clone(), f0));
        for i in 0..n {
            let mut x = start.clone();
            x[i] += opts.initial_step;
            let fx = obj.eval(&x);
            simplex.push((x, fx));
        }

        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            let spread = worst - best;
            let diameter = simplex[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if (spread <= opts.ftol && diameter <= opts.initial_step) || diameter <= opts.xtol {
                // collapsed: restart around the best point unless the last
                // restart brought no progress
                if last_restart_value - best <= opts.ftol {
                    break 'restart;
                }
                last_restart_value = best;
                start = simplex[0].0.clone();
                continue 'restart;
            }
            if obj.evals >= opts.max_evals {
                break 'restart;
            }

            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / nf;
                }
            }
            let along = |coef: f64, from: &[f64]| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(from)
                    .map(|(c, w)| c + coef * (c - w))
                    .collect()
            };
            let xr = along(alpha, &simplex[n].0);
            let fr = obj.eval(&xr);
            let second_worst = simplex[n - 1].1;

            if fr < best {
                let xe = along(alpha * chi, &simplex[n].0);
                let fe = obj.eval(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < second_worst {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < worst {
                let xc = along(alpha * gamma, &simplex[n].0);
                let fc = obj.eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-gamma, &simplex[n].0);
                let fc = obj.eval(&xc);
                (xc, fc)
            };
            if fc < fr.min(worst) {
                simplex[n] = (xc, fc);
                continue;
            }
            // shrink towards the best vertex
            let x_best = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                let x: Vec<f64> = x_best
                    .iter()
                    .zip(&vertex.0)
                    .map(|(b, v)| b + sigma * (v - b))
                    .collect();
                let fx = obj.eval(&x);
                *vertex = (x, fx);
                if obj.evals >= opts.max_evals {
                    break 'restart;
                }
            }
        }
    }
    if obj.evals == 0 {
        obj.eval(x0);
    }
    obj.finish()
}

// Solve A x = b in place by Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Linear-model trust-region descent on `n + 1` interpolation points.
pub fn trust_linear(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &LocalOptions,
) -> LocalResult {
    let n = x0.len();
    let mut obj = Counted::new(f, x0);
    if n == 0 {
        obj.eval(x0);
        return obj.finish();
    }
    let mut rho = opts.initial_step;
    let rho_end = opts.xtol.max(1e-12);

    let mut center = x0.to_vec();
    let mut f_center = obj.eval(&center);
    'outer: while rho > rho_end && obj.evals + n < opts.max_evals {
        // interpolation set: center plus one point per axis
        let mut points: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = center.clone();
            x[i] += rho;
            let fx = obj.eval(&x);
            points.push((x, fx));
        }
        loop {
            if obj.evals >= opts.max_evals {
                break 'outer;
            }
            let a: Vec<Vec<f64>> = points
                .iter()
                .map(|(x, _)| x.iter().zip(&center).map(|(p, c)| p - c).collect())
                .collect();
            let b: Vec<f64> = points.iter().map(|(_, fx)| fx - f_center).collect();
            let Some(grad) = solve_linear(a, b) else {
                continue 'outer;
            };
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm < 1e-300 {
                rho *= 0.5;
                continue 'outer;
            }
            let trial: Vec<f64> = center
                .iter()
                .zip(&grad)
                .map(|(c, g)| c - rho * g / gnorm)
                .collect();
            let f_trial = obj.eval(&trial);
            let predicted = rho * gnorm;
            let actual = f_center - f_trial;
            if actual > 0.0 {
                // the old center joins the interpolation set in place of the
                // point farthest from the new center
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, (x, _))| {
                        (i, x.iter().zip(&trial).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                    })
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| i)
                    .expect("n > 0");
                points[far] = (std::mem::replace(&mut center, trial), f_center);
                f_center = f_trial;
                if actual > 0.7 * predicted {
                    rho *= 1.5;
                }
                // keep the interpolation set within a few radii of the center
                let spread = points
                    .iter()
                    .map(|(x, _)| {
                        x.iter()
                            .zip(&center)
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0, f64::max)
                    })
                    .fold(0.0, f64::max);
                if spread > 4.0 * rho {
                    continue 'outer;
                }
            } else {
                rho *= 0.5;
                continue 'outer;
            }
        }
    }
    obj.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    fn sphere(x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(i, v)| (v - i as f64 * 0.1).powi(2)).sum()
    }

    #[test]
    fn nm_solves_rosenbrock() {
        let opts = LocalOptions {
            max_evals: 5000,
            initial_step: 0.5,
            ..Default::default()
        };
        let r = nelder_mead(&mut |x| rosenbrock(x), &[-1.2, 1.0], &opts);
        assert!(r.fx < 1e-10, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-4);
        assert!(r.evals <= 5000);
    }

    #[test]
    fn nm_high_dimensional_sphere() {
        let opts = LocalOptions {
            max_evals: 20_000,
            ..Default::default()
        };
        let r = nelder_mead(&mut |x| sphere(x), &[1.0; 12], &opts);
        assert!(r.fx < 1e-10, "{}", r.fx);
    }

    #[test]
    fn nm_respects_budget_and_never_worsens() {
        let opts = LocalOptions {
            max_evals: 30,
            ..Default::default()
        };
        let x0 = [2.0, -1.0, 0.5];
        let f0 = sphere(&x0);
        let r = nelder_mead(&mut |x| sphere(x), &x0, &opts);
        assert!(r.evals <= 30 + 3);
        assert!(r.fx <= f0);
    }

    #[test]
    fn trust_linear_descends() {
        let opts = LocalOptions {
            max_evals: 4000,
            initial_step: 0.5,
            ..Default::default()
        };
        let r = trust_linear(&mut |x| sphere(x), &[1.0; 6], &opts);
        assert!(r.fx < 1e-6, "{}", r.fx);
        let r = trust_linear(&mut |x| rosenbrock(x), &[-1.2, 1.0], &opts);
        assert!(r.fx < rosenbrock(&[-1.2, 1.0]));
    }

    #[test]
    fn deterministic() {
        let opts = LocalOptions::default();
        let a = nelder_mead(&mut |x| rosenbrock(x), &[0.3, 0.2], &opts);
        let b = nelder_mead(&mut |x| rosenbrock(x), &[0.3, 0.2], &opts);
        assert_eq!(a, b);
    }

    #[test]
    fn linear_solver() {
        let x = solve_linear(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(solve_linear(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
    }
}
