//! Derivative-free minimization (Nelder-Mead) used by the likelihood layers.

use serde::{Deserialize, Serialize};

/// Nelder-Mead settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMead {
    /// Maximum number of objective evaluations across all restarts.
    pub max_evals: usize,
    /// Convergence threshold on the simplex diameter (max-norm distance of
    /// every vertex from the best one).
    pub tol: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_evals: 10_000,
            tol: 1e-10,
            initial_step: 0.5,
        }
    }
}

/// Result of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
const MAX_RESTARTS: usize = 4;

impl NelderMead {
    /// Minimize `f` starting at `x0`. Non-finite objective values are treated
    /// as +∞. After the simplex collapses, the search is restarted from the
    /// best vertex; it stops once a restart no longer improves the objective.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };

        let mut best_x = x0.to_vec();
        let mut best_v = eval(&best_x, &mut evals);
        let mut converged = false;
        for restart in 0..=MAX_RESTARTS {
            let (x, v, ok) = self.run(&mut eval, &best_x, &mut evals);
            let improved = v < best_v - 1e-12 * (1.0 + best_v.abs());
            if v <= best_v {
                best_x = x;
                best_v = v;
            }
            if !ok {
                converged = false;
                break;
            }
            converged = true;
            if restart > 0 && !improved {
                break;
            }
        }
        Minimum {
            x: best_x,
            value: best_v,
            evaluations: evals,
            converged,
        }
    }

    fn run<E>(&self, eval: &mut E, start: &[f64], evals: &mut usize) -> (Vec<f64>, f64, bool)
    where
        E: FnMut(&[f64], &mut usize) -> f64,
    {
        let dim = start.len();
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
        simplex.push((start.to_vec(), eval(start, evals)));
        for i in 0..dim {
            let mut x = start.to_vec();
            x[i] += self.initial_step;
            let v = eval(&x, evals);
            simplex.push((x, v));
        }

        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let diameter = simplex[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if diameter < self.tol {
                let (x, v) = simplex.swap_remove(0);
                return (x, v, true);
            }
            if *evals >= self.max_evals {
                let (x, v) = simplex.swap_remove(0);
                return (x, v, false);
            }

            let mut centroid = vec![0.0; dim];
            for (x, _) in &simplex[..dim] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / dim as f64;
                }
            }
            let worst = simplex[dim].clone();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let xr = along(REFLECT);
            let fr = eval(&xr, evals);
            if fr < simplex[0].1 {
                let xe = along(EXPAND);
                let fe = eval(&xe, evals);
                simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[dim - 1].1 {
                simplex[dim] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < worst.1 {
                let xc = along(CONTRACT);
                let fc = eval(&xc, evals);
                (xc, fc)
            } else {
                let xc = along(-CONTRACT);
                let fc = eval(&xc, evals);
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[dim] = (xc, fc);
                continue;
            }
            let best = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                let x: Vec<f64> = best
                    .iter()
                    .zip(&vertex.0)
                    .map(|(b, v)| b + SHRINK * (v - b))
                    .collect();
                let v = eval(&x, evals);
                *vertex = (x, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_minimum() {
        let nm = NelderMead::default();
        let res = nm.minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
        );
        assert!(res.converged);
        assert!((res.x[0] - 1.0).abs() < 1e-7, "{:?}", res.x);
        assert!((res.x[1] - 1.0).abs() < 1e-7, "{:?}", res.x);
    }

    #[test]
    fn restart_from_minimum_is_stationary() {
        let nm = NelderMead::default();
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + 0.5 * x[0] * x[1];
        let first = nm.minimize(f, &[0.0, 0.0]);
        let again = nm.minimize(f, &first.x);
        assert!((first.value - again.value).abs() < 1e-8);
    }

    #[test]
    fn budget_exhaustion_reports_not_converged() {
        let nm = NelderMead {
            max_evals: 10,
            ..NelderMead::default()
        };
        let res = nm.minimize(|x| x[0].powi(2) + x[1].powi(2), &[5.0, 5.0]);
        assert!(!res.converged);
        assert!(res.evaluations <= 14);
    }

    #[test]
    fn non_finite_values_are_avoided() {
        let nm = NelderMead::default();
        let res = nm.minimize(
            |x| if x[0] <= 0.0 { f64::NAN } else { (x[0].ln()).powi(2) + x[1].powi(2) },
            &[2.0, 1.0],
        );
        assert!(res.converged);
        assert!((res.x[0] - 1.0).abs() < 1e-6);
    }
}
