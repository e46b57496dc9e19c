use rayon::prelude::*;

use super::CalibError;

const REFLECTION: f64 = 1.0;
const EXPANSION: f64 = 2.0;
const CONTRACTION: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadConfig {
    /// Offset of each initial simplex vertex from `x0`, per dimension.
    pub initial_step: Vec<f64>,
    pub max_iters: usize,
    /// Stop once every vertex lies within this distance of the best one.
    pub simplex_tolerance: f64,
}

impl NelderMeadConfig {
    pub fn validate(&self, dim: usize) -> Result<(), CalibError> {
        if self.initial_step.len() != dim {
            return Err(CalibError::InvalidConfig(format!(
                "initial_step has {} entries for a {dim}-dimensional problem",
                self.initial_step.len()
            )));
        }
        if self.initial_step.iter().any(|s| !(*s > 0.0)) {
            return Err(CalibError::InvalidConfig("initial steps must be positive".into()));
        }
        if self.max_iters < 1 {
            return Err(CalibError::InvalidConfig("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub best_history: Vec<f64>,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t·(b − a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Downhill simplex minimization with the standard coefficients
/// (reflection 1, expansion 2, contraction 0.5, shrink 0.5).
///
/// Non-finite objective values at trial points are treated as `+∞`; only a
/// non-finite value at `x0` is an error. Vertex batches (initial simplex and
/// shrink steps) are evaluated in parallel.
pub fn nelder_mead_minimize<F>(
    objective: F,
    x0: &[f64],
    cfg: &NelderMeadConfig,
) -> Result<NelderMeadResult, CalibError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x0.len();
    cfg.validate(n)?;
    let f0 = objective(x0);
    if !f0.is_finite() {
        return Err(CalibError::NonFiniteObjective);
    }
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += cfg.initial_step[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = std::iter::once(f0)
        .chain(simplex[1..].par_iter().map(|v| sanitize(objective(v))).collect::<Vec<_>>())
        .collect();
    let mut evaluations = n + 1;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        // stable sort: among equal values the earlier vertex stays best
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        if diameter < cfg.simplex_tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let (f_best, f_second, f_worst) = (values[0], values[n - 1], values[n]);

        let xr = lerp(&centroid, &worst, -REFLECTION);
        let fr = sanitize(objective(&xr));
        evaluations += 1;

        if fr < f_best {
            let xe = lerp(&centroid, &xr, EXPANSION);
            let fe = sanitize(objective(&xe));
            evaluations += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < f_second {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, accept_if) = if fr < f_worst {
                (lerp(&centroid, &xr, CONTRACTION), fr)
            } else {
                (lerp(&centroid, &worst, CONTRACTION), f_worst)
            };
            let fc = sanitize(objective(&xc));
            evaluations += 1;
            let accepted = if fr < f_worst { fc <= accept_if } else { fc < accept_if };
            if accepted {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for v in simplex[1..].iter_mut() {
                    *v = lerp(&best, v, SHRINK);
                }
                let shrunk: Vec<f64> = simplex[1..]
                    .par_iter()
                    .map(|v| sanitize(objective(v)))
                    .collect();
                values[1..].copy_from_slice(&shrunk);
                evaluations += n;
            }
        }
        history.push(values.iter().copied().fold(f64::INFINITY, f64::min));
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("simplex is non-empty");
    Ok(NelderMeadResult {
        x: simplex[best].clone(),
        f: values[best],
        iterations,
        evaluations,
        converged,
        best_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dim: usize, step: f64, iters: usize, tol: f64) -> NelderMeadConfig {
        NelderMeadConfig {
            initial_step: vec![step; dim],
            max_iters: iters,
            simplex_tolerance: tol,
        }
    }

    #[test]
    fn sphere_converges_to_origin() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let r = nelder_mead_minimize(f, &[1.0; 6], &cfg(6, 0.5, 20_000, 1e-10)).unwrap();
        assert!(r.converged);
        assert!(r.x.iter().all(|v| v.abs() < 1e-6), "{:?}", r.x);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead_minimize(f, &[-1.2, 1.0], &cfg(2, 0.1, 10_000, 1e-10)).unwrap();
        assert!(r.f < 1e-6, "f = {}", r.f);
        // embedded in six dimensions with quadratic padding
        let g = |x: &[f64]| f(x) + x[2..].iter().map(|v| v * v).sum::<f64>();
        let r = nelder_mead_minimize(g, &[-1.2, 1.0, 0.3, -0.2, 0.1, 0.4], &cfg(6, 0.1, 50_000, 1e-10))
            .unwrap();
        assert!(r.f < 1e-6, "f = {}", r.f);
    }

    #[test]
    fn single_iteration_no_worse_than_start() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + x[1].abs();
        let x0 = [0.5, 0.5];
        let r = nelder_mead_minimize(f, &x0, &cfg(2, 0.2, 1, 1e-12)).unwrap();
        assert!(r.f <= f(&x0));
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn best_value_never_increases() {
        let f = |x: &[f64]| (x[0] * 3.0).sin() + 0.1 * x[0] * x[0] + (x[1] - 0.5).powi(2);
        let r = nelder_mead_minimize(f, &[2.0, -1.0], &cfg(2, 0.3, 300, 1e-12)).unwrap();
        assert!(r.best_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn flat_objective_stays_at_start() {
        let x0 = [0.1, -0.2, 0.3];
        let r = nelder_mead_minimize(|_| 1.0, &x0, &cfg(3, 0.01, 500, 1e-9)).unwrap();
        assert_eq!(r.x, x0.to_vec());
    }

    #[test]
    fn errors() {
        assert!(matches!(
            nelder_mead_minimize(|_| f64::NAN, &[0.0], &cfg(1, 1.0, 10, 1e-6)),
            Err(CalibError::NonFiniteObjective)
        ));
        assert!(nelder_mead_minimize(|x| x[0], &[0.0], &cfg(2, 1.0, 10, 1e-6)).is_err());
        assert!(nelder_mead_minimize(|x| x[0], &[0.0], &cfg(1, 1.0, 0, 1e-6)).is_err());
    }

    #[test]
    fn nan_trial_points_are_rejected() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.2).powi(2) };
        let r = nelder_mead_minimize(f, &[1.0], &cfg(1, 0.5, 500, 1e-10)).unwrap();
        assert!((r.x[0] - 0.2).abs() < 1e-4);
    }
}
