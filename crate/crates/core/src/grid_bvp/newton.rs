//! Damped Newton driver.

use super::banded::BandedMatrix;
use crate::error::{Error, Result};

/// A nonlinear system `F(x) = 0` that can solve its own Newton correction.
pub trait NonlinearSystem {
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Solves `J(x) dx = rhs`.
    fn solve_jacobian(&self, x: &[f64], rhs: &[f64]) -> Result<Vec<f64>>;

    /// Magnitude against which the residual tolerance is measured.
    fn scale(&self, _x: &[f64]) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Damping {
    /// Always take the full step.
    None,
    /// Halve the step until the residual decreases, down to `min_step`.
    Backtracking { min_step: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Relative to [`NonlinearSystem::scale`].
    pub tolerance: f64,
    /// Extra full steps taken once the residual test passes. Residual tests
    /// alone are weak when rows carry `h^2` factors.
    pub polish_steps: usize,
    pub damping: Damping,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iterations: 50,
            tolerance: 1e-12,
            polish_steps: 0,
            damping: Damping::Backtracking { min_step: 1.0 / 64.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual: f64,
    /// Sup-norm residual before each iteration, ending with the final one.
    pub history: Vec<f64>,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

pub fn newton_solve<S: NonlinearSystem + ?Sized>(
    system: &S,
    initial: Vec<f64>,
    options: &NewtonOptions,
) -> Result<(Vec<f64>, NewtonReport)> {
    if initial.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("Newton initial guess is not finite".into()));
    }
    let mut x = initial;
    let mut r = system.residual(&x)?;
    let mut norm = sup(&r);
    let mut history = vec![norm];
    let mut polished = 0usize;
    let tol = |x: &[f64]| options.tolerance * system.scale(x);
    for it in 0..options.max_iterations {
        if norm <= tol(&x) {
            if polished == options.polish_steps {
                return Ok((x, NewtonReport { iterations: it, residual: norm, history }));
            }
            polished += 1;
        }
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = system.solve_jacobian(&x, &neg)?;
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + step * d).collect();
            let attempt = system.residual(&trial);
            let accept = polished > 0 || match (&attempt, options.damping) {
                (Ok(tr), Damping::None) => {
                    let _ = tr;
                    true
                }
                (Ok(tr), Damping::Backtracking { min_step }) => {
                    sup(tr) < norm || step <= min_step
                }
                (Err(_), Damping::Backtracking { min_step }) if step > min_step => false,
                (Err(_), _) => true,
            };
            if accept {
                let tr = attempt?;
                x = trial;
                r = tr;
                norm = sup(&r);
                break;
            }
            step *= 0.5;
        }
        history.push(norm);
        if !norm.is_finite() {
            break;
        }
    }
    if norm <= tol(&x) && polished == options.polish_steps {
        let iterations = history.len() - 1;
        return Ok((x, NewtonReport { iterations, residual: norm, history }));
    }
    Err(Error::Convergence {
        iterations: history.len() - 1,
        residual: norm,
        last_iterate: x,
    })
}

/// Adapts closures with a dense Jacobian to [`NonlinearSystem`].
pub struct DenseSystem<R, J> {
    pub residual: R,
    pub jacobian: J,
}

impl<R, J> NonlinearSystem for DenseSystem<R, J>
where
    R: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Vec<Vec<f64>>,
{
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.residual)(x))
    }

    fn solve_jacobian(&self, x: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let rows = (self.jacobian)(x);
        let n = rhs.len();
        let band = n.saturating_sub(1);
        let mut m = BandedMatrix::zeros(n, band, band);
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        Ok(m.lu()?.solve(rhs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_square_root() {
        let sys = DenseSystem {
            residual: |x: &[f64]| vec![x[0] * x[0] - 4.0],
            jacobian: |x: &[f64]| vec![vec![2.0 * x[0]]],
        };
        let (x, report) = newton_solve(&sys, vec![1.0], &NewtonOptions::default()).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!(report.iterations < 10);
    }

    #[test]
    fn linear_problem_one_iteration() {
        let sys = DenseSystem {
            residual: |x: &[f64]| vec![2.0 * x[0] + x[1] - 3.0, x[0] - x[1]],
            jacobian: |_: &[f64]| vec![vec![2.0, 1.0], vec![1.0, -1.0]],
        };
        let (x, report) = newton_solve(&sys, vec![10.0, -4.0], &NewtonOptions::default()).unwrap();
        assert_eq!(report.iterations, 1);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reports_failure_with_last_iterate() {
        // no real root
        let sys = DenseSystem {
            residual: |x: &[f64]| vec![x[0] * x[0] + 1.0],
            jacobian: |x: &[f64]| vec![vec![2.0 * x[0]]],
        };
        let opts = NewtonOptions { max_iterations: 8, ..Default::default() };
        match newton_solve(&sys, vec![0.5], &opts) {
            Err(Error::Convergence { iterations, last_iterate, .. }) => {
                assert_eq!(iterations, 8);
                assert_eq!(last_iterate.len(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_guess() {
        let sys = DenseSystem {
            residual: |x: &[f64]| vec![x[0]],
            jacobian: |_: &[f64]| vec![vec![1.0]],
        };
        assert!(newton_solve(&sys, vec![f64::NAN], &NewtonOptions::default()).is_err());
    }
}
