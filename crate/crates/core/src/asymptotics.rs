//! Closed-form solutions of the model problem
//!
//! ```text
//! -psi'' - psi'/r + n^2 psi / r^2 = eta + f(r),   1 - eps < r < 1,   psi'(1) = 0
//! ```
//!
//! for `n` in {0, 1}: the particular solution `psi1` for constant forcing, the
//! variation-of-parameters kernel `K[f]`, and the homogeneous coefficient `A`
//! fixed by an inner Robin or Dirichlet condition. These are independent of
//! the finite-difference path and serve as its oracle.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid_bvp::{assemble_ln, solve_linear_system, BoundaryCondition, Grid, RadialField, Side};

fn check_mode(n: u32) -> Result<()> {
    if n > 1 {
        return Err(Error::UnsupportedMode(n));
    }
    Ok(())
}

/// `[psi1, psi1', psi1'', psi1''']` at `r`.
pub fn psi1_derivatives(n: u32, eta: f64, r: f64) -> Result<[f64; 4]> {
    check_mode(n)?;
    if !(r > 0.0) {
        return Err(Error::Domain(format!("psi1 needs r > 0, got {r}")));
    }
    Ok(if n == 1 {
        [
            eta * (-1.0 / (6.0 * r) + r / 2.0 - r * r / 3.0),
            eta * (1.0 / (6.0 * r * r) + 0.5 - 2.0 * r / 3.0),
            eta * (-1.0 / (3.0 * r * r * r) - 2.0 / 3.0),
            eta / r.powi(4),
        ]
    } else {
        [
            eta * ((1.0 - r * r) / 4.0 + 0.5 * r.ln()),
            eta * (-r / 2.0 + 0.5 / r),
            eta * (-0.5 - 0.5 / (r * r)),
            eta / (r * r * r),
        ]
    })
}

pub fn eval_psi1(n: u32, eta: f64, r: f64) -> Result<f64> {
    Ok(psi1_derivatives(n, eta, r)?[0])
}

pub fn eval_psi1_derivative(n: u32, eta: f64, r: f64) -> Result<f64> {
    Ok(psi1_derivatives(n, eta, r)?[1])
}

/// `a0 + sum_k a_k cos(k w (r - r0)) + b_k sin(k w (r - r0))`
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    pub origin: f64,
    pub frequency: f64,
    pub constant: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigPolynomial {
    pub fn eval(&self, r: f64) -> f64 {
        let t = self.frequency * (r - self.origin);
        let mut v = self.constant;
        for (k, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let kt = (k + 1) as f64 * t;
            v += a * kt.cos() + b * kt.sin();
        }
        v
    }

    /// Random polynomial of the given degree on `[1 - eps, 1]` whose
    /// coefficients have absolute sum at most `bound`.
    pub fn random(rng: &mut impl Rng, degree: usize, epsilon: f64, bound: f64) -> Self {
        let mut coeffs: Vec<f64> = (0..2 * degree + 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let total: f64 = coeffs.iter().map(|c| c.abs()).sum();
        let scale = bound * rng.gen_range(0.1..1.0) / total;
        coeffs.iter_mut().for_each(|c| *c *= scale);
        TrigPolynomial {
            origin: 1.0 - epsilon,
            frequency: 2.0 * PI / epsilon,
            constant: coeffs[0],
            cos: coeffs[1..=degree].to_vec(),
            sin: coeffs[degree + 1..].to_vec(),
        }
    }

    /// Sup norm sampled on a fine uniform mesh of `[1 - eps, 1]` (a lower
    /// bound on the true sup norm).
    pub fn sampled_sup(&self, epsilon: f64, samples: usize) -> f64 {
        (0..=samples)
            .map(|i| self.eval(1.0 - epsilon + epsilon * i as f64 / samples as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// Residual forcing `f(r)` of the model problem.
#[derive(Clone)]
pub enum Forcing {
    Zero,
    /// `sum_k c_k r^k`
    Polynomial(Vec<f64>),
    Trig(TrigPolynomial),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Forcing::Zero => write!(f, "Zero"),
            Forcing::Polynomial(c) => write!(f, "Polynomial({c:?})"),
            Forcing::Trig(t) => write!(f, "Trig({t:?})"),
            Forcing::Function(_) => write!(f, "Function(..)"),
        }
    }
}

const QUAD_TARGET: f64 = 1e-14;
const QUAD_ACCEPT: f64 = 1e-12;

/// Double-exponential quadrature on equal panels, doubling the panel count
/// until two passes agree. A single pass can stop early on oscillatory
/// integrands with a tiny error estimate and a wrong value.
fn integrate(g: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let pass = |pieces: usize| -> Result<f64> {
        let w = (b - a) / pieces as f64;
        let mut total = 0.0;
        for k in 0..pieces {
            let lo = a + k as f64 * w;
            let hi = if k + 1 == pieces { b } else { lo + w };
            let out = quadrature::integrate(&g, lo, hi, QUAD_TARGET);
            if !(out.error_estimate <= QUAD_ACCEPT) || !out.integral.is_finite() {
                return Err(Error::Accuracy(format!(
                    "integral over [{lo}, {hi}] has error estimate {:e}",
                    out.error_estimate
                )));
            }
            total += out.integral;
        }
        Ok(total)
    };
    let mut pieces = 2;
    let mut prev = pass(pieces)?;
    while pieces < 512 {
        pieces *= 2;
        let cur = pass(pieces)?;
        if (cur - prev).abs() <= QUAD_ACCEPT {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Accuracy(format!("integral over [{a}, {b}] does not settle under panel refinement")))
}

impl Forcing {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Polynomial(c) => c.iter().rev().fold(0.0, |acc, ck| acc * r + ck),
            Forcing::Trig(t) => t.eval(r),
            Forcing::Function(g) => g(r),
        }
    }

    /// `int_a^b s^p f(s) ds`
    fn moment(&self, p: i32, a: f64, b: f64) -> Result<f64> {
        match self {
            Forcing::Zero => Ok(0.0),
            Forcing::Polynomial(c) => Ok(c
                .iter()
                .enumerate()
                .map(|(k, ck)| {
                    let m = k as i32 + p + 1;
                    ck * (b.powi(m) - a.powi(m)) / f64::from(m)
                })
                .sum()),
            _ => integrate(|s| s.powi(p) * self.eval(s), a, b),
        }
    }

    /// `int_r^1 log(s/r) s f(s) ds`
    fn log_moment(&self, r: f64) -> Result<f64> {
        match self {
            Forcing::Zero => Ok(0.0),
            Forcing::Polynomial(c) => Ok(c
                .iter()
                .enumerate()
                .map(|(k, ck)| {
                    let m = (k + 2) as f64;
                    ck * (-r.ln() / m - 1.0 / (m * m) + r.powf(m) / (m * m))
                })
                .sum()),
            _ => integrate(|s| (s / r).ln() * s * self.eval(s), r, 1.0),
        }
    }
}

/// `(K[f](r), K[f]'(r))` for the annulus `[1 - eps, 1]`.
pub fn kernel_k(n: u32, f: &Forcing, r: f64, epsilon: f64) -> Result<(f64, f64)> {
    check_mode(n)?;
    let r0 = 1.0 - epsilon;
    if r < r0 - 1e-15 || r > 1.0 + 1e-15 {
        return Err(Error::Domain(format!("r = {r} outside [{r0}, 1]")));
    }
    if n == 1 {
        let outer = f.moment(0, r, 1.0)?;
        let inner = f.moment(2, r0, r)?;
        Ok((0.5 * r * outer + 0.5 * inner / r, 0.5 * outer - 0.5 * inner / (r * r)))
    } else {
        Ok((-f.log_moment(r)?, f.moment(1, r, 1.0)? / r))
    }
}

/// Inner boundary condition of a [`ModelProblem`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerCondition {
    /// `-psi'(1-eps) + beta psi(1-eps) = g`
    Robin { beta: f64, g: f64 },
    /// `psi(1-eps) = (1 - n^2) / (1-eps)^2`
    Dirichlet,
}

#[derive(Debug, Clone)]
pub struct ModelProblem {
    pub n: u32,
    pub eta: f64,
    pub forcing: Forcing,
    pub epsilon: f64,
    pub inner: InnerCondition,
}

impl ModelProblem {
    fn r0(&self) -> f64 {
        1.0 - self.epsilon
    }

    pub fn dirichlet_value(&self) -> f64 {
        let r0 = self.r0();
        (1.0 - f64::from(self.n * self.n)) / (r0 * r0)
    }

    pub fn inner_condition(&self) -> BoundaryCondition {
        match self.inner {
            InnerCondition::Robin { beta, g } => BoundaryCondition::robin_inner(beta, g),
            InnerCondition::Dirichlet => BoundaryCondition::dirichlet(Side::Inner, self.dirichlet_value()),
        }
    }
}

/// Coefficient of the homogeneous part of `psi`.
pub fn coefficient_a(problem: &ModelProblem) -> Result<f64> {
    check_mode(problem.n)?;
    let n = problem.n;
    let r0 = problem.r0();
    let [p1, dp1, ..] = psi1_derivatives(n, problem.eta, r0)?;
    let (k0, dk0) = kernel_k(n, &problem.forcing, r0, problem.epsilon)?;
    let dk1 = if n == 1 { kernel_k(1, &problem.forcing, 1.0, problem.epsilon)?.1 } else { 0.0 };
    match (problem.inner, n) {
        (InnerCondition::Robin { beta, g }, 1) => Ok((g + dp1 - beta * p1 - beta * k0 + dk0
            - dk1 / (r0 * r0)
            - beta * dk1 / r0)
            / (-1.0 + 1.0 / (r0 * r0) + beta * r0 + beta / r0)),
        (InnerCondition::Robin { beta, g }, _) => {
            if beta == 0.0 {
                return Err(Error::Domain("Robin coefficient beta = 0 for n = 0".into()));
            }
            Ok((g + dp1 - beta * p1 - beta * k0 + dk0) / beta)
        }
        (InnerCondition::Dirichlet, 1) => Ok((-p1 - k0 - dk1 / r0) / (r0 + 1.0 / r0)),
        // psi(r0) = psi1 + A + K must equal 1/r0^2 for n = 0
        (InnerCondition::Dirichlet, _) => Ok(problem.dirichlet_value() - p1 - k0),
    }
}

/// Closed-form `psi` with its derivative.
#[derive(Debug, Clone)]
pub struct PsiSolution {
    pub problem: ModelProblem,
    pub a: f64,
    dk1: f64,
}

impl PsiSolution {
    pub fn new(problem: ModelProblem) -> Result<Self> {
        let a = coefficient_a(&problem)?;
        let dk1 = if problem.n == 1 { kernel_k(1, &problem.forcing, 1.0, problem.epsilon)?.1 } else { 0.0 };
        Ok(PsiSolution { problem, a, dk1 })
    }

    /// `(psi(r), psi'(r))`
    pub fn eval(&self, r: f64) -> Result<(f64, f64)> {
        let pr = &self.problem;
        let [p1, dp1, ..] = psi1_derivatives(pr.n, pr.eta, r)?;
        let (k, dk) = kernel_k(pr.n, &pr.forcing, r, pr.epsilon)?;
        Ok(if pr.n == 1 {
            let c = self.a + self.dk1;
            (p1 + self.a * r + c / r + k, dp1 + self.a - c / (r * r) + dk)
        } else {
            (p1 + self.a + k, dp1 + dk)
        })
    }
}

pub fn assemble_psi(problem: &ModelProblem, grid: &Grid) -> Result<RadialField> {
    if (grid.epsilon() - problem.epsilon).abs() > 1e-15 {
        return Err(Error::Usage("grid and model problem have different epsilon".into()));
    }
    let sol = PsiSolution::new(problem.clone())?;
    let values = (0..grid.len())
        .map(|i| sol.eval(grid.node(i)).map(|v| v.0))
        .collect::<Result<Vec<_>>>()?;
    RadialField::new(*grid, values, "psi")
}

/// Finite-difference solution of the same model problem.
pub fn solve_with_bvp(problem: &ModelProblem, grid: &Grid) -> Result<RadialField> {
    let op = assemble_ln(grid, problem.n)?;
    let rhs = RadialField::from_fn(*grid, "rhs", |r| problem.eta + problem.forcing.eval(r));
    let bc = problem.inner_condition();
    let solve = |shift: f64| -> Result<RadialField> {
        let inner = BoundaryCondition { g: bc.g - bc.a * shift, ..bc };
        let mut psi = solve_linear_system(&op, &rhs, [inner, BoundaryCondition::neumann(Side::Outer, 0.0)])?;
        psi.values.iter_mut().for_each(|v| *v += shift);
        Ok(psi)
    };
    if problem.n != 0 || bc.a == 0.0 {
        return solve(0.0);
    }
    // Constants solve the n = 0 operator exactly, so psi - c can be solved
    // for any c. Taking c from a first pass leaves only the variation of psi
    // across the annulus, and roundoff scales with that instead of with the
    // constant level, which grows like 1 / beta for Robin data.
    let first = solve(bc.g / bc.a)?;
    solve(first.values[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrosscheckReport {
    pub nodes: usize,
    pub max_discrepancy: f64,
    pub inner_derivative_discrepancy: f64,
}

pub fn crosscheck_with_bvp(problem: &ModelProblem, grid: &Grid) -> Result<CrosscheckReport> {
    let closed = assemble_psi(problem, grid)?;
    let numeric = solve_with_bvp(problem, grid)?;
    let max_discrepancy = closed
        .values
        .iter()
        .zip(&numeric.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let exact_flux = PsiSolution::new(problem.clone())?.eval(grid.inner())?.1;
    Ok(CrosscheckReport {
        nodes: grid.len(),
        max_discrepancy,
        inner_derivative_discrepancy: (numeric.derivative(0) - exact_flux).abs(),
    })
}

/// Two-term expansion of `psi` for the Robin problem with `f = O(eps)`.
pub fn robin_expansion(n: u32, eta: f64, beta: f64, g: f64, epsilon: f64) -> Result<f64> {
    check_mode(n)?;
    Ok(if n == 1 {
        g / beta + epsilon * (eta / beta - g / (beta * beta))
    } else {
        g / beta + epsilon * eta / beta
    })
}

/// `psi'(1 - eps) ~ eps eta + eps^2 eta / 2` for the Dirichlet problem with
/// `f = O(eps^2)`; the same expansion holds for `psi1'(1 - eps)`.
pub fn inner_flux_expansion(eta: f64, epsilon: f64) -> f64 {
    epsilon * eta + 0.5 * epsilon * epsilon * eta
}

/// `psi1(1 - eps) ~ -eta eps^2 / 2`
pub fn inner_value_expansion(eta: f64, epsilon: f64) -> f64 {
    -0.5 * eta * epsilon * epsilon
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn psi1_values() {
        assert!(eval_psi1(1, 1.0, 1.0).unwrap().abs() < 1e-16);
        assert!(eval_psi1_derivative(1, 1.0, 1.0).unwrap().abs() < 1e-16);
        assert_eq!(eval_psi1(0, 3.0, 1.0).unwrap(), 0.0);
        // -1/(6*0.99) + 0.495 - 0.99^2/3
        let v = eval_psi1(1, 1.0, 0.99).unwrap();
        let expected = -1.0 / 5.94 + 0.495 - 0.9801 / 3.0;
        assert!((v - expected).abs() < 1e-16);
        assert!((v + 5.017e-5).abs() < 1e-8, "{v}");
        assert!((v - inner_value_expansion(1.0, 0.01)).abs() < 1e-6);
        assert!(matches!(eval_psi1(2, 1.0, 0.9), Err(Error::UnsupportedMode(2))));
    }

    #[test]
    fn psi1_solves_its_equation() {
        for n in [0u32, 1] {
            for i in 0..100 {
                let r = 0.75 + 0.25 * f64::from(i) / 99.0;
                let [u, du, d2u, _] = psi1_derivatives(n, 1.7, r).unwrap();
                let lhs = -d2u - du / r + f64::from(n * n) * u / (r * r);
                assert!((lhs - 1.7).abs() <= 1e-10);
            }
            let [u, du, d2u, d3u] = psi1_derivatives(n, 2.5, 1.0).unwrap();
            assert!(u.abs() < 1e-13 && du.abs() < 1e-13);
            assert!((d2u + 2.5).abs() < 1e-10 && (d3u - 2.5).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_special_cases() {
        for n in [0u32, 1] {
            for r in [0.9, 0.95, 1.0] {
                assert_eq!(kernel_k(n, &Forcing::Zero, r, 0.1).unwrap(), (0.0, 0.0));
            }
        }
        let f = Forcing::Function(Arc::new(|s: f64| (3.0 * s).sin()));
        let (k, _) = kernel_k(0, &f, 1.0, 0.1).unwrap();
        assert_eq!(k, 0.0);
        let (k, _) = kernel_k(1, &Forcing::Polynomial(vec![1.0]), 0.9, 0.1).unwrap();
        assert!((k - 0.045).abs() < 1e-15);
    }

    #[test]
    fn polynomial_fast_path_matches_quadrature() {
        let coeffs = vec![0.3, -1.2, 0.7, 2.0];
        let poly = Forcing::Polynomial(coeffs.clone());
        let func = Forcing::Function(Arc::new(move |s: f64| coeffs.iter().rev().fold(0.0, |a, c| a * s + c)));
        for n in [0u32, 1] {
            for r in [0.8, 0.85, 0.93, 1.0] {
                let a = kernel_k(n, &poly, r, 0.2).unwrap();
                let b = kernel_k(n, &func, r, 0.2).unwrap();
                assert!((a.0 - b.0).abs() < 1e-13 && (a.1 - b.1).abs() < 1e-13, "n={n} r={r}");
            }
        }
    }

    #[test]
    fn kernel_solves_forced_equation() {
        // finite-difference check of -K'' - K'/r + n^2 K/r^2 = f
        let f = Forcing::Polynomial(vec![1.0, -2.0, 0.5]);
        let eps = 0.1;
        for n in [0u32, 1] {
            for r in [0.92, 0.95, 0.98] {
                let h = 1e-4;
                let (k, dk) = kernel_k(n, &f, r, eps).unwrap();
                let (_, dkp) = kernel_k(n, &f, r + h, eps).unwrap();
                let (_, dkm) = kernel_k(n, &f, r - h, eps).unwrap();
                let d2k = (dkp - dkm) / (2.0 * h);
                let lhs = -d2k - dk / r + f64::from(n * n) * k / (r * r);
                assert!((lhs - f.eval(r)).abs() < 1e-7, "n={n} r={r}: {lhs}");
            }
        }
    }

    #[test]
    fn coefficient_a_cases() {
        for n in [0u32, 1] {
            for inner in [InnerCondition::Robin { beta: 1.5, g: 0.0 }, InnerCondition::Dirichlet] {
                let pr = ModelProblem { n, eta: 0.0, forcing: Forcing::Zero, epsilon: 0.1, inner };
                let a = coefficient_a(&pr).unwrap();
                if n == 1 || inner != InnerCondition::Dirichlet {
                    assert_eq!(a, 0.0, "n={n} {inner:?}");
                }
            }
        }
        let pr = ModelProblem {
            n: 0,
            eta: 1.0,
            forcing: Forcing::Zero,
            epsilon: 0.1,
            inner: InnerCondition::Robin { beta: 1.0, g: 0.0 },
        };
        // psi1'(0.9) - psi1(0.9)
        let expected = (-0.45 + 0.5 / 0.9) - (0.19 / 4.0 + 0.5 * 0.9f64.ln());
        let a = coefficient_a(&pr).unwrap();
        assert!((a - expected).abs() < 1e-15);
        assert!((a - 0.110_735_9).abs() < 1e-7);

        let beta0 = ModelProblem { inner: InnerCondition::Robin { beta: 0.0, g: 1.0 }, ..pr };
        assert!(matches!(coefficient_a(&beta0), Err(Error::Domain(_))));
    }

    #[test]
    fn coefficient_a_limit_for_n1() {
        let a = |eps: f64| {
            coefficient_a(&ModelProblem {
                n: 1,
                eta: 0.0,
                forcing: Forcing::Zero,
                epsilon: eps,
                inner: InnerCondition::Robin { beta: 2.0, g: 1.0 },
            })
            .unwrap()
        };
        let d1 = (a(0.02) - 0.25).abs();
        let d2 = (a(0.01) - 0.25).abs();
        assert!(d2 < 0.6 * d1 && d2 < 0.01);
    }

    #[test]
    fn zero_problem_gives_zero_psi() {
        let g = Grid::new(0.05, 41).unwrap();
        let pr = ModelProblem {
            n: 1,
            eta: 0.0,
            forcing: Forcing::Zero,
            epsilon: 0.05,
            inner: InnerCondition::Robin { beta: 1.0, g: 0.0 },
        };
        assert!(assemble_psi(&pr, &g).unwrap().values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn closed_form_satisfies_boundary_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let eps = 0.05;
        let f = Forcing::Trig(TrigPolynomial::random(&mut rng, 4, eps, 1.0));
        for n in [0u32, 1] {
            for inner in [InnerCondition::Robin { beta: 1.3, g: 0.4 }, InnerCondition::Dirichlet] {
                let pr = ModelProblem { n, eta: 0.8, forcing: f.clone(), epsilon: eps, inner };
                let sol = PsiSolution::new(pr.clone()).unwrap();
                let (_, d_outer) = sol.eval(1.0).unwrap();
                assert!(d_outer.abs() < 1e-12);
                let (v, dv) = sol.eval(1.0 - eps).unwrap();
                let bc = pr.inner_condition();
                assert!((bc.a * v + bc.b * dv - bc.g).abs() < 1e-12, "n={n} {inner:?}");
            }
        }
    }

    #[test]
    fn crosscheck_small_problem() {
        let pr = ModelProblem {
            n: 1,
            eta: 1.0,
            forcing: Forcing::Zero,
            epsilon: 0.05,
            inner: InnerCondition::Robin { beta: 1.0, g: 0.0 },
        };
        let rep = crosscheck_with_bvp(&pr, &Grid::new(0.05, 401).unwrap()).unwrap();
        assert!(rep.max_discrepancy <= 1e-8, "{rep:?}");
        let pr = ModelProblem { n: 0, inner: InnerCondition::Dirichlet, ..pr };
        let rep = crosscheck_with_bvp(&pr, &Grid::new(0.05, 401).unwrap()).unwrap();
        assert!(rep.max_discrepancy <= 1e-8, "{rep:?}");
    }

    fn oscillatory_forcing() -> Forcing {
        Forcing::Trig(TrigPolynomial {
            origin: 0.98,
            frequency: 2.0 * PI / 0.02,
            constant: -0.0402384320028061,
            cos: vec![-0.02519903793008006, -0.03869466904471985, -0.01352468574098097],
            sin: vec![0.00897564590214576, -0.004859673874391861, 0.011984923175289952],
        })
    }

    #[test]
    fn log_moment_survives_early_quadrature_stop() {
        // a single double-exponential pass returns -8.6005e-6 here
        let f = oscillatory_forcing();
        let r = 0.980175;
        let g = |s: f64| (s / r).ln() * s * f.eval(s);
        let m = 20000;
        let h = (1.0 - r) / m as f64;
        let simpson = (g(r) + g(1.0) + (1..m).map(|i| g(r + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum::<f64>())
            * h
            / 3.0;
        let k = kernel_k(0, &f, r, 0.02).unwrap().0;
        assert!((k + simpson).abs() < 1e-13, "{k} vs {}", -simpson);
    }

    #[test]
    fn bvp_roundoff_does_not_grow_with_the_constant_level() {
        // small beta puts psi near g / beta; the error must keep shrinking
        let problem = ModelProblem {
            n: 0,
            eta: -1.3,
            forcing: Forcing::Zero,
            epsilon: 0.02,
            inner: InnerCondition::Robin { beta: 0.01, g: 5.0 },
        };
        let errs: Vec<f64> = [401, 801, 1601]
            .iter()
            .map(|&n| crosscheck_with_bvp(&problem, &Grid::new(0.02, n).unwrap()).unwrap().max_discrepancy)
            .collect();
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
    }
}
