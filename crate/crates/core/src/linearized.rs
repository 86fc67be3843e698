//! Mode-`n` linearization of the radial system around a steady state.
//!
//! With `L = L* + tau L1^n(r) cos(n theta) + ...` (and likewise for `H`, `F`,
//! `p`) the perturbation profiles solve four coupled equations
//! `L_n u = (reaction Jacobian) u` with inner Robin data taken from the steady
//! second derivatives, `p1^n(1-eps) = (1-n^2)/(1-eps)^2`, and Neumann rows at
//! `r = 1`.

use crate::error::{Error, Result};
use crate::grid_bvp::{ln_stencil, BandedMatrix, RadialField};
use crate::params::{leading_order_coeffs, Parameters};
use crate::steady_state::{reaction_partials, slot, solve_fixed_rho4, NodeState, SteadyState, FIELDS};

/// Per-node partials of the four right-hand sides with respect to
/// `(L, H, F)`. Rows 0..3 are `f5`, `f6`, `f7` (convection excluded), row 3
/// of `blocks` coincides with `f8`.
#[derive(Debug, Clone)]
pub struct ReactionJacobian {
    pub blocks: Vec<[[f64; 3]; 4]>,
    pub f8: Vec<[f64; 3]>,
}

/// Coefficients of `f8` in `(L1, H1, F1)`, written term by term.
pub fn f8_coefficients(s: &NodeState, rho4: f64, p: &Parameters) -> [f64; 3] {
    let gh = p.gamma + s.h;
    let m = p.m0 - s.f;
    [
        p.lambda * m / gh / p.m0,
        -p.lambda * m * s.l / (gh * gh) / p.m0,
        (-p.lambda * s.l / gh + (p.rho3 - rho4)) / p.m0,
    ]
}

pub fn f8(coeffs: &[f64; 3], l1: f64, h1: f64, f1: f64) -> f64 {
    coeffs[0] * l1 + coeffs[1] * h1 + coeffs[2] * f1
}

pub fn reaction_jacobian(state: &SteadyState) -> Result<ReactionJacobian> {
    let len = state.grid.len();
    let mut blocks = Vec::with_capacity(len);
    let mut rows = Vec::with_capacity(len);
    for i in 0..len {
        let s = state.node_state(i);
        blocks.push(reaction_partials(&s, state.rho4, &state.params)?);
        rows.push(f8_coefficients(&s, state.rho4, &state.params));
    }
    Ok(ReactionJacobian { blocks, f8: rows })
}

#[derive(Debug, Clone)]
pub struct ModeSolution {
    pub n: u32,
    pub epsilon: f64,
    pub mu: f64,
    pub l1: RadialField,
    pub h1: RadialField,
    pub f1: RadialField,
    pub p1: RadialField,
    /// `dp1^n/dr(1-eps)` from the one-sided stencil.
    pub dp1n_inner: f64,
    /// The same derivative from the flux identity
    /// `r0 p1'(r0) = int (r f8 - n^2 p1 / r) dr`.
    pub dp1n_identity: f64,
    /// `f8` at the inner node.
    pub eta_n: f64,
    /// `max_r |f8(r) - eta_n|`.
    pub eta_spread: f64,
    /// `(field(1-eps) - leading value) / eps` for `L1`, `H1`, `F1`.
    pub l11: f64,
    pub h11: f64,
    pub f11: f64,
    /// Largest unscaled boundary-row residual.
    pub boundary_residual: f64,
    /// Largest `h^2`-scaled interior residual.
    pub interior_residual: f64,
}

impl ModeSolution {
    /// `(r, L1, H1, F1, p1)` rows.
    pub fn profile_rows(&self) -> Vec<[f64; 5]> {
        let g = self.l1.grid;
        (0..g.len())
            .map(|i| [g.node(i), self.l1.values[i], self.h1.values[i], self.f1.values[i], self.p1.values[i]])
            .collect()
    }

    pub fn fields(&self) -> [&RadialField; 4] {
        [&self.l1, &self.h1, &self.f1, &self.p1]
    }
}

/// O(1) values of `(L1^n, H1^n, F1^n)`: `(mu/lambda - L*1, -H*1, -F*1)`.
pub fn leading_mode_values(p: &Parameters) -> Result<[f64; 3]> {
    let d = leading_order_coeffs(p)?;
    Ok([p.mu / p.lambda - d.lstar1, -d.hstar1, -d.fstar1])
}

/// `p1^n(1-eps) = (1 - n^2) / (1-eps)^2`
pub fn pressure_value(n: u32, r0: f64) -> f64 {
    (1.0 - f64::from(n * n)) / (r0 * r0)
}

/// The pressure unknown is `q1 = p1 - p1(1-eps)` so that its flux is not
/// computed from O(1) values.
struct ModeSystem {
    matrix: BandedMatrix,
    rhs: Vec<f64>,
}

fn assemble(n: u32, state: &SteadyState, jac: &ReactionJacobian) -> ModeSystem {
    let p = &state.params;
    let grid = state.grid;
    let len = grid.len();
    let h = grid.spacing();
    let h2 = h * h;
    let mut m = BandedMatrix::zeros(FIELDS * len, 8, 8);
    let mut rhs = vec![0.0; FIELDS * len];
    let diffusion = [1.0, 1.0, p.diffusivity, 1.0];
    let c = 1.0 / (2.0 * h);
    let dirichlet = pressure_value(n, grid.inner());

    for i in 1..len - 1 {
        let stencil = ln_stencil(grid.node(i), h, n);
        let block = &jac.blocks[i];
        for k in 0..FIELDS {
            let row = slot(i, k);
            for (off, w) in stencil.iter().enumerate() {
                m.add(row, slot(i + off - 1, k), h2 * diffusion[k] * w);
            }
            if k == 3 {
                // constant part of p1 moved to the right-hand side
                rhs[row] = -h2 * dirichlet * stencil.iter().sum::<f64>();
            }
            let coeffs: &[f64; 3] = if k == 3 { &jac.f8[i] } else { &block[k] };
            for (j, d) in coeffs.iter().enumerate() {
                m.add(row, slot(i, j), -h2 * d);
            }
        }
        // F*' p1' + F1' p*'
        let row = slot(i, 2);
        let df = state.f.derivative(i);
        let dp = state.p.derivative(i);
        m.add(row, slot(i + 1, 3), -h2 * df * c);
        m.add(row, slot(i - 1, 3), h2 * df * c);
        m.add(row, slot(i + 1, 2), -h2 * dp * c);
        m.add(row, slot(i - 1, 2), h2 * dp * c);
    }

    let w_in = [-1.5, 2.0, -0.5];
    let b = &state.boundary;
    let robin = [
        (p.beta1, b.d2l - p.beta1 * b.dl),
        (p.beta1, b.d2h - p.beta1 * b.dh),
        (p.beta2, b.d2f - p.beta2 * b.df),
    ];
    for (k, (beta, g)) in robin.iter().enumerate() {
        for (mm, w) in w_in.iter().enumerate() {
            m.add(slot(0, k), slot(mm, k), -w);
        }
        m.add(slot(0, k), slot(0, k), h * beta);
        rhs[slot(0, k)] = h * g;
    }
    m.add(slot(0, 3), slot(0, 3), 1.0);
    let last = len - 1;
    let w_out = [1.5, -2.0, 0.5];
    for k in 0..FIELDS {
        for (mm, w) in w_out.iter().enumerate() {
            m.add(slot(last, k), slot(last - mm, k), *w);
        }
    }
    ModeSystem { matrix: m, rhs }
}

/// Solves the mode-`n` system around `state` on the state's grid.
pub fn solve_mode(n: u32, state: &SteadyState) -> Result<ModeSolution> {
    let jac = reaction_jacobian(state)?;
    let sys = assemble(n, state, &jac);
    let lu = sys
        .matrix
        .lu()
        .map_err(|e| e.at(n, state.mu, state.epsilon()))?;
    let mut x = lu.solve(&sys.rhs);
    let r: Vec<f64> = sys.matrix.mul_vec(&x).iter().zip(&sys.rhs).map(|(a, b)| b - a).collect();
    for (xi, d) in x.iter_mut().zip(lu.solve(&r)) {
        *xi += d;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solvability("mode solution is not finite".into()).at(n, state.mu, state.epsilon()));
    }
    let residual: Vec<f64> = sys.matrix.mul_vec(&x).iter().zip(&sys.rhs).map(|(a, b)| a - b).collect();

    let grid = state.grid;
    let len = grid.len();
    let h = grid.spacing();
    let field = |k: usize, name| RadialField::new(grid, (0..len).map(|i| x[slot(i, k)]).collect(), name);
    let (l1, h1, f1, q1) = (field(0, "L1")?, field(1, "H1")?, field(2, "F1")?, field(3, "q1")?);
    let offset = pressure_value(n, grid.inner());
    let p1 = RadialField::new(grid, q1.values.iter().map(|v| v + offset).collect(), "p1")?;

    let interior_residual = (1..len - 1)
        .flat_map(|i| (0..FIELDS).map(move |k| slot(i, k)))
        .fold(0.0f64, |m, j| m.max(residual[j].abs()));
    let boundary_residual = (0..3)
        .map(|k| residual[slot(0, k)] / h)
        .chain(std::iter::once(residual[slot(0, 3)]))
        .chain((0..FIELDS).map(|k| residual[slot(len - 1, k)] / h))
        .fold(0.0f64, |m, v| m.max(v.abs()));

    let f8_vals: Vec<f64> = (0..len)
        .map(|i| f8(&jac.f8[i], l1.values[i], h1.values[i], f1.values[i]))
        .collect();
    let eta_n = f8_vals[0];
    let eta_spread = f8_vals.iter().fold(0.0f64, |m, v| m.max((v - eta_n).abs()));
    let n2 = f64::from(n * n);
    let flux: Vec<f64> = (0..len)
        .map(|i| {
            let r = grid.node(i);
            r * f8_vals[i] - n2 * p1.values[i] / r
        })
        .collect();
    let r0 = grid.inner();
    let dp1n_identity = grid.simpson(&flux) / r0;

    let lead = leading_mode_values(&state.params)?;
    let eps = state.epsilon();
    Ok(ModeSolution {
        n,
        epsilon: eps,
        mu: state.mu,
        dp1n_inner: q1.derivative(0),
        dp1n_identity,
        eta_n,
        eta_spread,
        l11: (l1.values[0] - lead[0]) / eps,
        h11: (h1.values[0] - lead[1]) / eps,
        f11: (f1.values[0] - lead[2]) / eps,
        l1,
        h1,
        f1,
        p1,
        boundary_residual,
        interior_residual,
    })
}

/// Inner-node differences between the `n = 1` and `n = 0` modes, divided by
/// `eps`, against `((L*1 - mu/lambda)/beta1, H*1/beta1, F*1/beta2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeDifferenceReport {
    pub epsilon: f64,
    pub observed: [f64; 3],
    pub predicted: [f64; 3],
    pub deviation: [f64; 3],
}

pub fn mode_difference_predictions(p: &Parameters) -> Result<[f64; 3]> {
    let d = leading_order_coeffs(p)?;
    Ok([
        (d.lstar1 - p.mu / p.lambda) / p.beta1,
        d.hstar1 / p.beta1,
        d.fstar1 / p.beta2,
    ])
}

pub fn mode_difference_diagnostics(
    m1: &ModeSolution,
    m0: &ModeSolution,
    state: &SteadyState,
) -> Result<ModeDifferenceReport> {
    if m1.n != 1 || m0.n != 0 {
        return Err(Error::Usage(format!("expected modes (1, 0), got ({}, {})", m1.n, m0.n)));
    }
    if m1.l1.grid != state.grid || m0.l1.grid != state.grid || m1.mu != m0.mu {
        return Err(Error::Usage("mode solutions come from different steady states".into()));
    }
    let eps = state.epsilon();
    let observed = [
        (m1.l1.values[0] - m0.l1.values[0]) / eps,
        (m1.h1.values[0] - m0.h1.values[0]) / eps,
        (m1.f1.values[0] - m0.f1.values[0]) / eps,
    ];
    let predicted = mode_difference_predictions(&state.params)?;
    let deviation = [0, 1, 2].map(|k| (observed[k] - predicted[k]).abs());
    Ok(ModeDifferenceReport { epsilon: eps, observed, predicted, deviation })
}

/// `f8` constant of a solved mode.
pub fn eta_n(mode: &ModeSolution) -> f64 {
    mode.eta_n
}

/// Comparison of a radially shifted nonlinear solve with the `n = 0` mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FrechetReport {
    pub taus: Vec<f64>,
    /// `|L_tau(r0 + tau) - L*(r0) - tau (L*'(r0) + L1^0(r0))|`
    pub l_errors: Vec<f64>,
    /// `|p_tau'(r0 + tau) - tau g_0|`
    pub flux_errors: Vec<f64>,
}

impl FrechetReport {
    pub fn l_orders(&self) -> Vec<f64> {
        orders(&self.taus, &self.l_errors)
    }

    pub fn flux_orders(&self) -> Vec<f64> {
        orders(&self.taus, &self.flux_errors)
    }
}

pub(crate) fn orders(x: &[f64], e: &[f64]) -> Vec<f64> {
    x.windows(2)
        .zip(e.windows(2))
        .map(|(xs, es)| (es[0] / es[1]).ln() / (xs[0] / xs[1]).ln())
        .collect()
}

/// Moves the free boundary to `1 - eps + tau` and re-solves the nonlinear
/// system with `rho4` and `L0` frozen.
pub fn frechet_consistency(state: &SteadyState, mode0: &ModeSolution, taus: &[f64]) -> Result<FrechetReport> {
    if mode0.n != 0 {
        return Err(Error::Usage("Frechet check uses the radial mode n = 0".into()));
    }
    let [d2p, dl] = [state.boundary.d2p, state.boundary.dl];
    let g0 = d2p + mode0.dp1n_inner;
    let lin = dl + mode0.l1.values[0];
    let mut l_errors = Vec::with_capacity(taus.len());
    let mut flux_errors = Vec::with_capacity(taus.len());
    for &tau in taus {
        let grid = state.grid.shifted_inner(tau)?;
        let moved = solve_fixed_rho4(&state.params, &grid, state.rho4)?;
        l_errors.push((moved.l.values[0] - state.l.values[0] - tau * lin).abs());
        flux_errors.push((moved.p.derivative(0) - tau * g0).abs());
    }
    Ok(FrechetReport { taus: taus.to_vec(), l_errors, flux_errors })
}
