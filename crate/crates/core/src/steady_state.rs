//! Radially symmetric stationary solution `(L*, H*, F*, p*)` together with
//! the foam-cell clearance rate `rho4` that makes the pressure satisfy both
//! `p* = -1/(1-eps)` and `dp*/dr = 0` on the free boundary.

use crate::error::{Error, Result};
use crate::grid_bvp::{
    ln_stencil, newton_solve, BandedMatrix, BorderedSystem, Grid, NewtonOptions, NewtonReport,
    NonlinearSystem, RadialField,
};
use crate::params::{leading_order_coeffs, DerivedConstants, Parameters};

/// Pointwise state needed by the reaction terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeState {
    pub l: f64,
    pub h: f64,
    pub f: f64,
    /// dF/dr, only used by the convection term
    pub df: f64,
    /// dp/dr
    pub dp: f64,
}

/// Right-hand sides of the four stationary equations written as
/// `-Lap L = [0]`, `-Lap H = [1]`, `-D Lap F = [2]`, `-Lap p = [3]`, with
/// `M = M0 - F` eliminated and the convection term `F' p'` folded into `[2]`.
pub fn reaction_rhs(s: &NodeState, rho4: f64, p: &Parameters) -> Result<[f64; 4]> {
    check_denominators(s, p)?;
    let m = p.m0 - s.f;
    let uptake = p.k1 * m * s.l / (p.big_k1 + s.l);
    let efflux = p.k2 * s.h * s.f / (p.big_k2 + s.f);
    let production = p.lambda * m * s.l / (p.gamma + s.h);
    Ok([
        -uptake - p.rho1 * s.l,
        -efflux - p.rho2 * s.h,
        uptake - efflux - s.f * production / p.m0 + (p.rho3 - rho4) * m * s.f / p.m0 + s.df * s.dp,
        (production - p.rho3 * m - rho4 * s.f) / p.m0,
    ])
}

fn check_denominators(s: &NodeState, p: &Parameters) -> Result<()> {
    if !(p.big_k1 + s.l > 0.0) || !(p.big_k2 + s.f > 0.0) || !(p.gamma + s.h > 0.0) {
        return Err(Error::Domain(format!(
            "nonpositive denominator at L = {}, H = {}, F = {}",
            s.l, s.h, s.f
        )));
    }
    Ok(())
}

/// Partial derivatives of [`reaction_rhs`] (excluding convection) with
/// respect to `(L, H, F)`; row `k` is equation `k`.
pub fn reaction_partials(s: &NodeState, rho4: f64, p: &Parameters) -> Result<[[f64; 3]; 4]> {
    check_denominators(s, p)?;
    let m = p.m0 - s.f;
    let kl = p.big_k1 + s.l;
    let kf = p.big_k2 + s.f;
    let gh = p.gamma + s.h;

    // uptake = k1 m L / (K1 + L)
    let up_l = p.k1 * m * p.big_k1 / (kl * kl);
    let up_f = -p.k1 * s.l / kl;
    // efflux = k2 H F / (K2 + F)
    let ef_h = p.k2 * s.f / kf;
    let ef_f = p.k2 * s.h * p.big_k2 / (kf * kf);
    // production = lambda m L / (gamma + H)
    let pr = p.lambda * m * s.l / gh;
    let pr_l = p.lambda * m / gh;
    let pr_h = -pr / gh;
    let pr_f = -p.lambda * s.l / gh;

    Ok([
        [-up_l - p.rho1, 0.0, -up_f],
        [0.0, -ef_h - p.rho2, -ef_f],
        [
            up_l - s.f * pr_l / p.m0,
            -ef_h - s.f * pr_h / p.m0,
            up_f - ef_f - (pr + s.f * pr_f) / p.m0 + (p.rho3 - rho4) * (m - s.f) / p.m0,
        ],
        [pr_l / p.m0, pr_h / p.m0, (pr_f + p.rho3 - rho4) / p.m0],
    ])
}

/// d/d rho4 of the `F` and `p` right-hand sides.
fn rho4_partials(s: &NodeState, p: &Parameters) -> (f64, f64) {
    (-(p.m0 - s.f) * s.f / p.m0, -s.f / p.m0)
}

pub const FIELDS: usize = 4;

/// Index of field `k` at node `i` in the interleaved unknown vector.
#[inline]
pub(crate) fn slot(i: usize, k: usize) -> usize {
    FIELDS * i + k
}

/// How `rho4` enters the radial system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rho4 {
    /// Unknown, closed by `dp/dr = 0` on the inner boundary.
    Free,
    Fixed(f64),
}

/// The discrete radial boundary-value problem on `grid`.
///
/// Unknowns are offsets from constants: `L - L0`, `H - H0`, `F` and
/// `q = p + 1/r0`. Storing `p ~ -1` directly would put the closure
/// `dp/dr = 0` at rounding level, and a large `L0` would put rounding noise of
/// size `N^2 |L0| eps_mach` into the second differences; both leave `rho4`
/// determined to only a few digits.
///
/// The inner boundary sits at `grid.inner()`, which need not equal
/// `1 - params.epsilon` (perturbed-domain solves shift it), while the far-field
/// level `l0` always comes from the unperturbed `(mu, epsilon)`.
#[derive(Debug, Clone)]
pub struct RadialSystem {
    pub params: Parameters,
    pub grid: Grid,
    pub l0: f64,
    pub rho4: Rho4,
}

impl RadialSystem {
    pub fn new(params: Parameters, grid: Grid) -> Self {
        RadialSystem { l0: params.l0(), params, grid, rho4: Rho4::Free }
    }

    /// Constant subtracted from each field to form the unknown.
    fn offsets(&self) -> [f64; FIELDS] {
        [self.l0, self.params.h0, 0.0, -1.0 / self.grid.inner()]
    }

    fn unknowns(&self) -> usize {
        FIELDS * self.grid.len() + usize::from(self.rho4 == Rho4::Free)
    }

    fn rho4_of(&self, x: &[f64]) -> f64 {
        match self.rho4 {
            Rho4::Free => x[FIELDS * self.grid.len()],
            Rho4::Fixed(v) => v,
        }
    }

    fn node_state(&self, x: &[f64], i: usize) -> NodeState {
        let len = self.grid.len();
        let h = self.grid.spacing();
        let (df, dp) = if i == 0 || i + 1 == len {
            (0.0, 0.0)
        } else {
            (
                (x[slot(i + 1, 2)] - x[slot(i - 1, 2)]) / (2.0 * h),
                (x[slot(i + 1, 3)] - x[slot(i - 1, 3)]) / (2.0 * h),
            )
        };
        let off = self.offsets();
        NodeState { l: x[slot(i, 0)] + off[0], h: x[slot(i, 1)] + off[1], f: x[slot(i, 2)], df, dp }
    }

    /// Residual vector; interior rows are scaled by `h^2` and derivative
    /// boundary rows by `h` so that every row is in field units.
    pub fn evaluate(&self, x: &[f64], want_jacobian: bool) -> Result<(Vec<f64>, Option<Jacobian>)> {
        let p = &self.params;
        let grid = &self.grid;
        let len = grid.len();
        let h = grid.spacing();
        let h2 = h * h;
        let rho4 = self.rho4_of(x);
        let n_fields = FIELDS * len;
        let mut res = vec![0.0; self.unknowns()];
        let mut jac = want_jacobian.then(|| Jacobian {
            band: BandedMatrix::zeros(n_fields, 8, 8),
            rho4_column: vec![0.0; n_fields],
            closure_row: vec![0.0; n_fields],
        });
        let diffusion = [1.0, 1.0, p.diffusivity, 1.0];

        for i in 1..len - 1 {
            let s = self.node_state(x, i);
            let rhs = reaction_rhs(&s, rho4, p)?;
            let stencil = ln_stencil(grid.node(i), h, 0);
            for k in 0..FIELDS {
                let lap = stencil[0] * x[slot(i - 1, k)]
                    + stencil[1] * x[slot(i, k)]
                    + stencil[2] * x[slot(i + 1, k)];
                res[slot(i, k)] = h2 * (diffusion[k] * lap - rhs[k]);
            }
            if let Some(j) = jac.as_mut() {
                let partials = reaction_partials(&s, rho4, p)?;
                let (d3, d4) = rho4_partials(&s, p);
                for k in 0..FIELDS {
                    let row = slot(i, k);
                    for (off, c) in [(0usize, stencil[0]), (1, stencil[1]), (2, stencil[2])] {
                        j.band.add(row, slot(i + off - 1, k), h2 * diffusion[k] * c);
                    }
                    for (m, d) in partials[k].iter().enumerate() {
                        j.band.add(row, slot(i, m), -h2 * d);
                    }
                }
                // convection -F' p' in the F row
                let row = slot(i, 2);
                let c = 1.0 / (2.0 * h);
                j.band.add(row, slot(i + 1, 2), -h2 * s.dp * c);
                j.band.add(row, slot(i - 1, 2), h2 * s.dp * c);
                j.band.add(row, slot(i + 1, 3), -h2 * s.df * c);
                j.band.add(row, slot(i - 1, 3), h2 * s.df * c);
                j.rho4_column[slot(i, 2)] = -h2 * d3;
                j.rho4_column[slot(i, 3)] = -h2 * d4;
            }
        }

        // inner boundary
        let w_in = [-1.5, 2.0, -0.5];
        let d_in = |k: usize| -> f64 { (0..3).map(|m| w_in[m] * x[slot(m, k)]).sum() };
        // far-field levels coincide with the offsets
        let robin = [p.beta1, p.beta1, p.beta2];
        for (k, beta) in robin.iter().enumerate() {
            res[slot(0, k)] = -d_in(k) + h * beta * x[slot(0, k)];
        }
        res[slot(0, 3)] = x[slot(0, 3)];
        // outer Neumann rows
        let last = len - 1;
        let w_out = [1.5, -2.0, 0.5];
        for k in 0..FIELDS {
            res[slot(last, k)] = (0..3).map(|m| w_out[m] * x[slot(last - m, k)]).sum();
        }
        if self.rho4 == Rho4::Free {
            res[n_fields] = d_in(3);
        }
        if let Some(j) = jac.as_mut() {
            for (k, beta) in robin.iter().enumerate() {
                for m in 0..3 {
                    j.band.add(slot(0, k), slot(m, k), -w_in[m]);
                }
                j.band.add(slot(0, k), slot(0, k), h * beta);
            }
            j.band.add(slot(0, 3), slot(0, 3), 1.0);
            for k in 0..FIELDS {
                for m in 0..3 {
                    j.band.add(slot(last, k), slot(last - m, k), w_out[m]);
                }
            }
            for m in 0..3 {
                j.closure_row[slot(m, 3)] = w_in[m];
            }
        }
        Ok((res, jac))
    }

    /// Asymptotic initial guess.
    pub fn initial_guess(&self) -> Result<Vec<f64>> {
        let p = &self.params;
        let d = leading_order_coeffs(p)?;
        let eps = p.epsilon;
        let l = DerivedConstants::lstar0(p) + eps * d.lstar1;
        let hh = p.h0 + eps * d.hstar1;
        let f = eps * d.fstar1;
        let rho4 = match self.rho4 {
            Rho4::Fixed(v) => v,
            Rho4::Free => d.rho4_leading.ok_or_else(|| {
                Error::Degenerate("F*1 = 0: no leading-order rho4 to start from".into())
            })?,
        };
        let s = NodeState { l, h: hh, f, df: 0.0, dp: 0.0 };
        let forcing = reaction_rhs(&s, rho4, p)?[3];
        let r0 = self.grid.inner();
        // -q'' - q'/r = forcing with q'(1) = 0, q(r0) = 0
        let psi = |r: f64| forcing * ((1.0 - r * r) / 4.0 + 0.5 * r.ln());
        let off = self.offsets();
        let mut x = Vec::with_capacity(self.unknowns());
        for i in 0..self.grid.len() {
            let r = self.grid.node(i);
            x.extend_from_slice(&[l - off[0], hh - off[1], f, psi(r) - psi(r0)]);
        }
        if self.rho4 == Rho4::Free {
            x.push(rho4);
        }
        Ok(x)
    }
}

/// Newton matrix of [`RadialSystem`]: banded field block, the `rho4` column
/// and the `dp/dr = 0` closure row.
pub struct Jacobian {
    pub band: BandedMatrix,
    pub rho4_column: Vec<f64>,
    pub closure_row: Vec<f64>,
}

impl NonlinearSystem for RadialSystem {
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(x, false)?.0)
    }

    fn solve_jacobian(&self, x: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let (_, jac) = self.evaluate(x, true)?;
        let jac = jac.expect("requested");
        let n_fields = FIELDS * self.grid.len();
        match self.rho4 {
            Rho4::Fixed(_) => Ok(jac.band.lu()?.solve(rhs)),
            Rho4::Free => {
                let sys = BorderedSystem::new(&jac.band, &jac.rho4_column, &jac.closure_row, 0.0)?;
                let (mut dx, ds) = sys.solve(&rhs[..n_fields], rhs[n_fields]);
                dx.push(ds);
                Ok(dx)
            }
        }
    }

    fn scale(&self, x: &[f64]) -> f64 {
        x[..FIELDS * self.grid.len()].iter().fold(1.0f64, |m, v| m.max(v.abs()))
    }
}

/// Second radial derivatives at `r = 1 - eps` from the ODEs themselves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryDiagnostics {
    pub d2l: f64,
    pub d2h: f64,
    pub d2f: f64,
    pub d2p: f64,
    /// First derivatives implied by the inner boundary rows.
    pub dl: f64,
    pub dh: f64,
    pub df: f64,
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub params: Parameters,
    pub grid: Grid,
    pub l: RadialField,
    pub h: RadialField,
    pub f: RadialField,
    pub p: RadialField,
    pub rho4: f64,
    pub mu: f64,
    pub boundary: BoundaryDiagnostics,
    pub report: NewtonReport,
    /// Largest `h^2`-scaled interior residual.
    pub interior_residual: f64,
    /// Largest unscaled Robin/Neumann/Dirichlet/closure residual.
    pub boundary_residual: f64,
    /// Physicality problems (negative concentrations, F outside [0, M0]).
    pub warnings: Vec<String>,
}

impl SteadyState {
    pub fn epsilon(&self) -> f64 {
        self.grid.epsilon()
    }

    pub fn node_state(&self, i: usize) -> NodeState {
        NodeState {
            l: self.l.values[i],
            h: self.h.values[i],
            f: self.f.values[i],
            df: self.f.derivative(i),
            dp: self.p.derivative(i),
        }
    }

    /// `int r * rhs_p dr`, zero when the pressure has zero flux at both ends.
    pub fn solvability_integral(&self) -> Result<f64> {
        let mut vals = Vec::with_capacity(self.grid.len());
        for i in 0..self.grid.len() {
            let rhs = reaction_rhs(&self.node_state(i), self.rho4, &self.params)?;
            vals.push(self.grid.node(i) * rhs[3]);
        }
        Ok(self.grid.simpson(&vals))
    }

    /// `(r, L, H, F, p)` rows.
    pub fn profile_rows(&self) -> Vec<[f64; 5]> {
        (0..self.grid.len())
            .map(|i| {
                [self.grid.node(i), self.l.values[i], self.h.values[i], self.f.values[i], self.p.values[i]]
            })
            .collect()
    }
}

fn unpack(system: &RadialSystem, x: Vec<f64>, report: NewtonReport) -> Result<SteadyState> {
    let grid = system.grid;
    let p = system.params;
    let len = grid.len();
    let off = system.offsets();
    let field = |k: usize, name| RadialField::new(grid, (0..len).map(|i| x[slot(i, k)] + off[k]).collect(), name);
    let rho4 = system.rho4_of(&x);
    let (res, _) = system.evaluate(&x, false)?;
    let h = grid.spacing();
    let interior_residual = (1..len - 1)
        .flat_map(|i| (0..FIELDS).map(move |k| slot(i, k)))
        .fold(0.0f64, |m, j| m.max(res[j].abs()));
    let mut boundary_residual = (0..FIELDS)
        .map(|k| (res[slot(0, k)] / if k == 3 { 1.0 } else { h }).abs())
        .chain((0..FIELDS).map(|k| (res[slot(len - 1, k)] / h).abs()))
        .fold(0.0f64, f64::max);
    if system.rho4 == Rho4::Free {
        boundary_residual = boundary_residual.max((res[FIELDS * len] / h).abs());
    }

    let mut state = SteadyState {
        params: p,
        grid,
        l: field(0, "L")?,
        h: field(1, "H")?,
        f: field(2, "F")?,
        p: field(3, "p")?,
        rho4,
        mu: p.mu,
        boundary: BoundaryDiagnostics { d2l: 0.0, d2h: 0.0, d2f: 0.0, d2p: 0.0, dl: 0.0, dh: 0.0, df: 0.0 },
        report,
        interior_residual,
        boundary_residual,
        warnings: Vec::new(),
    };
    state.boundary = boundary_second_derivatives(&state, system.l0)?;
    for (name, fld) in [("L", &state.l), ("H", &state.h)] {
        if fld.values.iter().any(|v| *v <= 0.0) {
            state.warnings.push(format!("{name}* is not strictly positive"));
        }
    }
    if state.f.values.iter().any(|v| *v < 0.0 || *v > p.m0) {
        state.warnings.push("F* leaves [0, M0]".into());
    }
    if rho4 < 0.0 {
        state.warnings.push(format!("rho4 = {rho4} is negative"));
    }
    Ok(state)
}

/// `u''(1 - eps)` for all four fields, using the boundary rows for `u'` and
/// the ODE for `u''`.
pub fn boundary_second_derivatives(state: &SteadyState, l0: f64) -> Result<BoundaryDiagnostics> {
    let p = &state.params;
    let r0 = state.grid.inner();
    let (l, hh, f) = (state.l.values[0], state.h.values[0], state.f.values[0]);
    let dl = p.beta1 * (l - l0);
    let dh = p.beta1 * (hh - p.h0);
    let df = p.beta2 * f;
    let s = NodeState { l, h: hh, f, df, dp: 0.0 };
    let rhs = reaction_rhs(&s, state.rho4, p)?;
    Ok(BoundaryDiagnostics {
        d2l: -dl / r0 - rhs[0],
        d2h: -dh / r0 - rhs[1],
        d2f: -df / r0 - rhs[2] / p.diffusivity,
        d2p: -rhs[3],
        dl,
        dh,
        df,
    })
}

pub fn newton_options() -> NewtonOptions {
    NewtonOptions { max_iterations: 30, polish_steps: 2, ..NewtonOptions::default() }
}

/// Solves the radial system for `(L*, H*, F*, p*, rho4)` at `params.mu`.
///
/// Starts from the first-order expansion; if Newton fails there, walks an
/// epsilon ladder (2 eps, 1.5 eps, eps) and reuses each solution.
pub fn solve_steady_state(params: &Parameters, grid: &Grid) -> Result<SteadyState> {
    let violations = params.validate_positivity();
    if let Some(v) = violations.first() {
        return Err(Error::Hypothesis(format!("{}: {}", v.constraint, v.detail)));
    }
    let grid = grid.with_epsilon(params.epsilon)?;
    let system = RadialSystem::new(*params, grid);
    let guess = system.initial_guess()?;
    match newton_solve(&system, guess, &newton_options()) {
        Ok((x, report)) => unpack(&system, x, report),
        Err(first @ Error::Convergence { .. }) => {
            let ladder = [2.0, 1.5];
            let mut carried: Option<Vec<f64>> = None;
            for factor in ladder {
                let eps = params.epsilon * factor;
                if eps >= 0.25 {
                    continue;
                }
                let sys = RadialSystem::new(params.with_epsilon(eps), grid.with_epsilon(eps)?);
                let start = match carried.take() {
                    Some(x) => x,
                    None => sys.initial_guess()?,
                };
                if let Ok((x, _)) = newton_solve(&sys, start, &newton_options()) {
                    carried = Some(x);
                }
            }
            let Some(start) = carried else { return Err(first) };
            let (x, report) = newton_solve(&system, start, &newton_options())?;
            unpack(&system, x, report)
        }
        Err(e) => Err(e),
    }
}

/// Radial solve on `grid` (which may have a shifted inner boundary) with
/// `rho4` held fixed. Used for perturbed-domain consistency checks.
pub fn solve_fixed_rho4(params: &Parameters, grid: &Grid, rho4: f64) -> Result<SteadyState> {
    let system = RadialSystem { params: *params, grid: *grid, l0: params.l0(), rho4: Rho4::Fixed(rho4) };
    let guess = system.initial_guess()?;
    let (x, report) = newton_solve(&system, guess, &newton_options())?;
    unpack(&system, x, report)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::params::Parameters;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn gap_params() -> Parameters {
        Parameters {
            k1: 1.0,
            k2: 1.0,
            big_k1: 1.0,
            big_k2: 1.0,
            rho1: 0.1,
            rho2: 2.0,
            rho3: 0.2,
            lambda: 1.0,
            gamma: 1.0,
            diffusivity: 1.0,
            m0: 1.0,
            h0: 1.0,
            beta1: 1.0,
            beta2: 2.0,
            epsilon: 0.01,
            mu: 0.0,
        }
    }

    /// Independent transcription of the right-hand sides with `M` kept explicit.
    fn rhs_oracle(l: f64, h: f64, f: f64, df: f64, dp: f64, rho4: f64, p: &Parameters) -> [f64; 4] {
        let m = p.m0 - f;
        let r1 = -p.k1 * (m * l) / (p.big_k1 + l) - p.rho1 * l;
        let r2 = -p.k2 * (h * f) / (p.big_k2 + f) - p.rho2 * h;
        let r3 = p.k1 * (m * l) / (p.big_k1 + l) - p.k2 * (h * f) / (p.big_k2 + f)
            - p.lambda * (f * m * l) / (p.m0 * (p.gamma + h))
            + (p.rho3 - rho4) * (m * f) / p.m0;
        let r4 = (1.0 / p.m0) * (p.lambda * (m * l) / (p.gamma + h) - p.rho3 * m - rho4 * f);
        [r1, r2, r3 + df * dp, r4]
    }

    #[test]
    fn rhs_at_zero_state() {
        let p = gap_params();
        let out = reaction_rhs(&NodeState::default(), 0.7, &p).unwrap();
        assert_eq!(out[..3], [0.0, 0.0, 0.0]);
        assert!((out[3] + p.rho3).abs() < 1e-15);

        let p = Parameters { k1: 0.0, k2: 0.0, lambda: 0.0, rho1: 0.0, rho2: 0.0, rho3: 0.0, ..p };
        let s = NodeState { l: 0.3, h: 0.4, f: 0.2, df: 0.0, dp: 0.0 };
        assert_eq!(reaction_rhs(&s, 0.0, &p).unwrap(), [0.0; 4]);
    }

    #[test]
    fn rhs_matches_oracle() {
        let p = gap_params();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (l, h, f) = (rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..1.0));
            let (df, dp, rho4) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..3.0));
            let got = reaction_rhs(&NodeState { l, h, f, df, dp }, rho4, &p).unwrap();
            let want = rhs_oracle(l, h, f, df, dp, rho4, &p);
            for k in 0..4 {
                assert!((got[k] - want[k]).abs() <= 1e-13 * want[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn rhs_domain_error() {
        let p = gap_params();
        let s = NodeState { l: -2.0, ..NodeState::default() };
        assert!(matches!(reaction_rhs(&s, 0.0, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = gap_params();
        let grid = Grid::new(p.epsilon, 41).unwrap();
        let sys = RadialSystem::new(p, grid);
        let mut x = sys.initial_guess().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for v in x.iter_mut() {
            *v *= 1.0 + 0.05 * rng.gen_range(-1.0..1.0);
        }
        let (_, jac) = sys.evaluate(&x, true).unwrap();
        let jac = jac.unwrap();
        let n_fields = FIELDS * grid.len();
        let (r0, _) = sys.evaluate(&x, false).unwrap();
        for col in 0..x.len() {
            let step = 1e-5 * x[col].abs().max(1.0);
            let mut xp = x.clone();
            xp[col] += step;
            let mut xm = x.clone();
            xm[col] -= step;
            let rp = sys.evaluate(&xp, false).unwrap().0;
            let rm = sys.evaluate(&xm, false).unwrap().0;
            for row in 0..r0.len() {
                let fd = (rp[row] - rm[row]) / (2.0 * step);
                let an = match (row < n_fields, col < n_fields) {
                    (true, true) => jac.band.get(row, col),
                    (true, false) => jac.rho4_column[row],
                    (false, true) => jac.closure_row[col],
                    (false, false) => 0.0,
                };
                assert!((fd - an).abs() <= 1e-6 * an.abs() + 1e-9, "row {row} col {col}: fd {fd} analytic {an}");
            }
        }
    }

    #[test]
    fn solves_gap_set() {
        let p = gap_params();
        let grid = Grid::new(p.epsilon, 401).unwrap();
        let s = solve_steady_state(&p, &grid).unwrap();
        assert!(s.report.iterations <= 8, "{:?}", s.report);
        assert!((s.p.values[0] + 1.0 / 0.99).abs() < 1e-14);
        assert!((s.p.values[0] + 1.010_101_010_101_010_1).abs() < 1e-14);
        assert!(s.p.derivative(0).abs() <= 1e-10);
        assert!(s.boundary_residual <= 1e-10, "{}", s.boundary_residual);
        assert!(s.interior_residual <= 1e-11, "{}", s.interior_residual);
        assert!(s.warnings.is_empty(), "{:?}", s.warnings);
        assert!(s.solvability_integral().unwrap().abs() < 1e-9);
        let lead = leading_order_coeffs(&p).unwrap().rho4_leading.unwrap();
        assert!((s.rho4 - lead).abs() < 0.2 * lead.abs());
    }

    #[test]
    fn boundary_identity_matches_differencing() {
        // thick annulus and coarse grids keep the 1/h^2 stencil above rounding
        let p = gap_params().with_epsilon(0.1);
        let err = |len: usize| {
            let grid = Grid::new(p.epsilon, len).unwrap();
            let s = solve_steady_state(&p, &grid).unwrap();
            let b = s.boundary;
            assert!((b.d2p + reaction_rhs(&s.node_state(0), s.rho4, &p).unwrap()[3]).abs() < 1e-12);
            [
                (b.d2l - s.l.inner_second_derivative_5pt()).abs(),
                (b.d2h - s.h.inner_second_derivative_5pt()).abs(),
                (b.d2f - s.f.inner_second_derivative_5pt()).abs(),
                (b.d2p - s.p.inner_second_derivative_5pt()).abs(),
            ]
        };
        let coarse = err(41);
        let fine = err(81);
        for k in 0..4 {
            assert!(fine[k] < coarse[k] / 3.0 || fine[k] < 1e-9, "{k}: {coarse:?} {fine:?}");
        }
    }

    #[test]
    fn zero_pressure_forcing() {
        // k1 = lambda = rho3 = rho4 = 0 leaves nothing to drive the pressure
        let p = Parameters { k1: 0.0, lambda: 0.0, rho3: 0.0, ..gap_params() };
        let s = NodeState { l: 0.5, h: 1.0, f: 0.3, df: 0.0, dp: 0.0 };
        assert_eq!(reaction_rhs(&s, 0.0, &p).unwrap()[3], 0.0);
    }

    #[test]
    fn rho4_is_continuous_in_mu() {
        let p = gap_params();
        let grid = Grid::new(p.epsilon, 201).unwrap();
        let base = solve_steady_state(&p, &grid).unwrap().rho4;
        let mut last = f64::INFINITY;
        for delta in [1e-2, 1e-3, 1e-4] {
            let d = (solve_steady_state(&p.with_mu(delta), &grid).unwrap().rho4 - base).abs();
            assert!(d < last);
            last = d;
        }
        assert!(last < 1e-2);
    }
}
