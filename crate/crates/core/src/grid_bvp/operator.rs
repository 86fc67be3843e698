use super::banded::BandedMatrix;
use super::grid::{one_sided_weights, BoundaryCondition, Grid, RadialField, Side};
use crate::error::{Error, Result};

/// Centered discretization of `L_n u = -u'' - u'/r + n^2 u / r^2` with the two
/// boundary rows left empty.
#[derive(Debug, Clone)]
pub struct RadialOperator {
    grid: Grid,
    mode: u32,
    matrix: BandedMatrix,
}

/// Interior stencil `(lower, diagonal, upper)` of `L_n` at node `r`.
pub fn ln_stencil(r: f64, h: f64, mode: u32) -> [f64; 3] {
    let n2 = f64::from(mode * mode);
    let diffusion = 1.0 / (h * h);
    let drift = 1.0 / (2.0 * h * r);
    [-diffusion + drift, 2.0 * diffusion + n2 / (r * r), -diffusion - drift]
}

pub fn assemble_ln(grid: &Grid, mode: u32) -> Result<RadialOperator> {
    let len = grid.len();
    if len < super::grid::MIN_NODES {
        return Err(Error::Config(format!("{len} nodes is too few")));
    }
    let h = grid.spacing();
    let mut matrix = BandedMatrix::zeros(len, 2, 2);
    for i in 1..len - 1 {
        let [lo, di, up] = ln_stencil(grid.node(i), h, mode);
        matrix.set(i, i - 1, lo);
        matrix.set(i, i, di);
        matrix.set(i, i + 1, up);
    }
    Ok(RadialOperator { grid: *grid, mode, matrix })
}

impl RadialOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mode(&self) -> u32 {
        self.mode
    }

    /// `L_n u` at interior nodes; the two boundary entries are zero.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(u)
    }

    pub fn matrix(&self) -> &BandedMatrix {
        &self.matrix
    }
}

/// Writes the row `a u + b u' = g` (without `g`) for one boundary.
pub(crate) fn inject_bc_row(m: &mut BandedMatrix, grid: &Grid, bc: &BoundaryCondition, stride: usize, offset: usize) {
    let len = grid.len();
    let w = one_sided_weights(bc.side, grid.spacing());
    let nodes = match bc.side {
        Side::Inner => [0, 1, 2],
        Side::Outer => [len - 1, len - 2, len - 3],
    };
    let row = nodes[0] * stride + offset;
    for (k, node) in nodes.iter().enumerate() {
        let col = node * stride + offset;
        let mut v = bc.b * w[k];
        if k == 0 {
            v += bc.a;
        }
        m.add(row, col, v);
    }
}

/// Solves `L_n u = rhs` in the interior with one condition on each side.
///
/// A Neumann-Neumann pair for `n = 0` is singular and reported as a
/// solvability error.
pub fn solve_linear_system(
    op: &RadialOperator,
    rhs: &RadialField,
    bcs: [BoundaryCondition; 2],
) -> Result<RadialField> {
    let grid = op.grid;
    if rhs.grid != grid {
        return Err(Error::Usage("right-hand side lives on a different grid".into()));
    }
    let (inner, outer) = match (bcs[0].side, bcs[1].side) {
        (Side::Inner, Side::Outer) => (bcs[0], bcs[1]),
        (Side::Outer, Side::Inner) => (bcs[1], bcs[0]),
        _ => return Err(Error::Usage("need one inner and one outer boundary condition".into())),
    };
    let len = grid.len();
    let mut m = op.matrix.clone();
    inject_bc_row(&mut m, &grid, &inner, 1, 0);
    inject_bc_row(&mut m, &grid, &outer, 1, 0);
    let mut b = rhs.values.clone();
    b[0] = inner.g;
    b[len - 1] = outer.g;

    let lu = m.lu()?;
    let mut u = lu.solve(&b);
    // one step of iterative refinement
    let r: Vec<f64> = m.mul_vec(&u).iter().zip(&b).map(|(au, bi)| bi - au).collect();
    let du = lu.solve(&r);
    for (ui, d) in u.iter_mut().zip(&du) {
        *ui += d;
    }

    let au = m.mul_vec(&u);
    let abs = m.abs_mul_vec(&u);
    let rhs_scale = b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for i in 1..len - 1 {
        let scale = rhs_scale.max(abs[i]).max(f64::MIN_POSITIVE);
        if (au[i] - b[i]).abs() > 1e-12 * scale {
            return Err(Error::Solvability(format!(
                "interior residual {:e} at node {i} exceeds tolerance",
                (au[i] - b[i]).abs()
            )));
        }
    }
    RadialField::new(grid, u, "u")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constants_in_kernel_of_l0() {
        let g = Grid::new(0.02, 101).unwrap();
        let op = assemble_ln(&g, 0).unwrap();
        let out = op.apply(&vec![3.5; 101]);
        assert!(out.iter().all(|v| v.abs() <= 1e-12 * 3.5 / g.spacing().powi(2)));
    }

    #[test]
    fn log_r_nearly_in_kernel() {
        let eps = 0.05;
        let residual = |n: usize| {
            let g = Grid::new(eps, n).unwrap();
            let u: Vec<f64> = g.nodes().iter().map(|r| r.ln()).collect();
            let out = assemble_ln(&g, 0).unwrap().apply(&u);
            (out[1..n - 1].iter().fold(0.0f64, |m, v| m.max(v.abs())), g.spacing())
        };
        for len in [101, 201, 401, 801] {
            let (r, h) = residual(len);
            // truncation plus rounding of the 1/h^2 stencil
            let rounding = 64.0 * f64::EPSILON * (1.0 - eps).ln().abs() / (h * h);
            assert!(r <= 3.0 * h * h + rounding, "{len}: {r}");
        }
    }

    #[test]
    fn manufactured_operator_error_is_second_order() {
        let eps = 0.05;
        let k = 4.0 * PI / eps;
        let u = |r: f64| (k * (r - 1.0)).cos();
        let lu = |r: f64, n: f64| {
            k * k * (k * (r - 1.0)).cos() + k * (k * (r - 1.0)).sin() / r + n * n / (r * r) * u(r)
        };
        for mode in [0u32, 1, 3] {
            let err = |len: usize| {
                let g = Grid::new(eps, len).unwrap();
                let v: Vec<f64> = g.nodes().iter().map(|&r| u(r)).collect();
                let out = assemble_ln(&g, mode).unwrap().apply(&v);
                (1..len - 1).fold(0.0f64, |m, i| m.max((out[i] - lu(g.node(i), f64::from(mode))).abs()))
            };
            let ratio = err(201) / err(401);
            assert!((ratio - 4.0).abs() < 0.2, "mode {mode}: ratio {ratio}");
        }
    }

    #[test]
    fn constant_solution_dirichlet_neumann() {
        let g = Grid::new(0.01, 101).unwrap();
        let op = assemble_ln(&g, 0).unwrap();
        let rhs = RadialField::from_fn(g, "rhs", |_| 0.0);
        let u = solve_linear_system(
            &op,
            &rhs,
            [BoundaryCondition::dirichlet(Side::Inner, 1.0), BoundaryCondition::neumann(Side::Outer, 0.0)],
        )
        .unwrap();
        assert!(u.values.iter().all(|v| (v - 1.0).abs() < 1e-13));
    }

    #[test]
    fn neumann_neumann_is_singular() {
        let g = Grid::new(0.01, 101).unwrap();
        let op = assemble_ln(&g, 0).unwrap();
        let rhs = RadialField::from_fn(g, "rhs", |_| 1.0);
        let err = solve_linear_system(
            &op,
            &rhs,
            [BoundaryCondition::neumann(Side::Inner, 0.0), BoundaryCondition::neumann(Side::Outer, 0.0)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Solvability(_)));
    }

    #[test]
    fn manufactured_solution_converges_second_order() {
        // u = cos(k (r - 1)) has u'(1) = 0; impose a Robin condition inside.
        let eps = 0.05;
        let k = 3.0 * PI / eps;
        let u = |r: f64| (k * (r - 1.0)).cos();
        let du = |r: f64| -k * (k * (r - 1.0)).sin();
        let mode = 1u32;
        let f = |r: f64| k * k * u(r) - du(r) / r + u(r) / (r * r);
        let beta = 2.0;
        let err = |len: usize| {
            let g = Grid::new(eps, len).unwrap();
            let op = assemble_ln(&g, mode).unwrap();
            let r0 = g.inner();
            let bcs = [
                BoundaryCondition::robin_inner(beta, -du(r0) + beta * u(r0)),
                BoundaryCondition::neumann(Side::Outer, 0.0),
            ];
            let sol = solve_linear_system(&op, &RadialField::from_fn(g, "f", f), bcs).unwrap();
            (sol.max_deviation(u), (sol.derivative(0) - du(r0)).abs())
        };
        let (e1, d1) = err(201);
        let (e2, d2) = err(401);
        let (e3, d3) = err(801);
        assert!((e1 / e2).log2() >= 1.9 && (e2 / e3).log2() >= 1.9, "{e1} {e2} {e3}");
        assert!((d1 / d2).log2() >= 1.9 && (d2 / d3).log2() >= 1.9, "{d1} {d2} {d3}");
    }
}
