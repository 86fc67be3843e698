use crate::error::{Error, Result};

/// Uniform node set on the annulus `[1 - epsilon, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    epsilon: f64,
    len: usize,
}

pub const MIN_NODES: usize = 21;
pub const DEFAULT_NODES: usize = 401;

impl Grid {
    pub fn new(epsilon: f64, len: usize) -> Result<Self> {
        if len < MIN_NODES || len.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "grid needs an odd number of nodes >= {MIN_NODES}, got {len}"
            )));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Config(format!("annulus thickness {epsilon} outside (0, 1)")));
        }
        Ok(Grid { epsilon, len })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.epsilon / (self.len - 1) as f64
    }

    pub fn inner(&self) -> f64 {
        1.0 - self.epsilon
    }

    /// Node `i`; the last node is exactly 1.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i < self.len);
        if i + 1 == self.len {
            1.0
        } else {
            self.inner() + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.node(i)).collect()
    }

    /// A grid with the same node count on a different annulus.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Grid::new(epsilon, self.len)
    }

    pub fn with_len(&self, len: usize) -> Result<Self> {
        Grid::new(self.epsilon, len)
    }

    /// `[1 - epsilon + shift, 1]` sampled with the same node count. Used for
    /// perturbed-domain solves; `epsilon()` reports the shrunken width.
    pub fn shifted_inner(&self, shift: f64) -> Result<Self> {
        Grid::new(self.epsilon - shift, self.len)
    }

    /// Composite Simpson's rule over the whole annulus.
    pub fn simpson(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.len);
        let h = self.spacing();
        let mut sum = values[0] + values[self.len - 1];
        for (i, v) in values.iter().enumerate().take(self.len - 1).skip(1) {
            sum += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        sum * h / 3.0
    }
}

/// Which end of the annulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `r = 1 - epsilon`
    Inner,
    /// `r = 1`
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    Dirichlet,
    Neumann,
    Robin,
}

/// `a u + b u' = g` at one end, with `u'` the coordinate derivative d/dr on
/// both sides (no outward-normal sign flip).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCondition {
    pub side: Side,
    pub a: f64,
    pub b: f64,
    pub g: f64,
}

impl BoundaryCondition {
    pub fn new(side: Side, a: f64, b: f64, g: f64) -> Result<Self> {
        if a == 0.0 && b == 0.0 {
            return Err(Error::Config("boundary condition with a = b = 0".into()));
        }
        Ok(BoundaryCondition { side, a, b, g })
    }

    pub fn dirichlet(side: Side, g: f64) -> Self {
        BoundaryCondition { side, a: 1.0, b: 0.0, g }
    }

    pub fn neumann(side: Side, g: f64) -> Self {
        BoundaryCondition { side, a: 0.0, b: 1.0, g }
    }

    /// `-u' + beta u = g`, the form every inner Robin row of the model takes.
    pub fn robin_inner(beta: f64, g: f64) -> Self {
        BoundaryCondition { side: Side::Inner, a: beta, b: -1.0, g }
    }

    pub fn kind(&self) -> BcKind {
        match (self.a == 0.0, self.b == 0.0) {
            (_, true) => BcKind::Dirichlet,
            (true, false) => BcKind::Neumann,
            (false, false) => BcKind::Robin,
        }
    }

    /// Residual `a u + b u' - g` for a sampled field.
    pub fn residual(&self, field: &RadialField) -> f64 {
        let (u, du) = match self.side {
            Side::Inner => (field.values[0], field.derivative(0)),
            Side::Outer => (field.values[field.values.len() - 1], field.derivative(field.values.len() - 1)),
        };
        self.a * u + self.b * du - self.g
    }
}

/// Three-point one-sided first-derivative weights `(w0, w1, w2)` at an end,
/// applied to the end node and its two neighbours moving inward.
pub fn one_sided_weights(side: Side, h: f64) -> [f64; 3] {
    match side {
        Side::Inner => [-1.5 / h, 2.0 / h, -0.5 / h],
        Side::Outer => [1.5 / h, -2.0 / h, 0.5 / h],
    }
}

/// Profile `u(r_i)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub name: &'static str,
}

impl RadialField {
    pub fn new(grid: Grid, values: Vec<f64>, name: &'static str) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Usage(format!(
                "field {name} has {} values for a {}-node grid",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("field {name} is not finite at node {i}")));
        }
        Ok(RadialField { grid, values, name })
    }

    pub fn from_fn(grid: Grid, name: &'static str, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        RadialField { grid, values, name }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn inner_value(&self) -> f64 {
        self.values[0]
    }

    pub fn outer_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Second-order first derivative at node `i` (centered inside, one-sided
    /// three-point at the ends).
    pub fn derivative(&self, i: usize) -> f64 {
        let h = self.grid.spacing();
        let u = &self.values;
        let last = u.len() - 1;
        if i == 0 {
            let w = one_sided_weights(Side::Inner, h);
            w[0] * u[0] + w[1] * u[1] + w[2] * u[2]
        } else if i == last {
            let w = one_sided_weights(Side::Outer, h);
            w[0] * u[last] + w[1] * u[last - 1] + w[2] * u[last - 2]
        } else {
            (u[i + 1] - u[i - 1]) / (2.0 * h)
        }
    }

    pub fn derivatives(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.derivative(i)).collect()
    }

    /// Second derivative: centered inside, four-point one-sided at the ends.
    pub fn second_derivative(&self, i: usize) -> f64 {
        let h2 = self.grid.spacing().powi(2);
        let u = &self.values;
        let last = u.len() - 1;
        if i == 0 {
            (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / h2
        } else if i == last {
            (2.0 * u[last] - 5.0 * u[last - 1] + 4.0 * u[last - 2] - u[last - 3]) / h2
        } else {
            (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2
        }
    }

    /// Five-point one-sided second derivative at the inner end (third order).
    pub fn inner_second_derivative_5pt(&self) -> f64 {
        let h2 = self.grid.spacing().powi(2);
        let u = &self.values;
        (35.0 * u[0] - 104.0 * u[1] + 114.0 * u[2] - 56.0 * u[3] + 11.0 * u[4]) / (12.0 * h2)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max_i |u_i - f(r_i)|`
    pub fn max_deviation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .fold(0.0, |m, (i, v)| m.max((v - f(self.grid.node(i))).abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = Grid::new(0.01, 401).unwrap();
        assert_eq!(g.node(0), 0.99);
        assert_eq!(g.node(400), 1.0);
        let nodes = g.nodes();
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        // spacing uniform up to rounding
        let h = g.spacing();
        assert!(nodes.windows(2).all(|w| ((w[1] - w[0]) - h).abs() < 1e-15));
        assert!((g.node(399) + h - 1.0).abs() <= 2.0 * f64::EPSILON);
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid::new(0.01, 20).is_err());
        assert!(Grid::new(0.01, 402).is_err());
        assert!(Grid::new(0.0, 401).is_err());
    }

    #[test]
    fn bc_kinds() {
        assert_eq!(BoundaryCondition::dirichlet(Side::Inner, 1.0).kind(), BcKind::Dirichlet);
        assert_eq!(BoundaryCondition::neumann(Side::Outer, 0.0).kind(), BcKind::Neumann);
        assert_eq!(BoundaryCondition::robin_inner(2.0, 0.0).kind(), BcKind::Robin);
        assert!(BoundaryCondition::new(Side::Inner, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn simpson_exact_on_cubics() {
        let g = Grid::new(0.1, 21).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|r| r * r * r - 2.0 * r).collect();
        let exact = |r: f64| r.powi(4) / 4.0 - r * r;
        assert!((g.simpson(&v) - (exact(1.0) - exact(0.9))).abs() < 1e-15);
    }

    #[test]
    fn endpoint_derivatives_second_order() {
        let eps = 0.05;
        let u = |r: f64| (4.0 * std::f64::consts::PI * (r - 1.0) / eps).sin();
        let du = |r: f64| 4.0 * std::f64::consts::PI / eps * (4.0 * std::f64::consts::PI * (r - 1.0) / eps).cos();
        let err = |n: usize| {
            let g = Grid::new(eps, n).unwrap();
            let f = RadialField::from_fn(g, "u", u);
            (f.derivative(0) - du(g.inner())).abs()
        };
        let order = (err(201) / err(401)).log2();
        assert!(order >= 1.9, "order {order}");
    }
}
