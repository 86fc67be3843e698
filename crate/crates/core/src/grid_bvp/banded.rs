//! Banded LU with partial pivoting, plus a one-column/one-row bordered solve.
//!
//! Storage follows the LAPACK `gbtrf` layout: column-major with `kl` extra
//! rows above the band to hold pivoting fill-in.

use crate::error::{Error, Result};

/// Pivots below this fraction of the (row-equilibrated) matrix scale are
/// treated as exact zeros.
const SINGULAR_PIVOT: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        BandedMatrix { n, kl, ku, ld, data: vec![0.0; ld * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        j * self.ld + (self.kl + self.ku + i - j)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i <= j + self.kl && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.index(i, j)]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band ({}, {})", self.kl, self.ku);
        let k = self.index(i, j);
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band ({}, {})", self.kl, self.ku);
        let k = self.index(i, j);
        self.data[k] += v;
    }

    /// Zero row `i` (inside the band).
    pub fn clear_row(&mut self, i: usize) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        for j in lo..=hi {
            self.set(i, j, 0.0);
        }
    }

    fn row_range(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        i.saturating_sub(self.kl)..=(i + self.ku).min(self.n - 1)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row_range(i).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// `sum_j |a_ij x_j|` per row, a natural scale for row residuals.
    pub fn abs_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row_range(i).map(|j| (self.get(i, j) * x[j]).abs()).sum())
            .collect()
    }

    pub fn row_max_abs(&self, i: usize) -> f64 {
        self.row_range(i).fold(0.0, |m, j| m.max(self.get(i, j).abs()))
    }

    /// Factorizes a row-equilibrated copy; the equilibration is folded into
    /// [`BandedLu::solve`].
    pub fn lu(&self) -> Result<BandedLu> {
        let n = self.n;
        let mut row_scale = vec![1.0; n];
        let mut a = self.clone();
        for (i, s) in row_scale.iter_mut().enumerate() {
            let m = self.row_max_abs(i);
            if m == 0.0 {
                return Err(Error::Solvability(format!("row {i} of the system is empty")));
            }
            *s = 1.0 / m;
            for j in self.row_range(i) {
                let k = a.index(i, j);
                a.data[k] *= *s;
            }
        }
        let (kl, ku) = (a.kl, a.ku);
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a.get(k, k).abs();
            for i in k + 1..=last_row {
                let v = a.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > SINGULAR_PIVOT) {
                return Err(Error::Solvability(format!(
                    "pivot {best:e} at column {k} of {n}: matrix is singular"
                )));
            }
            pivots[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (ip, ik) = (a.index(p, j), a.index(k, j));
                    a.data.swap(ip, ik);
                }
            }
            let pivot = a.get(k, k);
            for i in k + 1..=last_row {
                let ik = a.index(i, k);
                let l = a.data[ik] / pivot;
                a.data[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let kj = a.data[a.index(k, j)];
                        let ij = a.index(i, j);
                        a.data[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(BandedLu { lu: a, pivots, row_scale })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: BandedMatrix,
    pivots: Vec<usize>,
    row_scale: Vec<f64>,
}

impl BandedLu {
    pub fn dim(&self) -> usize {
        self.lu.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.lu;
        let n = a.n;
        assert_eq!(b.len(), n);
        for (bi, s) in b.iter_mut().zip(&self.row_scale) {
            *bi *= s;
        }
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(p, k);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + a.kl).min(n - 1) {
                    b[i] -= a.get(i, k) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + a.kl + a.ku).min(n - 1) {
                s -= a.data[a.index(k, j)] * b[j];
            }
            b[k] = s / a.data[a.index(k, k)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// `[A  col; row^T  corner] [x; s] = [rhs; rhs_last]` with `A` banded.
///
/// Solved by block elimination: two banded solves and a scalar Schur
/// complement.
pub struct BorderedSystem {
    lu: BandedLu,
    col_solution: Vec<f64>,
    row: Vec<f64>,
    schur: f64,
}

impl BorderedSystem {
    pub fn new(a: &BandedMatrix, col: &[f64], row: &[f64], corner: f64) -> Result<Self> {
        let lu = a.lu()?;
        let col_solution = lu.solve(col);
        let coupling: f64 = row.iter().zip(&col_solution).map(|(r, z)| r * z).sum();
        let schur = corner - coupling;
        let scale = corner.abs()
            + row.iter().zip(&col_solution).map(|(r, z)| (r * z).abs()).sum::<f64>();
        if !(schur.abs() > 1e-13 * scale) || !schur.is_finite() {
            return Err(Error::Solvability(format!(
                "bordered system is singular (Schur complement {schur:e})"
            )));
        }
        Ok(BorderedSystem { lu, col_solution, row: row.to_vec(), schur })
    }

    pub fn solve(&self, rhs: &[f64], rhs_last: f64) -> (Vec<f64>, f64) {
        let mut y = self.lu.solve(rhs);
        let ry: f64 = self.row.iter().zip(&y).map(|(r, v)| r * v).sum();
        let s = (rhs_last - ry) / self.schur;
        for (yi, zi) in y.iter_mut().zip(&self.col_solution) {
            *yi -= s * zi;
        }
        (y, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, rng: &mut ChaCha8Rng) -> BandedMatrix {
        let mut a = BandedMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                a.set(i, j, rng.gen_range(-1.0..1.0));
            }
            // keep triangular cases away from exponential ill-conditioning
            a.add(i, i, 2.0);
        }
        a
    }

    #[test]
    fn solves_random_banded_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, kl, ku) in &[(1, 0, 0), (5, 1, 1), (40, 3, 2), (60, 11, 11), (30, 0, 4)] {
            let a = random_banded(n, kl, ku, &mut rng);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = a.mul_vec(&x);
            let got = a.lu().unwrap().solve(&b);
            let err = got.iter().zip(&x).fold(0.0f64, |m, (g, e)| m.max((g - e).abs()));
            assert!(err < 1e-9, "n={n} kl={kl} ku={ku} err={err}");
        }
    }

    #[test]
    fn needs_pivoting() {
        // zero leading diagonal entry
        let mut a = BandedMatrix::zeros(3, 1, 1);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 2, 1.0);
        a.set(2, 1, 1.0);
        a.set(2, 2, 1.0);
        let x = a.lu().unwrap().solve(&[2.0, 4.0, 5.0]);
        assert_eq!(a.mul_vec(&x), vec![2.0, 4.0, 5.0]);
    }

    #[test]
    fn detects_singular() {
        let mut a = BandedMatrix::zeros(3, 1, 1);
        for i in 0..3 {
            a.set(i, i, 1.0);
        }
        a.set(1, 0, 1.0);
        a.set(0, 1, 1.0);
        assert!(matches!(a.lu(), Err(Error::Solvability(_))));
    }

    #[test]
    fn bordered_matches_dense_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 25;
        let a = random_banded(n, 2, 3, &mut rng);
        let col: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let row: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let corner = 0.3;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = -0.7;
        let mut rhs = a.mul_vec(&x);
        for (r, c) in rhs.iter_mut().zip(&col) {
            *r += c * s;
        }
        let last: f64 = row.iter().zip(&x).map(|(r, v)| r * v).sum::<f64>() + corner * s;
        let (gx, gs) = BorderedSystem::new(&a, &col, &row, corner).unwrap().solve(&rhs, last);
        assert!((gs - s).abs() < 1e-10);
        assert!(gx.iter().zip(&x).all(|(g, e)| (g - e).abs() < 1e-10));
    }
}
