//! Symmetric banded direct solver.
//!
//! The global stiffness matrix of the hex mesh is symmetric and, with the
//! radial-fastest node numbering, has a modest half-bandwidth. We store the
//! lower band column-major and factor it in place as
//!
//!     K = L D L^T
//!
//! with unit-diagonal L and diagonal D. No pivoting is performed; the
//! factorization reports failure if a diagonal pivot collapses, which in
//! practice means the tangent went indefinite (e.g. past a limit point) and
//! the caller should cut the load step.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BandError {
    #[error("zero or non-finite pivot at column {0}")]
    BadPivot(usize),
    #[error("dimension mismatch: matrix is {n}, rhs is {rhs}")]
    DimensionMismatch { n: usize, rhs: usize },
}

/// Symmetric matrix stored as its lower band.
///
/// Entry (i, j) with j <= i <= j + bw lives at `data[j * (bw + 1) + (i - j)]`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
    factored: bool,
}

impl BandMatrix {
    pub fn new(n: usize, half_bandwidth: usize) -> Self {
        let bw = half_bandwidth.min(n.saturating_sub(1));
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
            factored: false,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.bw
    }

    pub fn reset(&mut self) {
        self.data.fill(0.0);
        self.factored = false;
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw && i < self.n);
        j * (self.bw + 1) + (i - j)
    }

    /// Adds `v` to entry (i, j). Only the lower triangle is stored; the caller
    /// may pass the indices in either order.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(!self.factored, "assembling into a factored matrix");
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Adds `v` to every diagonal entry. Used for damped (pseudo-transient)
    /// corrector iterations near limit points.
    pub fn shift_diagonal(&mut self, v: f64) {
        debug_assert!(!self.factored, "shifting a factored matrix");
        for i in 0..self.n {
            let k = self.idx(i, i);
            self.data[k] += v;
        }
    }

    /// Mean absolute diagonal entry; a natural scale for diagonal shifts.
    pub fn mean_abs_diag(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let sum: f64 = (0..self.n).map(|i| self.data[self.idx(i, i)].abs()).sum();
        sum / self.n as f64
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            return 0.0;
        }
        self.data[self.idx(i, j)]
    }

    /// Overwrites row and column `k` with zeros and puts `diag` on the
    /// diagonal. Used to eliminate Dirichlet dofs after assembly.
    pub fn clear_row_col(&mut self, k: usize, diag: f64) {
        let lo = k.saturating_sub(self.bw);
        let hi = (k + self.bw).min(self.n - 1);
        for i in lo..=hi {
            if i == k {
                continue;
            }
            let (a, b) = if i >= k { (i, k) } else { (k, i) };
            if a - b <= self.bw {
                let idx = self.idx(a, b);
                self.data[idx] = 0.0;
            }
        }
        let idx = self.idx(k, k);
        self.data[idx] = diag;
    }

    /// In-place LDL^T factorization (right-looking).
    pub fn factor(&mut self) -> Result<(), BandError> {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        for j in 0..n {
            let d = self.data[j * w];
            if !d.is_finite() || d.abs() < f64::MIN_POSITIVE {
                return Err(BandError::BadPivot(j));
            }
            let m = bw.min(n - 1 - j);
            // Rank-1 update of the trailing columns touched by column j.
            for k in 1..=m {
                let ljk = self.data[j * w + k]; // entry (j+k, j), still scaled by d
                if ljk == 0.0 {
                    continue;
                }
                let wjk = ljk / d;
                let col = j + k;
                // Rows col..=j+m of column `col`.
                let base = col * w;
                for r in k..=m {
                    self.data[base + (r - k)] -= wjk * self.data[j * w + r];
                }
            }
            // Scale column j to unit-diagonal L.
            for k in 1..=m {
                self.data[j * w + k] /= d;
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves K x = b using the stored factorization; `b` is overwritten.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), BandError> {
        assert!(self.factored, "solve before factor");
        if b.len() != self.n {
            return Err(BandError::DimensionMismatch {
                n: self.n,
                rhs: b.len(),
            });
        }
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        // Forward: L y = b.
        for j in 0..n {
            let bj = b[j];
            if bj == 0.0 {
                continue;
            }
            let m = bw.min(n - 1 - j);
            for k in 1..=m {
                b[j + k] -= self.data[j * w + k] * bj;
            }
        }
        // Diagonal: D z = y.
        for j in 0..n {
            b[j] /= self.data[j * w];
        }
        // Backward: L^T x = z.
        for j in (0..n).rev() {
            let m = bw.min(n - 1 - j);
            let mut s = b[j];
            for k in 1..=m {
                s -= self.data[j * w + k] * b[j + k];
            }
            b[j] = s;
        }
        Ok(())
    }

    /// y = K x for an unfactored matrix. Used for residual checks in tests.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert!(!self.factored, "matrix already factored");
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let m = self.bw.min(self.n - 1 - j);
            y[j] += self.data[j * (self.bw + 1)] * x[j];
            for k in 1..=m {
                let v = self.data[j * (self.bw + 1) + k];
                y[j + k] += v * x[j];
                y[j] += v * x[j + k];
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_spd_band(n: usize, bw: usize, rng: &mut impl Rng) -> BandMatrix {
        let mut m = BandMatrix::new(n, bw);
        for j in 0..n {
            for i in j..=(j + bw).min(n - 1) {
                let v: f64 = rng.gen_range(-1.0..1.0);
                m.add(i, j, v);
            }
            // Diagonal dominance makes it SPD without pivoting worries.
            m.add(j, j, 2.0 * (bw as f64 + 1.0));
        }
        m
    }

    #[test]
    fn solves_small_dense_case() {
        // 3x3 full band, known solution.
        let mut m = BandMatrix::new(3, 2);
        let a = [[4.0, 1.0, 0.5], [1.0, 3.0, 1.0], [0.5, 1.0, 5.0]];
        for i in 0..3 {
            for j in 0..=i {
                m.add(i, j, a[i][j]);
            }
        }
        let x_true = [1.0, -2.0, 3.0];
        let mut b = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i] += a[i][j] * x_true[j];
            }
        }
        m.factor().unwrap();
        m.solve_in_place(&mut b).unwrap();
        for i in 0..3 {
            assert_relative_eq!(b[i], x_true[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn random_spd_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for &(n, bw) in &[(20usize, 3usize), (97, 11), (240, 29)] {
            let m = random_spd_band(n, bw, &mut rng);
            let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut b = m.mul_vec(&x_true);
            let mut f = m.clone();
            f.factor().unwrap();
            f.solve_in_place(&mut b).unwrap();
            for i in 0..n {
                assert_relative_eq!(b[i], x_true[i], max_relative = 1e-9, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn indefinite_matrix_with_zero_pivot_is_rejected() {
        let mut m = BandMatrix::new(2, 1);
        m.add(0, 0, 0.0);
        m.add(1, 0, 1.0);
        m.add(1, 1, 1.0);
        assert!(matches!(m.factor(), Err(BandError::BadPivot(0))));
    }

    #[test]
    fn negative_pivots_are_allowed() {
        // LDL^T handles symmetric indefinite matrices as long as no pivot
        // vanishes; Newton tangents can be indefinite near limit points.
        let mut m = BandMatrix::new(2, 1);
        m.add(0, 0, 1.0);
        m.add(1, 0, 2.0);
        m.add(1, 1, 1.0); // Schur complement is -3.
        let mut b = vec![3.0, 3.0];
        m.factor().unwrap();
        m.solve_in_place(&mut b).unwrap();
        assert_relative_eq!(b[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(b[1], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn dirichlet_row_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = random_spd_band(30, 5, &mut rng);
        m.clear_row_col(12, 1.0);
        let mut e = vec![0.0; 30];
        e[12] = 1.0;
        let y = m.mul_vec(&e);
        for i in 0..30 {
            let expect = if i == 12 { 1.0 } else { 0.0 };
            assert_relative_eq!(y[i], expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn rhs_length_mismatch() {
        let mut m = BandMatrix::new(4, 1);
        for j in 0..4 {
            m.add(j, j, 1.0);
        }
        m.factor().unwrap();
        let mut b = vec![1.0; 3];
        assert!(matches!(
            m.solve_in_place(&mut b),
            Err(BandError::DimensionMismatch { .. })
        ));
    }
}
