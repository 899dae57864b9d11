//! Dense Householder QR with an explicit full Q, sized for working-set
//! matrices of a few dozen rows/columns.

use nalgebra::{DMatrix, DVector};

/// Full QR factorization `a = q * r` with `q` square orthonormal (n x n)
/// and `r` upper trapezoidal (n x m).
pub struct FullQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl FullQr {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let m = a.ncols();
        let mut r = a.clone();
        let mut q = DMatrix::identity(n, n);

        for k in 0..m.min(n.saturating_sub(1)) {
            // Householder vector for column k, rows k..n
            let col_norm: f64 = (k..n).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
            if col_norm < 1e-300 {
                continue;
            }
            let alpha = if r[(k, k)] >= 0.0 { -col_norm } else { col_norm };
            let mut v = DVector::zeros(n - k);
            for i in k..n {
                v[i - k] = r[(i, k)];
            }
            v[0] -= alpha;
            let vtv = v.norm_squared();
            if vtv < 1e-300 {
                continue;
            }
            let beta = 2.0 / vtv;

            // r <- H r on rows k..n
            for c in k..m {
                let mut dot = 0.0;
                for i in k..n {
                    dot += v[i - k] * r[(i, c)];
                }
                let s = beta * dot;
                for i in k..n {
                    r[(i, c)] -= s * v[i - k];
                }
            }
            // exact zeros below the diagonal of column k
            r[(k, k)] = alpha;
            for i in (k + 1)..n {
                r[(i, k)] = 0.0;
            }
            // q <- q H (accumulate from the right)
            for rr in 0..n {
                let mut dot = 0.0;
                for i in k..n {
                    dot += q[(rr, i)] * v[i - k];
                }
                let s = beta * dot;
                for i in k..n {
                    q[(rr, i)] -= s * v[i - k];
                }
            }
        }
        FullQr { q, r }
    }

    /// Numerical rank of the factored matrix from the R diagonal.
    pub fn rank(&self, tol: f64) -> usize {
        let m = self.r.ncols().min(self.r.nrows());
        (0..m).filter(|&k| self.r[(k, k)].abs() > tol).count()
    }

    /// Columns of Q spanning the null space of `a^T` (i.e. the orthogonal
    /// complement of the column space of `a`), assuming full column rank.
    pub fn null_basis(&self, cols_rank: usize) -> DMatrix<f64> {
        let n = self.q.nrows();
        self.q.columns(cols_rank, n - cols_rank).into_owned()
    }

    /// Solve `a x = rhs` for full-column-rank `a` (least squares via QR).
    pub fn solve_full_rank(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let m = self.r.ncols();
        let qt_rhs = self.q.transpose() * rhs;
        let mut x = DVector::zeros(m);
        for k in (0..m).rev() {
            let mut v = qt_rhs[k];
            for c in (k + 1)..m {
                v -= self.r[(k, c)] * x[c];
            }
            let d = self.r[(k, k)];
            if d.abs() < 1e-13 {
                return None;
            }
            x[k] = v / d;
        }
        Some(x)
    }

    /// Minimum-norm solution of `a^T y = rhs` (`a` is n x m, full column
    /// rank): `y = Q1 R^-T rhs`.
    pub fn solve_transposed_min_norm(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let m = self.r.ncols();
        // forward substitution with R^T
        let mut z = DVector::zeros(m);
        for k in 0..m {
            let mut v = rhs[k];
            for c in 0..k {
                v -= self.r[(c, k)] * z[c];
            }
            let d = self.r[(k, k)];
            if d.abs() < 1e-13 {
                return None;
            }
            z[k] = v / d;
        }
        Some(self.q.columns(0, m) * z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn qr_reconstructs_and_q_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, m) in [(6, 3), (10, 10), (8, 1), (5, 4)] {
            let a = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
            let qr = FullQr::new(&a);
            assert_relative_eq!(&qr.q * &qr.r, a, epsilon = 1e-10);
            assert_relative_eq!(&qr.q * qr.q.transpose(), DMatrix::identity(n, n), epsilon = 1e-10);
        }
    }

    #[test]
    fn null_basis_annihilates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DMatrix::from_fn(7, 3, |_, _| rng.gen_range(-1.0..1.0));
        let qr = FullQr::new(&a);
        assert_eq!(qr.rank(1e-10), 3);
        let z = qr.null_basis(3);
        assert_eq!(z.ncols(), 4);
        assert_relative_eq!((a.transpose() * z).amax(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn transposed_min_norm_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(9, 4, |_, _| rng.gen_range(-1.0..1.0));
        let rhs = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
        let qr = FullQr::new(&a);
        let y = qr.solve_transposed_min_norm(&rhs).unwrap();
        assert_relative_eq!(a.transpose() * &y, rhs, epsilon = 1e-10);
        // minimum norm: y lies in the range of a
        let proj = &qr.q.columns(0, 4) * (qr.q.columns(0, 4).transpose() * &y);
        assert_relative_eq!(proj, y, epsilon = 1e-10);
    }

    #[test]
    fn rank_detects_dependence() {
        let mut a = DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        // third column = first + second
        let qr = FullQr::new(&a);
        assert_eq!(qr.rank(1e-10), 2);
        a[(3, 2)] = 0.5;
        let qr = FullQr::new(&a);
        assert_eq!(qr.rank(1e-10), 3);
    }
}
