//! Small dense symmetric-matrix helpers for design matrices.
//!
//! Feature dimensions here are tiny (tens), so everything is a plain
//! row-major `Vec<f64>` with Cholesky-based inversion and rank-one updates.

/// Dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// `c * I`.
    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        let mut data = vec![0.0; dim * dim];
        for j in 0..dim {
            data[j * dim + j] = c;
        }
        SymMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.dim + c]
    }

    /// `out = M v`.
    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim);
        for r in 0..self.dim {
            let row = &self.data[r * self.dim..(r + 1) * self.dim];
            out[r] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// `v^T M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.dim {
            let row = &self.data[r * self.dim..(r + 1) * self.dim];
            let mv: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            acc += v[r] * mv;
        }
        acc
    }

    /// `M += v v^T`.
    pub fn add_outer(&mut self, v: &[f64]) {
        for r in 0..self.dim {
            for c in 0..self.dim {
                self.data[r * self.dim + c] += v[r] * v[c];
            }
        }
    }

    /// Sherman-Morrison: treating `self` as `A^{-1}`, replace it with
    /// `(A + v v^T)^{-1} = A^{-1} - (A^{-1} v)(A^{-1} v)^T / (1 + v^T A^{-1} v)`.
    pub fn sherman_morrison_update(&mut self, v: &[f64]) {
        let mut w = vec![0.0; self.dim];
        self.matvec(v, &mut w);
        let denom = 1.0 + v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let scale = 1.0 / denom;
        for r in 0..self.dim {
            for c in 0..self.dim {
                self.data[r * self.dim + c] -= scale * w[r] * w[c];
            }
        }
    }

    /// Inverse via Cholesky factorization. Returns `None` when the matrix is
    /// not (numerically) positive definite.
    pub fn cholesky_inverse(&self) -> Option<SymMatrix> {
        let n = self.dim;
        // Lower-triangular factor L with A = L L^T.
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = self.get(j, j);
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if diag <= 0.0 || !diag.is_finite() {
                return None;
            }
            let dj = diag.sqrt();
            l[j * n + j] = dj;
            for r in (j + 1)..n {
                let mut v = self.get(r, j);
                for k in 0..j {
                    v -= l[r * n + k] * l[j * n + k];
                }
                l[r * n + j] = v / dj;
            }
        }
        // Invert L in place (forward substitution on columns of I).
        let mut linv = vec![0.0; n * n];
        for c in 0..n {
            linv[c * n + c] = 1.0 / l[c * n + c];
            for r in (c + 1)..n {
                let mut v = 0.0;
                for k in c..r {
                    v -= l[r * n + k] * linv[k * n + c];
                }
                linv[r * n + c] = v / l[r * n + r];
            }
        }
        // A^{-1} = L^{-T} L^{-1}.
        let mut out = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..=r {
                let mut v = 0.0;
                for k in r.max(c)..n {
                    v += linv[k * n + r] * linv[k * n + c];
                }
                out[r * n + c] = v;
                out[c * n + r] = v;
            }
        }
        Some(SymMatrix { dim: n, data: out })
    }

    /// Entrywise max absolute difference.
    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `max |self * other - I|`, used to verify a maintained inverse.
    pub fn product_identity_residual(&self, other: &SymMatrix) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in 0..n {
                let mut v = 0.0;
                for k in 0..n {
                    v += self.get(r, k) * other.get(k, c);
                }
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-3 {
                return v.iter().map(|x| x / norm).collect();
            }
        }
    }

    #[test]
    fn cholesky_inverse_matches_hand_2x2() {
        // A = [[2, 1], [1, 2]], A^{-1} = 1/3 [[2, -1], [-1, 2]].
        let mut a = SymMatrix::scaled_identity(2, 2.0);
        a.data[1] = 1.0;
        a.data[2] = 1.0;
        let inv = a.cholesky_inverse().unwrap();
        assert!((inv.get(0, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((inv.get(0, 1) + 1.0 / 3.0).abs() < 1e-12);
        assert!((inv.get(1, 1) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sherman_morrison_tracks_fresh_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 5;
        let mut a = SymMatrix::scaled_identity(d, 1.0);
        let mut inv = SymMatrix::scaled_identity(d, 1.0);
        for _ in 0..10 {
            let v = random_unit(&mut rng, d);
            a.add_outer(&v);
            inv.sherman_morrison_update(&v);
        }
        let fresh = a.cholesky_inverse().unwrap();
        assert!(inv.max_abs_diff(&fresh) < 1e-8);
        assert!(a.product_identity_residual(&inv) < 1e-8);
    }

    #[test]
    fn non_spd_matrix_has_no_cholesky() {
        let m = SymMatrix::scaled_identity(3, -1.0);
        assert!(m.cholesky_inverse().is_none());
    }
}
