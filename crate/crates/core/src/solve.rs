//! Sparse storage and the direct linear solver.
//!
//! Systems assembled on structured meshes have small bandwidth under
//! lexicographic ordering, so the default factorization is a banded LU with
//! partial pivoting (LAPACK `gbtrf`-style storage). Dense systems are the
//! full-bandwidth special case.

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from triplets, summing duplicates. Triplets may arrive in any
    /// order; rows and columns are sorted deterministically.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> CsrMatrix {
        let mut row_counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            row_counts[r + 1] += 1;
        }
        for i in 0..n {
            row_counts[i + 1] += row_counts[i];
        }
        let mut entries: Vec<(usize, f64)> = vec![(0, 0.0); triplets.len()];
        let mut fill = row_counts.clone();
        for &(r, c, v) in triplets {
            entries[fill[r]] = (c, v);
            fill[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..n {
            let slice = &mut entries[row_counts[r]..row_counts[r + 1]];
            slice.sort_by_key(|&(c, _)| c);
            let mut last_col = usize::MAX;
            for &(c, v) in slice.iter() {
                if c == last_col {
                    let k = values.len() - 1;
                    values[k] += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last_col = c;
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn multiply(&self, x: &[f64], out: &mut [f64]) {
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            out[r] = acc;
        }
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for r in 0..self.n {
            let (cols, _) = self.row(r);
            for &c in cols {
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }

    /// Rows without any structural entry (guards against dangling dofs).
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|&r| self.row_ptr[r] == self.row_ptr[r + 1])
            .collect()
    }
}

/// Banded LU factorization with partial pivoting.
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// Band storage with `2*kl + ku + 1` rows (extra `kl` rows for fill-in),
    /// column-major: `ab[col * ldab + (kl + ku + r - col)] = a[r][col]`.
    ab: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factor(matrix: &CsrMatrix) -> Result<BandedLu> {
        let n = matrix.n;
        let (kl, ku_orig) = matrix.bandwidths();
        // Partial pivoting widens the upper band by kl.
        let ku = ku_orig + kl;
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![0.0; ldab * n];
        let offset = kl + ku;
        for r in 0..n {
            let (cols, vals) = matrix.row(r);
            for (c, v) in cols.iter().zip(vals) {
                ab[*c * ldab + (offset + r - *c)] = *v;
            }
        }

        let mut pivots = vec![0usize; n];
        for j in 0..n {
            // Pivot search in column j among rows j..=j+kl.
            let last = (j + kl).min(n - 1);
            let mut piv_row = j;
            let mut piv_val = ab[j * ldab + offset].abs();
            for r in (j + 1)..=last {
                let v = ab[j * ldab + (offset + r - j)].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = r;
                }
            }
            if piv_val == 0.0 {
                return Err(Error::Solver {
                    msg: format!("singular matrix at column {j}"),
                    residual: f64::NAN,
                });
            }
            pivots[j] = piv_row;
            let col_hi = (j + ku).min(n - 1);
            if piv_row != j {
                for c in j..=col_hi {
                    let idx_a = c * ldab + (offset + j) - c;
                    let idx_b = c * ldab + (offset + piv_row) - c;
                    ab.swap(idx_a, idx_b);
                }
            }
            let diag = ab[j * ldab + offset];
            for r in (j + 1)..=last {
                ab[j * ldab + (offset + r - j)] /= diag;
            }
            for c in (j + 1)..=col_hi {
                let a_jc = ab[c * ldab + (offset + j) - c];
                if a_jc == 0.0 {
                    continue;
                }
                for r in (j + 1)..=last {
                    let m = ab[j * ldab + (offset + r - j)];
                    ab[c * ldab + (offset + r) - c] -= m * a_jc;
                }
            }
        }
        Ok(BandedLu {
            n,
            kl,
            ku,
            ab,
            pivots,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let ldab = self.ab.len() / n;
        let offset = self.kl + self.ku;
        let mut x = rhs.to_vec();
        // Forward: apply permutations and L.
        for j in 0..n {
            let piv = self.pivots[j];
            if piv != j {
                x.swap(j, piv);
            }
            let last = (j + self.kl).min(n - 1);
            let xj = x[j];
            if xj != 0.0 {
                for r in (j + 1)..=last {
                    x[r] -= self.ab[j * ldab + (offset + r - j)] * xj;
                }
            }
        }
        // Backward: solve U.
        for j in (0..n).rev() {
            let col_hi = (j + self.ku).min(n - 1);
            let mut acc = x[j];
            for c in (j + 1)..=col_hi {
                acc -= self.ab[c * ldab + (offset + j) - c] * x[c];
            }
            x[j] = acc / self.ab[j * ldab + offset];
        }
        x
    }
}

/// Relative residual `||K x - f||_inf / max(1, ||f||_inf)`.
pub fn relative_residual(matrix: &CsrMatrix, x: &[f64], rhs: &[f64]) -> f64 {
    let mut prod = vec![0.0; matrix.n];
    matrix.multiply(x, &mut prod);
    let num = prod
        .iter()
        .zip(rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let den = rhs.iter().map(|v| v.abs()).fold(1.0f64, f64::max);
    num / den
}

/// Direct solve with a residual check at `tol`.
pub fn solve_checked(matrix: &CsrMatrix, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    let empty = matrix.empty_rows();
    if !empty.is_empty() {
        return Err(Error::Solver {
            msg: format!("singular system: empty rows {:?}", &empty[..empty.len().min(8)]),
            residual: f64::NAN,
        });
    }
    let lu = BandedLu::factor(matrix)?;
    let x = lu.solve(rhs);
    let residual = relative_residual(matrix, &x, rhs);
    if !residual.is_finite() || residual > tol {
        return Err(Error::Solver {
            msg: "direct solve did not meet residual tolerance".into(),
            residual,
        });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_returns_rhs() {
        let triplets: Vec<(usize, usize, f64)> = (0..5).map(|i| (i, i, 1.0)).collect();
        let m = CsrMatrix::from_triplets(5, &triplets);
        let rhs = vec![1.0, -2.0, 3.0, 0.5, 0.0];
        let x = solve_checked(&m, &rhs, 1e-12).unwrap();
        assert_eq!(x, rhs);
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let m = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 1.0)]);
        assert_eq!(m.values, vec![3.0, 1.0]);
    }

    #[test]
    fn random_spd_system_meets_residual() {
        let n = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut a = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = rng.gen_range(-1.0..1.0);
            }
        }
        // SPD via B^T B + n I.
        let mut spd = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in 0..n {
                spd[i][j] = (0..n).map(|k| a[k][i] * a[k][j]).sum::<f64>();
            }
            spd[i][i] += n as f64;
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            rhs[i] = (0..n).map(|j| spd[i][j] * x_true[j]).sum();
        }
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                triplets.push((i, j, spd[i][j]));
            }
        }
        let m = CsrMatrix::from_triplets(n, &triplets);
        let x = solve_checked(&m, &rhs, 1e-8).unwrap();
        let err = x
            .iter()
            .zip(&x_true)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-9, "max error {err}");
    }

    #[test]
    fn nonsymmetric_banded_system_with_pivoting() {
        // Small diagonal entries force row interchanges.
        let n = 40;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut triplets = Vec::new();
        let mut dense = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for dj in -3i64..=3 {
                let j = i as i64 + dj;
                if j < 0 || j >= n as i64 {
                    continue;
                }
                let v = if dj == 0 {
                    rng.gen_range(0.001..0.01)
                } else {
                    rng.gen_range(-1.0..1.0)
                };
                triplets.push((i, j as usize, v));
                dense[i][j as usize] = v;
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| ((i * i) as f64 * 0.01).cos()).collect();
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            rhs[i] = (0..n).map(|j| dense[i][j] * x_true[j]).sum();
        }
        let m = CsrMatrix::from_triplets(n, &triplets);
        let x = solve_checked(&m, &rhs, 1e-8).unwrap();
        let err = x
            .iter()
            .zip(&x_true)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-7, "max error {err}");
    }

    #[test]
    fn singular_matrix_reported() {
        let m = CsrMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 0.0)]);
        assert!(matches!(
            solve_checked(&m, &[1.0, 1.0, 1.0], 1e-8),
            Err(Error::Solver { .. })
        ));
        let empty = CsrMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(
            solve_checked(&empty, &[1.0, 1.0, 1.0], 1e-8),
            Err(Error::Solver { .. })
        ));
    }
}
