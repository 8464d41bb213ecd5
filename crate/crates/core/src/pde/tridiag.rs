/// LU factorisation of a tridiagonal matrix (Thomas algorithm without pivoting).
///
/// `sub[0]` and `sup[n - 1]` are ignored.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    sub: Vec<f64>,
    /// Reciprocal pivots.
    inv_piv: Vec<f64>,
    /// `sup[i] / pivot[i]`.
    upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn factor(sub: &[f64], diag: &[f64], sup: &[f64]) -> Result<Self, String> {
        let n = diag.len();
        assert!(sub.len() == n && sup.len() == n);
        let mut inv_piv = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut prev_upper = 0.0;
        for i in 0..n {
            let piv = if i == 0 {
                diag[0]
            } else {
                diag[i] - sub[i] * prev_upper
            };
            let scale = diag[i].abs() + sub[i].abs() + sup[i].abs();
            if !piv.is_finite() || piv.abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
                return Err(format!("singular tridiagonal system (pivot {piv:e} at row {i})"));
            }
            inv_piv[i] = 1.0 / piv;
            upper[i] = sup[i] * inv_piv[i];
            prev_upper = upper[i];
        }
        Ok(Self {
            sub: sub.to_vec(),
            inv_piv,
            upper,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_piv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_piv.is_empty()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(b.len(), n);
        b[0] *= self.inv_piv[0];
        for i in 1..n {
            b[i] = (b[i] - self.sub[i] * b[i - 1]) * self.inv_piv[i];
        }
        for i in (0..n - 1).rev() {
            b[i] -= self.upper[i] * b[i + 1];
        }
    }

    /// Solve along rows for every column `lo..hi` of a row-major block with
    /// row length `stride`; row `r` of the system is row `r` of the block.
    pub fn solve_columns(&self, data: &mut [f64], stride: usize, lo: usize, hi: usize) {
        let n = self.len();
        debug_assert_eq!(data.len(), n * stride);
        for v in &mut data[lo..hi] {
            *v *= self.inv_piv[0];
        }
        for r in 1..n {
            let (prev, cur) = data.split_at_mut(r * stride);
            let prev = &prev[(r - 1) * stride..];
            let (s, p) = (self.sub[r], self.inv_piv[r]);
            for i in lo..hi {
                cur[i] = (cur[i] - s * prev[i]) * p;
            }
        }
        for r in (0..n - 1).rev() {
            let (cur, next) = data.split_at_mut((r + 1) * stride);
            let cur = &mut cur[r * stride..];
            let u = self.upper[r];
            for i in lo..hi {
                cur[i] -= u * next[i];
            }
        }
    }
}
