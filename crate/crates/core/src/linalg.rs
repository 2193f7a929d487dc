//! Dense helpers shared by the solvers: an in-place Cholesky with a relative
//! pivot threshold and the error metrics used by the checks.

use nalgebra::DMatrix;

/// Pivot threshold relative to the largest diagonal entry of the block.
pub const PIVOT_TOL: f64 = 1e-10;

/// Failed pivot: position inside the block and the offending value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PivotFailure {
    pub index: usize,
    pub pivot: f64,
}

/// Factors the symmetric block `a[start..start+len, start..start+len]` in
/// place into its lower Cholesky factor. Only the lower triangle is read.
pub fn cholesky_block(
    a: &mut DMatrix<f64>,
    start: usize,
    len: usize,
    rel_tol: f64,
) -> Result<(), PivotFailure> {
    let max_diag = (start..start + len).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let threshold = rel_tol * max_diag;
    for j in start..start + len {
        let mut d = a[(j, j)];
        for k in start..j {
            d -= a[(j, k)] * a[(j, k)];
        }
        if !(d > threshold) || max_diag == 0.0 {
            return Err(PivotFailure { index: j - start, pivot: d });
        }
        let d = d.sqrt();
        a[(j, j)] = d;
        for i in j + 1..start + len {
            let mut s = a[(i, j)];
            for k in start..j {
                s -= a[(i, k)] * a[(j, k)];
            }
            a[(i, j)] = s / d;
        }
    }
    Ok(())
}

/// Solves `A x = b` in place using a factor produced by [`cholesky_block`].
/// `b` is indexed with the same global rows as the block.
pub fn cholesky_solve_block(l: &DMatrix<f64>, start: usize, len: usize, b: &mut [f64]) {
    let end = start + len;
    for i in start..end {
        let mut s = b[i];
        for k in start..i {
            s -= l[(i, k)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
    for i in (start..end).rev() {
        let mut s = b[i];
        for k in i + 1..end {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Owned Cholesky factor of a full matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    pub fn new(a: &DMatrix<f64>, rel_tol: f64) -> Result<Self, PivotFailure> {
        let mut l = a.clone();
        let n = l.nrows();
        cholesky_block(&mut l, 0, n, rel_tol)?;
        for j in 0..n {
            for i in 0..j {
                l[(i, j)] = 0.0;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        cholesky_solve_block(&self.l, 0, self.dim(), b);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// `max|a - b| / max(1, max|b|)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(1.0, f64::max);
    diff / scale
}

/// Matrix version of [`rel_err`].
pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    rel_err(a.as_slice(), b.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factors_and_solves_spd_system() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0]);
        let c = Cholesky::new(&a, PIVOT_TOL).unwrap();
        let l = c.factor();
        assert!((l * l.transpose() - &a).amax() < 1e-14);
        let x = c.solve(&[1.0, 2.0, 3.0]);
        let r = &a * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(r.amax() < 1e-14);
    }

    #[test]
    fn duplicated_row_is_reported_singular() {
        // Gram matrix of the row (1, 2, 3) stacked twice.
        let a = DMatrix::from_element(2, 2, 14.0);
        let err = Cholesky::new(&a, PIVOT_TOL).unwrap_err();
        assert_eq!(err.index, 1);
    }

    #[test]
    fn block_factor_leaves_other_entries_alone() {
        let mut a = DMatrix::from_element(4, 4, 7.0);
        a[(1, 1)] = 2.0;
        a[(2, 2)] = 3.0;
        a[(2, 1)] = 0.5;
        cholesky_block(&mut a, 1, 2, PIVOT_TOL).unwrap();
        assert_eq!(a[(0, 0)], 7.0);
        assert_eq!(a[(3, 3)], 7.0);
        let mut b = [9.0, 1.0, 1.0, 9.0];
        cholesky_solve_block(&a, 1, 2, &mut b);
        // [[2, .5], [.5, 3]] x = [1, 1]
        let det = 2.0 * 3.0 - 0.25;
        assert!((b[1] - (3.0 - 0.5) / det).abs() < 1e-15);
        assert!((b[2] - (2.0 - 0.5) / det).abs() < 1e-15);
        assert_eq!(b[0], 9.0);
    }

    #[test]
    fn relative_error_floors_scale_at_one() {
        assert_eq!(rel_err(&[1e-9], &[0.0]), 1e-9);
        assert_eq!(rel_err(&[110.0], &[100.0]), 0.1);
    }
}
