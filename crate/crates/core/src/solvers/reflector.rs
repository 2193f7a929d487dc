use arrayvec::ArrayVec;
use nalgebra::DMatrix;

/// Householder reflector `U = I - 2wwᵀ/(wᵀw)` that maps a rank-one update
/// `ks ksᵀ/D` onto a single coordinate (the pivot) with value `sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct Reflector {
    pub w: ArrayVec<f64, 6>,
    pub pivot: usize,
    pub sigma: f64,
    wtw: f64,
}

/// Builds the reflector for `ks` (at most 6 entries, since no more rows can
/// act independently on one link) and joint inertia `d > 0`.
///
/// Returns `None` when `‖ks‖ <= tol`; the caller must then skip the
/// elimination. The pivot is the first nonzero entry, which amounts to
/// permuting rows when leading entries vanish.
pub fn rank1_reflector(ks: &[f64], d: f64, tol: f64) -> Option<Reflector> {
    assert!(ks.len() <= 6, "at most 6 rows can act on a link");
    debug_assert!(d > 0.0);
    let norm = ks.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > tol) {
        return None;
    }
    let pivot = ks.iter().position(|&x| x != 0.0)?;
    let mut w: ArrayVec<f64, 6> = ks.iter().copied().collect();
    w[pivot] += norm.copysign(ks[pivot]);
    let wtw = w.iter().map(|x| x * x).sum();
    Some(Reflector { w, pivot, sigma: norm * norm / d, wtw })
}

impl Reflector {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// `x ← U x`.
    pub fn apply(&self, x: &mut [f64]) {
        let beta = 2.0 * self.w.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() / self.wtw;
        for (xi, wi) in x.iter_mut().zip(&self.w) {
            *xi -= beta * wi;
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let p = self.dim();
        DMatrix::from_fn(p, p, |i, j| f64::from(u8::from(i == j)) - 2.0 * self.w[i] * self.w[j] / self.wtw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_axis() {
        let r = rank1_reflector(&[1.0, 0.0, 0.0], 1.0, 1e-12).unwrap();
        assert_eq!(r.sigma, 1.0);
        let mut x = [1.0, 0.0, 0.0];
        r.apply(&mut x);
        assert_eq!(x, [-1.0, 0.0, 0.0]);
        let u = r.matrix();
        assert!((&u * u.transpose() - DMatrix::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn three_four() {
        let r = rank1_reflector(&[3.0, 4.0], 2.0, 1e-12).unwrap();
        assert_eq!(r.sigma, 12.5);
        let mut x = [3.0, 4.0];
        r.apply(&mut x);
        assert!((x[0].abs() - 5.0).abs() < 1e-14 && x[1].abs() < 1e-14, "{x:?}");
    }

    #[test]
    fn zero_leading_entry_pivots() {
        let r = rank1_reflector(&[0.0, -2.0, 1.0], 1.0, 1e-12).unwrap();
        assert_eq!(r.pivot, 1);
        let mut x = [0.0, -2.0, 1.0];
        r.apply(&mut x);
        assert!(x[0].abs() < 1e-15 && x[2].abs() < 1e-15);
        assert!((x[1] - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn below_tolerance_is_signalled() {
        assert!(rank1_reflector(&[1e-13, 0.0], 1.0, 1e-12).is_none());
        assert!(rank1_reflector(&[0.0, 0.0], 1.0, 0.0).is_none());
    }

    #[test]
    fn reconstructs_rank_one_update() {
        let ks = [0.3, -1.2, 0.7, 2.0, -0.1];
        let d = 1.7;
        let r = rank1_reflector(&ks, d, 1e-12).unwrap();
        let u = r.matrix();
        let mut sig = DMatrix::zeros(5, 5);
        sig[(r.pivot, r.pivot)] = r.sigma;
        let lhs = &u * sig * u.transpose();
        let k = nalgebra::DVector::from_row_slice(&ks);
        let rhs = &k * k.transpose() / d;
        assert!((lhs - rhs).amax() < 1e-12);
    }
}
