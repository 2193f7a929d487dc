//! Spatial (6D) vector algebra.
//!
//! Every 6-vector is stored angular-on-top: motion vectors are `[ω; v]` and
//! force vectors are `[n; f]`. A [`SpatialTransform`] `X` with rotation `E`
//! and translation `r` maps coordinates of frame A into frame B, where `r` is
//! the origin of B expressed in A and `E` rotates A coordinates into B
//! coordinates. As a 6x6 motion transform it reads
//!
//! ```text
//! X = [  E      0 ]
//!     [ -E r×   E ]
//! ```
//!
//! Forces transform with `X* = X⁻ᵀ`, so a force expressed in B is carried back
//! to A with `Xᵀ`. The hot loops in the solvers use the raw [`Vec6`]/[`Mat6`]
//! helpers; the newtypes are the public vocabulary.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix6, Rotation3, Unit, Vector3, Vector6};

pub type Vec6 = Vector6<f64>;
pub type Mat6 = Matrix6<f64>;

/// Cross-product matrix `[a]×` such that `[a]× b = a × b`.
#[inline]
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

#[inline]
fn upper(v: &Vec6) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

#[inline]
fn lower(v: &Vec6) -> Vector3<f64> {
    Vector3::new(v[3], v[4], v[5])
}

#[inline]
fn stack(a: &Vector3<f64>, b: &Vector3<f64>) -> Vec6 {
    Vec6::new(a.x, a.y, a.z, b.x, b.y, b.z)
}

/// Motion cross product `v × m` on raw 6-vectors.
#[inline]
pub fn cross_motion_vec(v: &Vec6, m: &Vec6) -> Vec6 {
    let (w, vl) = (upper(v), lower(v));
    let (mw, ml) = (upper(m), lower(m));
    stack(&w.cross(&mw), &(w.cross(&ml) + vl.cross(&mw)))
}

/// Force cross product `v ×* f` on raw 6-vectors.
#[inline]
pub fn cross_force_vec(v: &Vec6, f: &Vec6) -> Vec6 {
    let (w, vl) = (upper(v), lower(v));
    let (n, fl) = (upper(f), lower(f));
    stack(&(w.cross(&n) + vl.cross(&fl)), &w.cross(&fl))
}

/// 6D motion vector (velocity or acceleration), angular part first.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpatialMotion {
    pub angular: Vector3<f64>,
    pub linear: Vector3<f64>,
}

/// 6D force vector (wrench), moment first.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpatialForce {
    pub moment: Vector3<f64>,
    pub force: Vector3<f64>,
}

impl SpatialMotion {
    pub fn new(angular: Vector3<f64>, linear: Vector3<f64>) -> Self {
        Self { angular, linear }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vec6(v: &Vec6) -> Self {
        Self::new(upper(v), lower(v))
    }

    pub fn to_vec6(&self) -> Vec6 {
        stack(&self.angular, &self.linear)
    }

    /// Power pairing with a force.
    pub fn dot(&self, f: &SpatialForce) -> f64 {
        self.angular.dot(&f.moment) + self.linear.dot(&f.force)
    }

    /// `self × m`.
    pub fn cross_motion(&self, m: &SpatialMotion) -> SpatialMotion {
        Self::from_vec6(&cross_motion_vec(&self.to_vec6(), &m.to_vec6()))
    }

    /// `self ×* f`.
    pub fn cross_force(&self, f: &SpatialForce) -> SpatialForce {
        SpatialForce::from_vec6(&cross_force_vec(&self.to_vec6(), &f.to_vec6()))
    }

    pub fn norm(&self) -> f64 {
        self.to_vec6().norm()
    }
}

impl SpatialForce {
    pub fn new(moment: Vector3<f64>, force: Vector3<f64>) -> Self {
        Self { moment, force }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vec6(v: &Vec6) -> Self {
        Self::new(upper(v), lower(v))
    }

    pub fn to_vec6(&self) -> Vec6 {
        stack(&self.moment, &self.force)
    }

    pub fn norm(&self) -> f64 {
        self.to_vec6().norm()
    }
}

/// Free-function form of [`SpatialMotion::cross_motion`].
pub fn cross_motion(v: &SpatialMotion, m: &SpatialMotion) -> SpatialMotion {
    v.cross_motion(m)
}

/// Free-function form of [`SpatialMotion::cross_force`].
pub fn cross_force(v: &SpatialMotion, f: &SpatialForce) -> SpatialForce {
    v.cross_force(f)
}

macro_rules! impl_vector_ops {
    ($t:ident, $a:ident, $b:ident) => {
        impl Add for $t {
            type Output = $t;
            fn add(self, o: $t) -> $t {
                $t::new(self.$a + o.$a, self.$b + o.$b)
            }
        }
        impl AddAssign for $t {
            fn add_assign(&mut self, o: $t) {
                self.$a += o.$a;
                self.$b += o.$b;
            }
        }
        impl Sub for $t {
            type Output = $t;
            fn sub(self, o: $t) -> $t {
                $t::new(self.$a - o.$a, self.$b - o.$b)
            }
        }
        impl Neg for $t {
            type Output = $t;
            fn neg(self) -> $t {
                $t::new(-self.$a, -self.$b)
            }
        }
        impl Mul<f64> for $t {
            type Output = $t;
            fn mul(self, s: f64) -> $t {
                $t::new(self.$a * s, self.$b * s)
            }
        }
    };
}

impl_vector_ops!(SpatialMotion, angular, linear);
impl_vector_ops!(SpatialForce, moment, force);

/// Plücker coordinate transform between two frames (see module docs).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for SpatialTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SpatialTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    /// Pure translation: the new frame's origin sits at `r` in the old one.
    pub fn from_translation(r: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), r)
    }

    /// Coordinate transform into a frame rotated by `angle` about `axis`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self::new(rot.matrix().transpose(), Vector3::zeros())
    }

    /// Frame placed at `origin` with axes `frame_rotation` (columns are the
    /// new axes in old coordinates), as in a URDF `<origin>`.
    pub fn from_pose(frame_rotation: &Matrix3<f64>, origin: Vector3<f64>) -> Self {
        Self::new(frame_rotation.transpose(), origin)
    }

    /// Orientation of the target frame's axes in source coordinates.
    pub fn frame_rotation(&self) -> Matrix3<f64> {
        self.rotation.transpose()
    }

    pub fn inverse(&self) -> Self {
        Self::new(self.rotation.transpose(), -(self.rotation * self.translation))
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &SpatialTransform) -> Self {
        Self::new(
            self.rotation * first.rotation,
            first.translation + first.rotation.transpose() * self.translation,
        )
    }

    /// 6x6 motion transform matrix.
    pub fn matrix(&self) -> Mat6 {
        let mut x = Mat6::zeros();
        let e = self.rotation;
        let erx = -e * skew(&self.translation);
        x.fixed_view_mut::<3, 3>(0, 0).copy_from(&e);
        x.fixed_view_mut::<3, 3>(3, 3).copy_from(&e);
        x.fixed_view_mut::<3, 3>(3, 0).copy_from(&erx);
        x
    }

    /// 6x6 force transform matrix `X* = X⁻ᵀ`.
    pub fn force_matrix(&self) -> Mat6 {
        let mut x = Mat6::zeros();
        let e = self.rotation;
        let erx = -e * skew(&self.translation);
        x.fixed_view_mut::<3, 3>(0, 0).copy_from(&e);
        x.fixed_view_mut::<3, 3>(3, 3).copy_from(&e);
        x.fixed_view_mut::<3, 3>(0, 3).copy_from(&erx);
        x
    }

    #[inline]
    pub fn motion_vec(&self, v: &Vec6) -> Vec6 {
        let w = upper(v);
        let lin = lower(v) - self.translation.cross(&w);
        stack(&(self.rotation * w), &(self.rotation * lin))
    }

    #[inline]
    pub fn force_vec(&self, f: &Vec6) -> Vec6 {
        let fl = lower(f);
        let n = upper(f) - self.translation.cross(&fl);
        stack(&(self.rotation * n), &(self.rotation * fl))
    }

    /// `X⁻¹ v` for a motion vector.
    #[inline]
    pub fn inv_motion_vec(&self, v: &Vec6) -> Vec6 {
        let w = self.rotation.tr_mul(&upper(v));
        let lin = self.rotation.tr_mul(&lower(v)) + self.translation.cross(&w);
        stack(&w, &lin)
    }

    /// `Xᵀ f`: a force in the target frame carried back to the source frame.
    #[inline]
    pub fn inv_force_vec(&self, f: &Vec6) -> Vec6 {
        let fl = self.rotation.tr_mul(&lower(f));
        let n = self.rotation.tr_mul(&upper(f)) + self.translation.cross(&fl);
        stack(&n, &fl)
    }

    /// `Xᵀ I X`: a 6x6 inertia-like matrix in the target frame carried back
    /// to the source frame.
    #[inline]
    pub fn inv_congruence(&self, inertia: &Mat6) -> Mat6 {
        let x = self.matrix();
        x.transpose() * inertia * x
    }

    pub fn apply_motion(&self, v: &SpatialMotion) -> SpatialMotion {
        SpatialMotion::from_vec6(&self.motion_vec(&v.to_vec6()))
    }

    pub fn apply_force(&self, f: &SpatialForce) -> SpatialForce {
        SpatialForce::from_vec6(&self.force_vec(&f.to_vec6()))
    }

    /// Inertia expressed in the target frame, `X* H X⁻¹`.
    pub fn apply_inertia(&self, h: &SpatialInertia) -> SpatialInertia {
        let xi = self.inverse().matrix();
        SpatialInertia::from_matrix(&(xi.transpose() * h.matrix() * xi))
    }
}

impl Mul for SpatialTransform {
    type Output = SpatialTransform;
    fn mul(self, first: SpatialTransform) -> SpatialTransform {
        self.compose(&first)
    }
}

/// Rigid-body inertia in compact form about the frame origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialInertia {
    pub mass: f64,
    /// `m c`, with `c` the centre of mass.
    pub first_moment: Vector3<f64>,
    /// Rotational inertia about the frame origin.
    pub rotational: Matrix3<f64>,
}

impl SpatialInertia {
    pub fn new(mass: f64, first_moment: Vector3<f64>, rotational: Matrix3<f64>) -> Self {
        Self { mass, first_moment, rotational }
    }

    /// From mass, centre of mass and the rotational inertia about the COM.
    pub fn from_com(mass: f64, com: Vector3<f64>, inertia_com: Matrix3<f64>) -> Self {
        let cx = skew(&com);
        Self::new(mass, com * mass, inertia_com + cx * cx.transpose() * mass)
    }

    pub fn point_mass(mass: f64, at: Vector3<f64>) -> Self {
        Self::from_com(mass, at, Matrix3::zeros())
    }

    pub fn com(&self) -> Vector3<f64> {
        self.first_moment / self.mass
    }

    pub fn matrix(&self) -> Mat6 {
        let mut h = Mat6::zeros();
        let hx = skew(&self.first_moment);
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotational);
        h.fixed_view_mut::<3, 3>(0, 3).copy_from(&hx);
        h.fixed_view_mut::<3, 3>(3, 0).copy_from(&hx.transpose());
        h.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * self.mass));
        h
    }

    /// Reads back the compact form from a 6x6 rigid-body inertia matrix.
    pub fn from_matrix(m: &Mat6) -> Self {
        let hx = m.fixed_view::<3, 3>(0, 3);
        let first_moment = Vector3::new(hx[(2, 1)], hx[(0, 2)], hx[(1, 0)]);
        let rot = m.fixed_view::<3, 3>(0, 0).into_owned();
        Self::new(m[(3, 3)], first_moment, (rot + rot.transpose()) * 0.5)
    }

    /// `H v`.
    pub fn mul_motion(&self, v: &SpatialMotion) -> SpatialForce {
        let n = self.rotational * v.angular + self.first_moment.cross(&v.linear);
        let f = v.linear * self.mass - self.first_moment.cross(&v.angular);
        SpatialForce::new(n, f)
    }

    /// Velocity-product (bias) force `v ×* H v`.
    pub fn bias_force(&self, v: &SpatialMotion) -> SpatialForce {
        v.cross_force(&self.mul_motion(v))
    }

    pub fn kinetic_energy(&self, v: &SpatialMotion) -> f64 {
        0.5 * v.dot(&self.mul_motion(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rand_vec3(rng: &mut StdRng) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
    }

    fn rand_transform(rng: &mut StdRng) -> SpatialTransform {
        let axis = rand_vec3(rng) + Vector3::new(0.0, 0.0, 1e-3);
        let rot = SpatialTransform::from_axis_angle(&axis, rng.random_range(-3.0..3.0));
        SpatialTransform::new(rot.rotation, rand_vec3(rng) * 2.0)
    }

    fn rand_inertia(rng: &mut StdRng) -> SpatialInertia {
        let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let ic = a * a.transpose() + Matrix3::identity() * 0.1;
        SpatialInertia::from_com(rng.random_range(0.5..3.0), rand_vec3(rng), ic)
    }

    fn rand_motion(rng: &mut StdRng) -> SpatialMotion {
        SpatialMotion::new(rand_vec3(rng), rand_vec3(rng))
    }

    fn rand_force(rng: &mut StdRng) -> SpatialForce {
        SpatialForce::new(rand_vec3(rng), rand_vec3(rng))
    }

    #[test]
    fn identity_transform_leaves_motion_unchanged() {
        let v = SpatialMotion::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(-4.0, 5.0, 0.5));
        assert_eq!(SpatialTransform::identity().apply_motion(&v), v);
    }

    #[test]
    fn translation_transports_angular_velocity() {
        // Brute-force 6x6 matrix built entry by entry.
        let d = Vector3::new(0.3, -1.2, 0.7);
        let omega = Vector3::new(0.5, 0.1, -2.0);
        let x = SpatialTransform::from_translation(d);
        let mut m = Mat6::identity();
        let dx = [[0.0, -d.z, d.y], [d.z, 0.0, -d.x], [-d.y, d.x, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                m[(3 + i, j)] = -dx[i][j];
            }
        }
        let v = Vec6::new(omega.x, omega.y, omega.z, 0.0, 0.0, 0.0);
        let expected = m * v;
        let got = x.apply_motion(&SpatialMotion::from_vec6(&v)).to_vec6();
        assert!((got - expected).amax() < 1e-15);
        // Linear part is ω × d.
        let lin = omega.cross(&d);
        assert!((got.fixed_rows::<3>(3) - lin).amax() < 1e-15);
    }

    #[test]
    fn kinetic_energy_is_frame_invariant() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let x = rand_transform(&mut rng);
            let h = rand_inertia(&mut rng);
            let v = rand_motion(&mut rng);
            let e0 = h.kinetic_energy(&v);
            let e1 = x.apply_inertia(&h).kinetic_energy(&x.apply_motion(&v));
            assert!((e0 - e1).abs() < 1e-12 * (1.0 + e0.abs()), "{e0} vs {e1}");
        }
    }

    #[test]
    fn self_cross_vanishes() {
        let mut rng = StdRng::seed_from_u64(1);
        let v = rand_motion(&mut rng);
        assert!(v.cross_motion(&v).norm() < 1e-15);
    }

    #[test]
    fn cross_operators_are_dual() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..100 {
            let (v, m, f) = (rand_motion(&mut rng), rand_motion(&mut rng), rand_force(&mut rng));
            let lhs = v.cross_motion(&m).dot(&f);
            let rhs = -m.dot(&v.cross_force(&f));
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn spinning_symmetric_body_has_no_bias_moment_about_spin_axis() {
        let h = SpatialInertia::from_com(
            2.0,
            Vector3::zeros(),
            Matrix3::from_diagonal(&Vector3::new(0.4, 0.4, 0.9)),
        );
        let v = SpatialMotion::new(Vector3::new(0.0, 0.0, 3.0), Vector3::zeros());
        // Explicit-matrix evaluation of v ×* (H v).
        let hv = h.matrix() * v.to_vec6();
        let w = v.angular;
        let crf = {
            let mut c = Mat6::zeros();
            c.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&w));
            c.fixed_view_mut::<3, 3>(3, 3).copy_from(&skew(&w));
            c.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(&v.linear));
            c
        };
        let explicit = crf * hv;
        let bias = h.bias_force(&v).to_vec6();
        assert!((explicit - bias).amax() < 1e-14);
        assert_eq!(bias[2], 0.0);
    }

    #[test]
    fn composition_is_associative() {
        let mut rng = StdRng::seed_from_u64(3);
        let xs: Vec<_> = (0..10).map(|_| rand_transform(&mut rng)).collect();
        let left = xs.iter().fold(SpatialTransform::identity(), |acc, x| *x * acc);
        let right = xs.iter().rev().fold(SpatialTransform::identity(), |acc, x| acc * *x);
        assert!((left.matrix() - right.matrix()).amax() < 1e-12);
        let mut chained = SpatialTransform::identity();
        for x in &xs {
            chained = x.compose(&chained);
        }
        assert!((chained.matrix() - left.matrix()).amax() < 1e-12);
        let prod = xs.iter().fold(Mat6::identity(), |acc, x| x.matrix() * acc);
        assert!((prod - left.matrix()).amax() < 1e-12);
    }

    #[test]
    fn transforms_preserve_power_pairing() {
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..100 {
            let x = rand_transform(&mut rng);
            let (v, f) = (rand_motion(&mut rng), rand_force(&mut rng));
            let p0 = v.dot(&f);
            let p1 = x.apply_motion(&v).dot(&x.apply_force(&f));
            assert!((p0 - p1).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_helpers_match_matrix_forms() {
        let mut rng = StdRng::seed_from_u64(5);
        let x = rand_transform(&mut rng);
        let v = rand_motion(&mut rng).to_vec6();
        let f = rand_force(&mut rng).to_vec6();
        assert!((x.motion_vec(&v) - x.matrix() * v).amax() < 1e-13);
        assert!((x.force_vec(&f) - x.force_matrix() * f).amax() < 1e-13);
        assert!((x.inv_motion_vec(&x.motion_vec(&v)) - v).amax() < 1e-13);
        assert!((x.inv_force_vec(&f) - x.matrix().transpose() * f).amax() < 1e-13);
        assert!((x.inverse().matrix() * x.matrix() - Mat6::identity()).amax() < 1e-13);
        let r = x.rotation;
        assert!((r * r.transpose() - Matrix3::identity()).amax() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inertia_matrix_is_symmetric_positive_definite() {
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..50 {
            let h = rand_inertia(&mut rng).matrix();
            assert!((h - h.transpose()).amax() == 0.0);
            let eig = h.symmetric_eigenvalues();
            assert!(eig.iter().all(|&e| e > 0.0));
            let back = SpatialInertia::from_matrix(&h);
            assert!((back.matrix() - h).amax() < 1e-14);
        }
    }
}
