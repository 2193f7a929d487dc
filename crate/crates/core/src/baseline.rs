//! Joint-space reference algorithms: CRBA, inverse-dynamics bias, the
//! sparsity-preserving LTL factorization and a dense KKT solve. These are
//! `O(n³)` and exist to certify the recursive solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kinematics::{constraint_jacobian_cached, forward_sweep, KinematicsCache};
use crate::model::{ConstraintSet, MotionSubspace, RobotModel, RobotState};
use crate::spatial::{cross_force_vec, Mat6, Vec6};

/// Dense joint-space form `M q̈ + c + Jᵀλ = τ`, `J q̈ + J̇q̇ = k`.
#[derive(Clone, Debug)]
pub struct JointSpaceModel {
    pub m: DMatrix<f64>,
    pub c: DVector<f64>,
    pub j: DMatrix<f64>,
    pub jdqd: DVector<f64>,
}

impl JointSpaceModel {
    pub fn new(model: &RobotModel, state: &RobotState, constraints: &ConstraintSet) -> Result<Self> {
        state.validate(model)?;
        constraints.validate(model)?;
        let cache = forward_sweep(model, state);
        let (j, jdqd) = constraint_jacobian_cached(model, &cache, constraints);
        Ok(Self { m: crba_cached(model, &cache), c: rnea_bias_cached(model, &cache, state), j, jdqd })
    }
}

fn subspace_columns(s: MotionSubspace) -> impl Iterator<Item = Vec6> {
    let cols: Vec<Vec6> = match s {
        MotionSubspace::Axis(a) => vec![a],
        MotionSubspace::Free => (0..6).map(|k| Vec6::ith(k, 1.0)).collect(),
    };
    cols.into_iter()
}

/// Joint-space inertia matrix by the composite-rigid-body algorithm.
pub fn crba(model: &RobotModel, state: &RobotState) -> DMatrix<f64> {
    crba_cached(model, &forward_sweep(model, state))
}

fn crba_cached(model: &RobotModel, cache: &KinematicsCache) -> DMatrix<f64> {
    let nl = model.num_links();
    let mut ic: Vec<Mat6> = model.links().iter().map(|l| l.inertia.matrix()).collect();
    for i in (0..nl).rev() {
        if let Some(p) = model.parent(i) {
            let add = cache.parent_x[i].inv_congruence(&ic[i]);
            ic[p] += add;
        }
    }
    let mut m = DMatrix::zeros(model.n(), model.n());
    for (i, ici) in ic.iter().enumerate() {
        for (ci, s) in subspace_columns(model.link(i).joint.subspace()).enumerate() {
            let col = model.v_offset(i) + ci;
            let mut f = ici * s;
            let mut j = i;
            loop {
                for (cj, sj) in subspace_columns(model.link(j).joint.subspace()).enumerate() {
                    let row = model.v_offset(j) + cj;
                    let val = sj.dot(&f);
                    m[(row, col)] = val;
                    m[(col, row)] = val;
                }
                match model.parent(j) {
                    Some(p) => {
                        f = cache.parent_x[j].inv_force_vec(&f);
                        j = p;
                    }
                    None => break,
                }
            }
        }
    }
    m
}

/// Generalized bias force `c(q, q̇)` (Coriolis, centrifugal, gravity and
/// external forces): inverse dynamics with `q̈ = 0`.
pub fn rnea_bias(model: &RobotModel, state: &RobotState) -> DVector<f64> {
    rnea_bias_cached(model, &forward_sweep(model, state), state)
}

fn rnea_bias_cached(model: &RobotModel, cache: &KinematicsCache, state: &RobotState) -> DVector<f64> {
    let nl = model.num_links();
    let a0 = -model.gravity_spatial();
    let mut acc = vec![Vec6::zeros(); nl];
    let mut f = vec![Vec6::zeros(); nl];
    for i in 0..nl {
        let a_par = model.parent(i).map_or(a0, |p| acc[p]);
        acc[i] = cache.parent_x[i].motion_vec(&a_par) + cache.a_bias[i];
        let h = model.link(i).inertia.matrix();
        let v = cache.v[i];
        f[i] = h * acc[i] + cross_force_vec(&v, &(h * v)) - state.f_ext[i].to_vec6();
    }
    let mut c = DVector::zeros(model.n());
    for i in (0..nl).rev() {
        for (k, s) in subspace_columns(model.link(i).joint.subspace()).enumerate() {
            c[model.v_offset(i) + k] = s.dot(&f[i]);
        }
        if let Some(p) = model.parent(i) {
            let fp = cache.parent_x[i].inv_force_vec(&f[i]);
            f[p] += fp;
        }
    }
    c
}

/// Factor `M = LᵀL` (`L` lower triangular) eliminating from the last dof to
/// the first along the tree, so `L` has nonzeros only where a dof's ancestor
/// lies: no fill-in.
pub fn ltl(model: &RobotModel, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let parents = model.dof_parents();
    let n = m.nrows();
    if n != model.n() || m.ncols() != n {
        return Err(Error::Dimension { what: "joint-space inertia", expected: model.n(), got: n });
    }
    let mut h = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut i = parents[k];
        h[(k, k)] = m[(k, k)];
        while let Some(a) = i {
            h[(k, a)] = m[(k, a)];
            i = parents[a];
        }
    }
    for k in (0..n).rev() {
        if !(h[(k, k)] > 0.0) {
            return Err(Error::Singular { factor: "joint-space inertia", index: k, pivot: h[(k, k)] });
        }
        let a = h[(k, k)].sqrt();
        h[(k, k)] = a;
        let mut i = parents[k];
        while let Some(ii) = i {
            h[(k, ii)] /= a;
            i = parents[ii];
        }
        let mut i = parents[k];
        while let Some(ii) = i {
            let mut j = Some(ii);
            while let Some(jj) = j {
                h[(ii, jj)] -= h[(k, ii)] * h[(k, jj)];
                j = parents[jj];
            }
            i = parents[ii];
        }
    }
    Ok(h)
}

/// `Λ⁻¹ = Y Yᵀ` with `Y = J L⁻¹` from the LTL factorization.
pub fn ltl_osim(model: &RobotModel, state: &RobotState, constraints: &ConstraintSet) -> Result<DMatrix<f64>> {
    let js = JointSpaceModel::new(model, state, constraints)?;
    let l = ltl(model, &js.m)?;
    // Lᵀ Yᵀ = Jᵀ, with Lᵀ upper triangular.
    let yt = l
        .transpose()
        .solve_upper_triangular(&js.j.transpose())
        .ok_or(Error::Singular { factor: "joint-space inertia", index: 0, pivot: 0.0 })?;
    Ok(yt.transpose() * yt)
}

/// Explicit `J M⁻¹ Jᵀ`.
pub fn dense_inverse_osim(js: &JointSpaceModel) -> Result<DMatrix<f64>> {
    let chol = js
        .m
        .clone()
        .cholesky()
        .ok_or(Error::Singular { factor: "joint-space inertia", index: 0, pivot: 0.0 })?;
    Ok(&js.j * chol.solve(&js.j.transpose()))
}

/// Ground-truth constrained dynamics from the dense saddle-point system
/// `[[M, Jᵀ], [J, 0]] (q̈, λ) = (τ - c, k - J̇q̇)`.
pub fn kkt_oracle(
    model: &RobotModel,
    state: &RobotState,
    constraints: &ConstraintSet,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let js = JointSpaceModel::new(model, state, constraints)?;
    kkt_solve(&js, &state.tau, &constraints.targets())
}

pub fn kkt_solve(js: &JointSpaceModel, tau: &DVector<f64>, k: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let (n, m) = (js.m.nrows(), js.j.nrows());
    let mut a = DMatrix::zeros(n + m, n + m);
    a.view_mut((0, 0), (n, n)).copy_from(&js.m);
    a.view_mut((0, n), (n, m)).copy_from(&js.j.transpose());
    a.view_mut((n, 0), (m, n)).copy_from(&js.j);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(tau - &js.c));
    rhs.rows_mut(n, m).copy_from(&(k - &js.jdqd));
    let lu = a.full_piv_lu();
    let diag = lu.u().diagonal();
    let max = diag.amax();
    if let Some((index, pivot)) = diag.iter().enumerate().find(|(_, p)| !(p.abs() > 1e-13 * max)) {
        return Err(Error::Singular { factor: "KKT matrix", index, pivot: *pivot });
    }
    let x = lu.solve(&rhs).ok_or(Error::Singular { factor: "KKT matrix", index: 0, pivot: 0.0 })?;
    Ok((x.rows(0, n).into_owned(), x.rows(n, m).into_owned()))
}

/// Joint-space penalty dynamics `(M + JᵀR⁻¹J) q̈ = τ - c + JᵀR⁻¹(k - J̇q̇)`.
pub fn soft_joint_space_solve(model: &RobotModel, state: &RobotState, constraints: &ConstraintSet) -> Result<DVector<f64>> {
    let js = JointSpaceModel::new(model, state, constraints)?;
    let mut r_inv = Vec::with_capacity(constraints.m());
    for (i, e) in constraints.entries().iter().enumerate() {
        let w = e.soft_weight.as_ref().ok_or_else(|| Error::Invalid(format!("constraint {i} has no soft weight")))?;
        r_inv.extend(w.iter().map(|r| 1.0 / r));
    }
    let r_inv = DMatrix::from_diagonal(&DVector::from_vec(r_inv));
    let jt_r = js.j.transpose() * &r_inv;
    let lhs = &js.m + &jt_r * &js.j;
    let rhs = &state.tau - &js.c + jt_r * (constraints.targets() - &js.jdqd);
    lhs.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or(Error::Singular { factor: "penalized joint-space inertia", index: 0, pivot: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Joint, Link};
    use nalgebra::Vector3;

    fn pendulum(len: f64, mass: f64) -> RobotModel {
        let j = Joint::revolute(Vector3::y(), Vector3::zeros(), Vector3::zeros()).unwrap();
        let l = Link::new("bob", None, j, mass, Vector3::new(0.0, 0.0, -len), [0.0; 6]).unwrap();
        RobotModel::new(vec![l], Vector3::new(0.0, 0.0, -9.81)).unwrap()
    }

    #[test]
    fn point_mass_pendulum_inertia() {
        let m = pendulum(0.7, 1.5);
        let mm = crba(&m, &RobotState::neutral(&m));
        assert!((mm[(0, 0)] - 1.5 * 0.49).abs() < 1e-14);
    }

    #[test]
    fn horizontal_pendulum_gravity_torque() {
        let m = pendulum(0.7, 1.5);
        let mut s = RobotState::neutral(&m);
        s.q[0] = std::f64::consts::FRAC_PI_2;
        let c = rnea_bias(&m, &s);
        assert!((c[0] - 1.5 * 9.81 * 0.7).abs() < 1e-12, "{c}");
    }

    #[test]
    fn no_bias_at_rest_without_gravity() {
        let m = pendulum(0.7, 1.5).with_gravity(Vector3::zeros());
        let c = rnea_bias(&m, &RobotState::neutral(&m));
        assert_eq!(c[0], 0.0);
    }

    #[test]
    fn unconstrained_oracle_is_plain_dynamics() {
        let m = pendulum(0.7, 1.5);
        let mut s = RobotState::neutral(&m);
        s.q[0] = 0.3;
        let (qdd, lambda) = kkt_oracle(&m, &s, &ConstraintSet::new()).unwrap();
        assert_eq!(lambda.len(), 0);
        assert!((qdd[0] + 9.81 / 0.7 * 0.3f64.sin()).abs() < 1e-12);
    }
}
