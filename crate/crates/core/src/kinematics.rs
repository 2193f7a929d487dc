//! First forward sweep (poses, body velocities, bias accelerations) and the
//! geometric Jacobians used by the dense baselines.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6xX, Quaternion, UnitQuaternion, Vector3};

use crate::model::{ConstraintSet, JointKind, MotionSubspace, RobotModel, RobotState};
use crate::spatial::{cross_motion_vec, SpatialMotion, SpatialTransform, Vec6};

#[derive(Clone, Debug)]
pub struct KinematicsCache {
    /// `^iX_π(i)`: parent frame to link frame.
    pub parent_x: Vec<SpatialTransform>,
    /// World frame to link frame.
    pub world_x: Vec<SpatialTransform>,
    /// Body-frame spatial velocity.
    pub v: Vec<Vec6>,
    /// Body-frame bias acceleration `v_i × S_i q̇_i`.
    pub a_bias: Vec<Vec6>,
}

impl KinematicsCache {
    pub fn new(model: &RobotModel) -> Self {
        let nl = model.num_links();
        Self {
            parent_x: vec![SpatialTransform::identity(); nl],
            world_x: vec![SpatialTransform::identity(); nl],
            v: vec![Vec6::zeros(); nl],
            a_bias: vec![Vec6::zeros(); nl],
        }
    }

    /// Recomputes every entry for configuration `q` and velocity `qd`.
    pub fn update(&mut self, model: &RobotModel, q: &[f64], qd: &[f64]) {
        for (i, link) in model.links().iter().enumerate() {
            let qi = &q[model.q_offset(i)..model.q_offset(i) + link.joint.kind.nq()];
            let vo = model.v_offset(i);
            let xp = link.joint.transform(qi);
            let (x_world, v_parent) = match link.parent {
                Some(p) => (xp.compose(&self.world_x[p]), xp.motion_vec(&self.v[p])),
                None => (xp, Vec6::zeros()),
            };
            let vj = joint_velocity(link.joint.subspace(), &qd[vo..vo + link.joint.dof()]);
            let v = v_parent + vj;
            self.a_bias[i] = cross_motion_vec(&v, &vj);
            self.parent_x[i] = xp;
            self.world_x[i] = x_world;
            self.v[i] = v;
        }
    }

    pub fn velocity(&self, i: usize) -> SpatialMotion {
        SpatialMotion::from_vec6(&self.v[i])
    }

    /// Link origin in world coordinates.
    pub fn origin(&self, i: usize) -> Vector3<f64> {
        self.world_x[i].translation
    }

    /// Link axes expressed in world coordinates (columns).
    pub fn orientation(&self, i: usize) -> Matrix3<f64> {
        self.world_x[i].frame_rotation()
    }

    /// Link-to-link transform `^iX_j` (from frame `j` to frame `i`).
    pub fn relative(&self, i: usize, j: usize) -> SpatialTransform {
        self.world_x[i].compose(&self.world_x[j].inverse())
    }

    /// Converts a world-aligned constraint row placed at the link origin to
    /// the link body frame.
    pub fn row_to_body(&self, i: usize, row: &Vec6) -> Vec6 {
        rotate_row(&self.world_x[i].rotation, row)
    }
}

/// `(E k_ang, E k_lin)`: a row acting on motion vectors, re-expressed after a
/// pure rotation `E`.
pub fn rotate_row(e: &Matrix3<f64>, row: &Vec6) -> Vec6 {
    let a = e * row.fixed_rows::<3>(0);
    let l = e * row.fixed_rows::<3>(3);
    Vec6::new(a.x, a.y, a.z, l.x, l.y, l.z)
}

pub(crate) fn joint_velocity(s: MotionSubspace, qd: &[f64]) -> Vec6 {
    match s {
        MotionSubspace::Axis(axis) => axis * qd[0],
        MotionSubspace::Free => Vec6::from_column_slice(qd),
    }
}

/// Runs the kinematic forward sweep for `state`.
pub fn forward_sweep(model: &RobotModel, state: &RobotState) -> KinematicsCache {
    let mut cache = KinematicsCache::new(model);
    cache.update(model, state.q.as_slice(), state.qd.as_slice());
    cache
}

/// Body-frame link accelerations for joint accelerations `qdd`, starting
/// from a base acceleration `a0` given in world coordinates.
pub fn link_accelerations(model: &RobotModel, cache: &KinematicsCache, qdd: &[f64], a0: &Vec6) -> Vec<Vec6> {
    let mut a: Vec<Vec6> = Vec::with_capacity(model.num_links());
    for (i, link) in model.links().iter().enumerate() {
        let vo = model.v_offset(i);
        let ap = match link.parent {
            Some(p) => cache.parent_x[i].motion_vec(&a[p]),
            None => cache.parent_x[i].motion_vec(a0),
        };
        a.push(ap + joint_velocity(link.joint.subspace(), &qdd[vo..vo + link.joint.dof()]) + cache.a_bias[i]);
    }
    a
}

/// 6 x n Jacobian of link `i` in its body frame: `v_i = J q̇`.
pub fn link_jacobian_body(model: &RobotModel, cache: &KinematicsCache, i: usize) -> Matrix6xX<f64> {
    let mut jac = Matrix6xX::zeros(model.n());
    let mut cur = Some(i);
    while let Some(j) = cur {
        let x = cache.relative(i, j);
        let vo = model.v_offset(j);
        match model.link(j).joint.subspace() {
            MotionSubspace::Axis(s) => jac.set_column(vo, &x.motion_vec(&s)),
            MotionSubspace::Free => {
                for k in 0..6 {
                    jac.set_column(vo + k, &x.motion_vec(&Vec6::ith(k, 1.0)));
                }
            }
        }
        cur = model.parent(j);
    }
    jac
}

/// 6 x n Jacobian of link `i` in the world-aligned frame at its origin.
pub fn link_jacobian(model: &RobotModel, cache: &KinematicsCache, i: usize) -> Matrix6xX<f64> {
    let body = link_jacobian_body(model, cache, i);
    let r = cache.orientation(i);
    let mut out = body;
    for mut col in out.column_iter_mut() {
        let a = r * col.fixed_rows::<3>(0);
        let l = r * col.fixed_rows::<3>(3);
        col.fixed_rows_mut::<3>(0).copy_from(&a);
        col.fixed_rows_mut::<3>(3).copy_from(&l);
    }
    out
}

/// Stacked constraint Jacobian `J` (m x n) and bias `J̇q̇` (m). `J̇q̇` is the
/// constrained link acceleration with zero joint acceleration and no gravity.
pub fn constraint_jacobian(
    model: &RobotModel,
    state: &RobotState,
    constraints: &ConstraintSet,
) -> (DMatrix<f64>, DVector<f64>) {
    let cache = forward_sweep(model, state);
    constraint_jacobian_cached(model, &cache, constraints)
}

pub fn constraint_jacobian_cached(
    model: &RobotModel,
    cache: &KinematicsCache,
    constraints: &ConstraintSet,
) -> (DMatrix<f64>, DVector<f64>) {
    let m = constraints.m();
    let mut jac = DMatrix::zeros(m, model.n());
    let mut bias = DVector::zeros(m);
    if m == 0 {
        return (jac, bias);
    }
    let a = link_accelerations(model, cache, &vec![0.0; model.n()], &Vec6::zeros());
    let mut row = 0;
    for e in constraints.entries() {
        let body_jac = link_jacobian_body(model, cache, e.link);
        for k in &e.rows {
            let kb = cache.row_to_body(e.link, k);
            jac.row_mut(row).copy_from(&(kb.transpose() * &body_jac));
            bias[row] = kb.dot(&a[e.link]);
            row += 1;
        }
    }
    (jac, bias)
}

/// Time derivative of the configuration for velocity `v`.
pub fn configuration_derivative(model: &RobotModel, q: &[f64], v: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(model.nq());
    for (i, link) in model.links().iter().enumerate() {
        let (qo, vo) = (model.q_offset(i), model.v_offset(i));
        match link.joint.kind {
            JointKind::Floating => {
                let quat = Quaternion::new(q[qo + 3], q[qo + 4], q[qo + 5], q[qo + 6]);
                let rot = UnitQuaternion::from_quaternion(quat).to_rotation_matrix();
                let pd = rot * Vector3::new(v[vo + 3], v[vo + 4], v[vo + 5]);
                let w = Quaternion::new(0.0, v[vo], v[vo + 1], v[vo + 2]);
                let qd = quat * w * 0.5;
                out.rows_mut(qo, 3).copy_from(&pd);
                out[qo + 3] = qd.w;
                out[qo + 4] = qd.i;
                out[qo + 5] = qd.j;
                out[qo + 6] = qd.k;
            }
            _ => out[qo] = v[vo],
        }
    }
    out
}

/// Advances `q` by velocity `v` over `dt`. The base orientation is composed
/// with the exact rotation increment and renormalized.
pub fn integrate(model: &RobotModel, q: &[f64], v: &[f64], dt: f64) -> DVector<f64> {
    let mut out = DVector::from_column_slice(q);
    for (i, link) in model.links().iter().enumerate() {
        let (qo, vo) = (model.q_offset(i), model.v_offset(i));
        match link.joint.kind {
            JointKind::Floating => {
                let quat = UnitQuaternion::from_quaternion(Quaternion::new(q[qo + 3], q[qo + 4], q[qo + 5], q[qo + 6]));
                let dp = quat * Vector3::new(v[vo + 3], v[vo + 4], v[vo + 5]) * dt;
                let dr = UnitQuaternion::from_scaled_axis(Vector3::new(v[vo], v[vo + 1], v[vo + 2]) * dt);
                let next = normalize_wxyz((quat * dr).into_inner());
                out[qo] += dp.x;
                out[qo + 1] += dp.y;
                out[qo + 2] += dp.z;
                out.rows_mut(qo + 3, 4).copy_from_slice(&next);
            }
            _ => out[qo] += v[vo] * dt,
        }
    }
    out
}

fn normalize_wxyz(q: Quaternion<f64>) -> [f64; 4] {
    let n = q.norm();
    [q.w / n, q.i / n, q.j / n, q.k / n]
}

/// Renormalizes the base quaternion in place (no-op for fixed bases).
pub fn normalize_configuration(model: &RobotModel, q: &mut DVector<f64>) {
    if model.is_floating() {
        let next = normalize_wxyz(Quaternion::new(q[3], q[4], q[5], q[6]));
        q.rows_mut(3, 4).copy_from_slice(&next);
    }
}

/// Kinetic plus gravitational potential energy.
pub fn mechanical_energy(model: &RobotModel, cache: &KinematicsCache) -> f64 {
    let g = model.gravity();
    model
        .links()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let com_world = cache.origin(i) + cache.orientation(i) * l.com;
            l.inertia.kinetic_energy(&cache.velocity(i)) - l.mass * g.dot(&com_world)
        })
        .sum()
}
