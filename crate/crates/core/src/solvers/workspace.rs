use arrayvec::ArrayVec;
use nalgebra::{DMatrix, DVector};

use super::reflector::Reflector;
use super::GravityMode;
use crate::error::{Error, Result};
use crate::kinematics::KinematicsCache;
use crate::model::{ConstraintSet, MotionSubspace, RobotModel, RobotState};
use crate::spatial::{cross_force_vec, Mat6, Vec6};

/// Constraint rows laid out in depth-first preorder so that the rows owned
/// by any subtree occupy one contiguous range.
#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct RowLayout {
    /// First row of the link's own constraints (and of its subtree).
    pub start: Vec<usize>,
    pub own: Vec<usize>,
    /// One past the last row of the subtree.
    pub end: Vec<usize>,
    /// Original row index -> workspace slot.
    pub slot_of: Vec<usize>,
    /// Workspace slot -> original row index.
    pub row_of: Vec<usize>,
    /// Offsets of each link's `K^A s` block in the flat buffer.
    pub ks_offset: Vec<usize>,
}

impl RowLayout {
    pub fn new(model: &RobotModel, constraints: &ConstraintSet) -> Self {
        let nl = model.num_links();
        let own = constraints.rows_per_link(nl);
        let mut sub = own.clone();
        for i in (0..nl).rev() {
            if let Some(p) = model.parent(i) {
                sub[p] += sub[i];
            }
        }
        let mut start = vec![0; nl];
        let mut next = vec![0; nl];
        let mut world = 0;
        for i in 0..nl {
            start[i] = match model.parent(i) {
                Some(p) => {
                    let s = next[p];
                    next[p] += sub[i];
                    s
                }
                None => {
                    let s = world;
                    world += sub[i];
                    s
                }
            };
            next[i] = start[i] + own[i];
        }
        let end: Vec<usize> = (0..nl).map(|i| start[i] + sub[i]).collect();
        let mut fill = vec![0; nl];
        let mut slot_of = Vec::with_capacity(constraints.m());
        for e in constraints.entries() {
            for _ in 0..e.dim() {
                slot_of.push(start[e.link] + fill[e.link]);
                fill[e.link] += 1;
            }
        }
        let mut row_of = vec![0; slot_of.len()];
        for (r, &s) in slot_of.iter().enumerate() {
            row_of[s] = r;
        }
        let mut ks_offset = Vec::with_capacity(nl + 1);
        let mut acc = 0;
        for &k in sub.iter().take(nl) {
            ks_offset.push(acc);
            acc += k;
        }
        ks_offset.push(acc);
        Self { start, own, end, slot_of, row_of, ks_offset }
    }

    pub fn m(&self) -> usize {
        self.slot_of.len()
    }

    pub fn to_original(&self, ws: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.slot_of.iter().map(|&s| ws[s]))
    }

    /// Permutes a workspace-ordered square matrix to the original row order.
    pub fn matrix_to_original(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.m();
        DMatrix::from_fn(m, m, |r, c| a[(self.slot_of[r], self.slot_of[c])])
    }
}

/// Elimination performed at one joint by the early-elimination solver.
#[derive(Clone, Debug)]
pub(crate) struct Elimination {
    pub reflector: Reflector,
    /// Eliminated row, expressed in the parent frame after the joint.
    pub row: Vec6,
    pub offset: f64,
}

/// Preallocated per-link buffers shared by every solver. Reusing one
/// workspace across calls avoids allocation inside the sweeps as long as the
/// constraint layout (rows per link) does not change.
#[derive(Clone, Debug)]
pub struct SolverWorkspace {
    pub(crate) layout: RowLayout,
    pub(crate) layout_key: Vec<usize>,
    pub(crate) kin: KinematicsCache,
    /// Articulated inertia `H^A` (body frame).
    pub(crate) h: Vec<Mat6>,
    /// Articulated bias force `f^A` (body frame).
    pub(crate) f: Vec<Vec6>,
    /// `H^A s` per single-dof joint.
    pub(crate) u: Vec<Vec6>,
    /// `sᵀ H^A s` per single-dof joint.
    pub(crate) d: Vec<f64>,
    /// `τ + sᵀ f^A - Uᵀ c` per single-dof joint.
    pub(crate) ug: Vec<f64>,
    /// Propagated constraint rows `K^A`, in the frame of the link being processed.
    pub(crate) k: Vec<Vec6>,
    /// Propagated constraint offsets `l`.
    pub(crate) l: DVector<f64>,
    /// Dual Hessian `L^A`; only the diagonal subtree blocks are populated.
    pub(crate) big_l: DMatrix<f64>,
    /// `K^A s` for each link over its subtree rows.
    pub(crate) ks: Vec<f64>,
    pub(crate) lambda: DVector<f64>,
    pub(crate) acc: Vec<Vec6>,
    pub(crate) qdd: DVector<f64>,
    /// Floating-base terms captured before the root is resolved.
    pub(crate) base_h: Mat6,
    pub(crate) base_f: Vec6,
    /// Early elimination: active slots, pre-joint `K^A s` and the eliminations.
    pub(crate) active: Vec<ArrayVec<usize, 6>>,
    pub(crate) ks_small: Vec<ArrayVec<f64, 6>>,
    pub(crate) elim: Vec<Option<Elimination>>,
}

impl SolverWorkspace {
    pub fn new(model: &RobotModel, constraints: &ConstraintSet) -> Self {
        let nl = model.num_links();
        let layout = RowLayout::new(model, constraints);
        let m = layout.m();
        let ks_len = layout.ks_offset[nl];
        Self {
            layout,
            layout_key: layout_key(model, constraints),
            kin: KinematicsCache::new(model),
            h: vec![Mat6::zeros(); nl],
            f: vec![Vec6::zeros(); nl],
            u: vec![Vec6::zeros(); nl],
            d: vec![0.0; nl],
            ug: vec![0.0; nl],
            k: vec![Vec6::zeros(); m],
            l: DVector::zeros(m),
            big_l: DMatrix::zeros(m, m),
            ks: vec![0.0; ks_len],
            lambda: DVector::zeros(m),
            acc: vec![Vec6::zeros(); nl],
            qdd: DVector::zeros(model.n()),
            base_h: Mat6::zeros(),
            base_f: Vec6::zeros(),
            active: vec![ArrayVec::new(); nl],
            ks_small: vec![ArrayVec::new(); nl],
            elim: vec![None; nl],
        }
    }

    /// Rebuilds the buffers when the model size or constraint layout changed.
    pub fn ensure(&mut self, model: &RobotModel, constraints: &ConstraintSet) {
        if self.h.len() != model.num_links()
            || self.qdd.len() != model.n()
            || self.layout_key != layout_key(model, constraints)
        {
            *self = Self::new(model, constraints);
        }
    }

    pub fn m(&self) -> usize {
        self.layout.m()
    }

    /// Articulated-body inertia of link `i` from the last backward sweep.
    pub fn articulated_inertia(&self, i: usize) -> &Mat6 {
        &self.h[i]
    }

    /// `S_iᵀ H^A_i S_i` for a single-dof joint.
    pub fn joint_inertia(&self, i: usize) -> f64 {
        self.d[i]
    }

    /// Force propagator `P_i = 1 - H^A S D⁻¹ Sᵀ` for a single-dof joint.
    pub fn projector(&self, i: usize, s: &Vec6) -> Mat6 {
        Mat6::identity() - self.u[i] * s.transpose() / self.d[i]
    }

    /// Dual Hessian left at the root by the last PV or OSIM sweep (the full
    /// `L_0` for fixed bases, the base block `L_b` for floating bases), in
    /// the constraint set's row order.
    pub fn root_dual_hessian(&self) -> DMatrix<f64> {
        self.layout.matrix_to_original(&self.big_l)
    }

    /// Subtree row ranges in workspace order (for structure checks).
    pub fn subtree_rows(&self, i: usize) -> std::ops::Range<usize> {
        self.layout.start[i]..self.layout.end[i]
    }

    /// Dual Hessian in workspace (preorder) row order.
    pub fn dual_hessian_workspace_order(&self) -> &DMatrix<f64> {
        &self.big_l
    }

    /// Kinematics from the last solve.
    pub fn kinematics(&self) -> &KinematicsCache {
        &self.kin
    }

    /// Forward kinematics, inertias and bias forces for the backward sweep.
    pub(crate) fn seed(&mut self, model: &RobotModel, state: &RobotState, mode: GravityMode, with_forces: bool) {
        self.kin.update(model, state.q.as_slice(), state.qd.as_slice());
        let g = model.gravity();
        for (i, link) in model.links().iter().enumerate() {
            let h = link.inertia.matrix();
            self.h[i] = h;
            if !with_forces {
                continue;
            }
            let v = self.kin.v[i];
            let mut f = state.f_ext[i].to_vec6() - cross_force_vec(&v, &(h * v));
            if mode == GravityMode::LinkWeights {
                let eg = self.kin.world_x[i].rotation * g;
                f += h * Vec6::new(0.0, 0.0, 0.0, eg.x, eg.y, eg.z);
            }
            self.f[i] = f;
        }
    }

    /// Loads body-frame constraint rows and offsets `l = -k` into the slots.
    pub(crate) fn load_constraints(&mut self, model: &RobotModel, constraints: &ConstraintSet, mode: GravityMode) {
        let mut r = 0;
        for e in constraints.entries() {
            for (row, &k) in e.rows.iter().zip(&e.target) {
                let slot = self.layout.slot_of[r];
                self.k[slot] = self.kin.row_to_body(e.link, row);
                self.l[slot] = -super::effective_target(model, mode, row, k);
                r += 1;
            }
        }
    }

    /// Factors the base 6x6 articulated inertia.
    pub(crate) fn base_cholesky(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::U6>> {
        self.base_h.cholesky().ok_or(Error::NonPositiveJointInertia { link: 0 })
    }
}

fn layout_key(model: &RobotModel, constraints: &ConstraintSet) -> Vec<usize> {
    let mut key = vec![model.num_links()];
    key.extend(constraints.entries().iter().flat_map(|e| [e.link, e.dim()]));
    key
}

/// The single-dof subspace column of a joint, if any.
pub(crate) fn axis_of(s: MotionSubspace) -> Option<Vec6> {
    match s {
        MotionSubspace::Axis(a) => Some(a),
        MotionSubspace::Free => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Joint, Link};
    use nalgebra::Vector3;

    #[test]
    fn subtree_rows_are_contiguous() {
        let rz = || Joint::revolute(Vector3::z(), Vector3::zeros(), Vector3::zeros()).unwrap();
        let mk = |name: &str, p| Link::new(name, p, rz(), 1.0, Vector3::zeros(), [1.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        // 0 -> {1 -> 3, 2}
        let model = RobotModel::new(
            vec![mk("a", None), mk("b", Some(0)), mk("c", Some(0)), mk("d", Some(1))],
            Vector3::zeros(),
        )
        .unwrap();
        let mut c = ConstraintSet::new();
        c.push(2, vec![Vec6::x()], vec![0.0], None).unwrap();
        c.push(3, vec![Vec6::y(), Vec6::z()], vec![0.0; 2], None).unwrap();
        c.push(0, vec![Vec6::x()], vec![0.0], None).unwrap();
        let layout = RowLayout::new(&model, &c);
        assert_eq!(layout.start, vec![0, 1, 3, 1]);
        assert_eq!(layout.end, vec![4, 3, 4, 3]);
        assert_eq!(layout.slot_of, vec![3, 1, 2, 0]);
        for (r, &s) in layout.slot_of.iter().enumerate() {
            assert_eq!(layout.row_of[s], r);
        }
    }
}
