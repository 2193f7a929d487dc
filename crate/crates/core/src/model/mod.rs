//! Kinematic-tree robot description, joint motion subspaces, motion
//! constraints and robot state.
//!
//! Links are stored in topological order: a link's parent always has a
//! smaller index, and `None` means the link hangs off the world. Only link 0
//! may carry a floating joint, in which case it is the single root.
//!
//! Constraint rows `K_i` are written in a frame aligned with the world axes
//! and placed at the constrained link's origin. They act on the link's
//! spatial acceleration, `K_i a_i = k_i`, and are normalized to unit norm on
//! insertion (the target is scaled by the same factor).

mod io;

pub use io::{
    load_constraint_specs, load_constraints, load_model, save_constraints, save_model,
};

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, ModelError, Result};
use crate::spatial::{SpatialForce, SpatialInertia, SpatialTransform, Vec6};

/// Default gravitational acceleration, m/s².
pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Clone, Debug, PartialEq)]
pub enum JointKind {
    Revolute { axis: Vector3<f64> },
    Prismatic { axis: Vector3<f64> },
    /// Six-dof free joint. Configuration `[x y z qw qx qy qz]`, velocity is the
    /// body-frame twist `[ω; v]`.
    Floating,
}

impl JointKind {
    pub fn dof(&self) -> usize {
        match self {
            JointKind::Floating => 6,
            _ => 1,
        }
    }

    pub fn nq(&self) -> usize {
        match self {
            JointKind::Floating => 7,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            JointKind::Revolute { .. } => "revolute",
            JointKind::Prismatic { .. } => "prismatic",
            JointKind::Floating => "floating",
        }
    }
}

/// Motion subspace `S` of a joint in the child link frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MotionSubspace {
    /// Single column.
    Axis(Vec6),
    /// `S = 1₆ₓ₆`.
    Free,
}

impl MotionSubspace {
    pub fn dof(&self) -> usize {
        match self {
            MotionSubspace::Axis(_) => 1,
            MotionSubspace::Free => 6,
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            MotionSubspace::Axis(s) => DMatrix::from_column_slice(6, 1, s.as_slice()),
            MotionSubspace::Free => DMatrix::identity(6, 6),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub kind: JointKind,
    /// Joint frame origin in the parent frame (URDF `xyz`).
    pub origin_xyz: Vector3<f64>,
    /// Joint frame orientation as fixed-axis roll, pitch, yaw (URDF `rpy`).
    pub origin_rpy: Vector3<f64>,
    /// Fixed transform from the parent link frame to the joint frame.
    pub parent_to_joint: SpatialTransform,
}

fn rpy_matrix(rpy: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::from_euler_angles(rpy.x, rpy.y, rpy.z).into_inner()
}

impl Joint {
    fn with_origin(kind: JointKind, xyz: Vector3<f64>, rpy: Vector3<f64>) -> Self {
        let parent_to_joint = SpatialTransform::from_pose(&rpy_matrix(&rpy), xyz);
        Self { kind, origin_xyz: xyz, origin_rpy: rpy, parent_to_joint }
    }

    fn unit_axis(axis: Vector3<f64>) -> std::result::Result<Vector3<f64>, String> {
        let norm = axis.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(format!("joint axis {:?} cannot be normalized", axis.as_slice()));
        }
        // Idempotent, so saved models reload bit for bit.
        let unit = if (norm - 1.0).abs() > 4.0 * f64::EPSILON { axis / norm } else { axis };
        debug_assert!((unit.norm() - 1.0).abs() < 1e-10);
        Ok(unit)
    }

    pub fn revolute(axis: Vector3<f64>, xyz: Vector3<f64>, rpy: Vector3<f64>) -> Result<Self, String> {
        Ok(Self::with_origin(JointKind::Revolute { axis: Self::unit_axis(axis)? }, xyz, rpy))
    }

    pub fn prismatic(axis: Vector3<f64>, xyz: Vector3<f64>, rpy: Vector3<f64>) -> Result<Self, String> {
        Ok(Self::with_origin(JointKind::Prismatic { axis: Self::unit_axis(axis)? }, xyz, rpy))
    }

    pub fn floating() -> Self {
        Self::with_origin(JointKind::Floating, Vector3::zeros(), Vector3::zeros())
    }

    pub fn dof(&self) -> usize {
        self.kind.dof()
    }

    pub fn subspace(&self) -> MotionSubspace {
        match &self.kind {
            JointKind::Revolute { axis } => {
                MotionSubspace::Axis(Vec6::new(axis.x, axis.y, axis.z, 0.0, 0.0, 0.0))
            }
            JointKind::Prismatic { axis } => {
                MotionSubspace::Axis(Vec6::new(0.0, 0.0, 0.0, axis.x, axis.y, axis.z))
            }
            JointKind::Floating => MotionSubspace::Free,
        }
    }

    /// Transform due to the joint displacement, from joint frame to child frame.
    pub fn motion_transform(&self, q: &[f64]) -> SpatialTransform {
        match &self.kind {
            JointKind::Revolute { axis } => SpatialTransform::from_axis_angle(axis, q[0]),
            JointKind::Prismatic { axis } => SpatialTransform::from_translation(axis * q[0]),
            JointKind::Floating => {
                let (p, rot) = floating_pose(q);
                SpatialTransform::from_pose(&rot, p)
            }
        }
    }

    /// `^iX_π(i)`: parent link frame to child link frame.
    pub fn transform(&self, q: &[f64]) -> SpatialTransform {
        self.motion_transform(q).compose(&self.parent_to_joint)
    }
}

/// Motion subspace matrix `S` (6 x dof) of a joint.
pub fn motion_subspace(joint: &Joint) -> DMatrix<f64> {
    joint.subspace().matrix()
}

/// Position and orientation (columns = body axes in world) of a floating
/// configuration `[x y z qw qx qy qz]`.
pub fn floating_pose(q: &[f64]) -> (Vector3<f64>, Matrix3<f64>) {
    let quat = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[3], q[4], q[5], q[6]));
    (Vector3::new(q[0], q[1], q[2]), quat.to_rotation_matrix().into_inner())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub name: String,
    pub parent: Option<usize>,
    pub joint: Joint,
    pub mass: f64,
    /// Centre of mass in the link frame.
    pub com: Vector3<f64>,
    /// Rotational inertia about the COM: `[ixx iyy izz ixy ixz iyz]`.
    pub inertia_com: [f64; 6],
    pub inertia: SpatialInertia,
}

fn inertia_matrix(i: &[f64; 6]) -> Matrix3<f64> {
    Matrix3::new(i[0], i[3], i[4], i[3], i[1], i[5], i[4], i[5], i[2])
}

impl Link {
    pub fn new(
        name: impl Into<String>,
        parent: Option<usize>,
        joint: Joint,
        mass: f64,
        com: Vector3<f64>,
        inertia_com: [f64; 6],
    ) -> Result<Self, ModelError> {
        let name = name.into();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(ModelError::NonPositiveMass { link: name, mass });
        }
        let ic = inertia_matrix(&inertia_com);
        if ic.iter().any(|x| !x.is_finite()) || ic.symmetric_eigenvalues().iter().any(|&e| e < 0.0) {
            return Err(ModelError::InvalidInertia { link: name });
        }
        let inertia = SpatialInertia::from_com(mass, com, ic);
        Ok(Self { name, parent, joint, mass, com, inertia_com, inertia })
    }
}

/// Validated kinematic tree plus derived bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotModel {
    links: Vec<Link>,
    gravity: Vector3<f64>,
    children: Vec<Vec<usize>>,
    v_offset: Vec<usize>,
    q_offset: Vec<usize>,
    link_depth: Vec<usize>,
    n: usize,
    nq: usize,
    depth: usize,
}

impl RobotModel {
    pub fn new(links: Vec<Link>, gravity: Vector3<f64>) -> Result<Self, ModelError> {
        if links.is_empty() {
            return Err(ModelError::Empty);
        }
        let mut children = vec![Vec::new(); links.len()];
        let mut v_offset = Vec::with_capacity(links.len());
        let mut q_offset = Vec::with_capacity(links.len());
        let mut link_depth = Vec::with_capacity(links.len());
        let (mut n, mut nq) = (0, 0);
        let roots = links.iter().filter(|l| l.parent.is_none()).count();
        for (i, link) in links.iter().enumerate() {
            if let Some(p) = link.parent {
                if p >= i {
                    return Err(ModelError::TopologicalOrder { link: link.name.clone(), index: i, parent: p });
                }
                children[p].push(i);
            }
            if matches!(link.joint.kind, JointKind::Floating) && (i != 0 || link.parent.is_some() || roots != 1) {
                return Err(ModelError::FloatingPlacement(link.name.clone()));
            }
            if links[..i].iter().any(|l| l.name == link.name) {
                return Err(ModelError::DuplicateName(link.name.clone()));
            }
            v_offset.push(n);
            q_offset.push(nq);
            n += link.joint.dof();
            nq += link.joint.kind.nq();
            link_depth.push(link.parent.map_or(1, |p| link_depth[p] + 1));
        }
        let depth = link_depth.iter().copied().max().unwrap_or(0);
        Ok(Self { links, gravity, children, v_offset, q_offset, link_depth, n, nq, depth })
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, i: usize) -> &Link {
        &self.links[i]
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.links[i].parent
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// Total degrees of freedom.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Length of the configuration vector.
    pub fn nq(&self) -> usize {
        self.nq
    }

    /// Number of links on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn link_depth(&self, i: usize) -> usize {
        self.link_depth[i]
    }

    pub fn v_offset(&self, i: usize) -> usize {
        self.v_offset[i]
    }

    pub fn q_offset(&self, i: usize) -> usize {
        self.q_offset[i]
    }

    pub fn is_floating(&self) -> bool {
        matches!(self.links[0].joint.kind, JointKind::Floating)
    }

    /// Floating base link index, if any.
    pub fn base_link(&self) -> Option<usize> {
        self.is_floating().then_some(0)
    }

    pub fn gravity(&self) -> Vector3<f64> {
        self.gravity
    }

    pub fn with_gravity(mut self, gravity: Vector3<f64>) -> Self {
        self.gravity = gravity;
        self
    }

    /// Gravity as a spatial acceleration in world coordinates, `a_grav`.
    pub fn gravity_spatial(&self) -> Vec6 {
        Vec6::new(0.0, 0.0, 0.0, self.gravity.x, self.gravity.y, self.gravity.z)
    }

    pub fn find_link(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    /// True when `a` lies on the path from the root to `b` (inclusive).
    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        let mut cur = Some(b);
        while let Some(c) = cur {
            if c == a {
                return true;
            }
            if c < a {
                return false;
            }
            cur = self.links[c].parent;
        }
        false
    }

    /// Parent of every dof in the expanded joint-space ordering, as used by
    /// the sparse LTL factorization.
    pub fn dof_parents(&self) -> Vec<Option<usize>> {
        let mut out = Vec::with_capacity(self.n);
        for (i, link) in self.links.iter().enumerate() {
            let first = self.v_offset[i];
            let prev = link.parent.map(|p| self.v_offset[p] + self.links[p].joint.dof() - 1);
            for k in 0..link.joint.dof() {
                out.push(if k == 0 { prev } else { Some(first + k - 1) });
            }
        }
        out
    }

    /// Zero joint positions with identity base orientation.
    pub fn neutral_configuration(&self) -> DVector<f64> {
        let mut q = DVector::zeros(self.nq);
        if self.is_floating() {
            q[3] = 1.0;
        }
        q
    }
}

/// Constraint rows acting on one link.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintEntry {
    pub link: usize,
    /// Rows of `K_i` (unit norm), world-aligned at the link origin.
    pub rows: Vec<Vec6>,
    /// Desired constraint accelerations `k_i`.
    pub target: Vec<f64>,
    /// Diagonal of the compliance `R_i` for the soft solver.
    pub soft_weight: Option<Vec<f64>>,
}

impl ConstraintEntry {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }
}

/// Ordered collection of constraint entries; row order is the entry order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintSet {
    entries: Vec<ConstraintEntry>,
    m: usize,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds rows on `link`, normalizing each row (and its target) to unit norm.
    pub fn push(
        &mut self,
        link: usize,
        rows: Vec<Vec6>,
        target: Vec<f64>,
        soft_weight: Option<Vec<f64>>,
    ) -> Result<(), ModelError> {
        let index = self.entries.len();
        let bad = |reason: String| ModelError::InvalidConstraint { index, reason };
        if rows.is_empty() {
            return Err(bad("no rows".into()));
        }
        if rows.len() != target.len() {
            return Err(bad(format!("{} rows but {} targets", rows.len(), target.len())));
        }
        if let Some(w) = &soft_weight {
            if w.len() != rows.len() {
                return Err(bad(format!("{} rows but {} soft weights", rows.len(), w.len())));
            }
            if let Some(x) = w.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
                return Err(bad(format!("soft weight must be positive, got {x}")));
            }
        }
        let mut rows = rows;
        let mut target = target;
        for (row, k) in rows.iter_mut().zip(target.iter_mut()) {
            let norm = row.norm();
            if !(norm > 0.0) || !norm.is_finite() || !k.is_finite() {
                return Err(bad("row with zero or non-finite norm".into()));
            }
            // Rows already unit to rounding are kept as given so that
            // normalization is idempotent across save and load.
            if (norm - 1.0).abs() > 4.0 * f64::EPSILON {
                *row /= norm;
                *k /= norm;
            }
        }
        self.m += rows.len();
        self.entries.push(ConstraintEntry { link, rows, target, soft_weight });
        Ok(())
    }

    pub fn entries(&self) -> &[ConstraintEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ConstraintEntry] {
        &mut self.entries
    }

    /// Total number of constraint rows.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn targets(&self) -> DVector<f64> {
        DVector::from_iterator(self.m, self.entries.iter().flat_map(|e| e.target.iter().copied()))
    }

    /// Replaces every soft weight with `R = (1/w) I`.
    pub fn with_penalty(&self, w: f64) -> Result<Self, ModelError> {
        if !(w > 0.0) || !w.is_finite() {
            return Err(ModelError::InvalidConstraint { index: 0, reason: format!("penalty weight must be positive, got {w}") });
        }
        let mut out = self.clone();
        for e in &mut out.entries {
            e.soft_weight = Some(vec![1.0 / w; e.rows.len()]);
        }
        Ok(out)
    }

    /// Checks link indices against a model.
    pub fn validate(&self, model: &RobotModel) -> Result<(), ModelError> {
        for (index, e) in self.entries.iter().enumerate() {
            if e.link >= model.num_links() {
                return Err(ModelError::InvalidConstraint { index, reason: format!("unknown link {}", e.link) });
            }
        }
        Ok(())
    }

    /// Number of rows on each link.
    pub fn rows_per_link(&self, num_links: usize) -> Vec<usize> {
        let mut counts = vec![0; num_links];
        for e in &self.entries {
            counts[e.link] += e.rows.len();
        }
        counts
    }
}

/// Constraint as read from a constraint file: either explicit rows, or an
/// anchored family the simulator can stabilize.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintSpec {
    Rows { link: usize, rows: Vec<Vec6>, target: Vec<f64>, soft_weight: Option<Vec<f64>> },
    /// A point fixed on the link (link coordinates) held at a world anchor.
    /// `anchor: None` pins the point where it is at the initial state.
    WorldPoint { link: usize, point: Vector3<f64>, anchor: Option<Vector3<f64>>, axes: [bool; 3], soft_weight: Option<f64> },
    /// The link frame welded to a world pose (`None`: its initial pose).
    WorldWeld { link: usize, anchor: Option<(Vector3<f64>, Matrix3<f64>)>, soft_weight: Option<f64> },
}

/// Configuration, velocity and inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub tau: DVector<f64>,
    /// External wrench on each link, link coordinates.
    pub f_ext: Vec<SpatialForce>,
}

impl RobotState {
    /// Neutral configuration, at rest, no inputs.
    pub fn neutral(model: &RobotModel) -> Self {
        Self::at_rest(model, model.neutral_configuration())
    }

    pub fn at_rest(model: &RobotModel, q: DVector<f64>) -> Self {
        Self {
            q,
            qd: DVector::zeros(model.n()),
            tau: DVector::zeros(model.n()),
            f_ext: vec![SpatialForce::zero(); model.num_links()],
        }
    }

    pub fn validate(&self, model: &RobotModel) -> Result<()> {
        let check = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Dimension { what, expected, got })
            }
        };
        check("q", model.nq(), self.q.len())?;
        check("qd", model.n(), self.qd.len())?;
        check("tau", model.n(), self.tau.len())?;
        check("f_ext", model.num_links(), self.f_ext.len())?;
        if model.is_floating() {
            let norm = self.q.fixed_rows::<4>(3).norm();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::Invalid(format!("base quaternion norm {norm} is not 1")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(name: &str, parent: Option<usize>, joint: Joint) -> Link {
        Link::new(name, parent, joint, 1.0, Vector3::zeros(), [0.1, 0.1, 0.1, 0.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn revolute_z_subspace() {
        let j = Joint::revolute(Vector3::z(), Vector3::zeros(), Vector3::zeros()).unwrap();
        let s = motion_subspace(&j);
        assert_eq!(s.as_slice(), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn prismatic_x_subspace() {
        let j = Joint::prismatic(Vector3::x(), Vector3::zeros(), Vector3::zeros()).unwrap();
        assert_eq!(motion_subspace(&j).as_slice(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn floating_subspace_is_identity() {
        assert_eq!(motion_subspace(&Joint::floating()), DMatrix::identity(6, 6));
    }

    #[test]
    fn subspace_is_dual_to_force_subspace() {
        for j in [
            Joint::revolute(Vector3::new(1.0, 2.0, -0.5), Vector3::zeros(), Vector3::zeros()).unwrap(),
            Joint::prismatic(Vector3::new(0.3, 0.0, 0.4), Vector3::zeros(), Vector3::zeros()).unwrap(),
            Joint::floating(),
        ] {
            let s = motion_subspace(&j);
            let st_t = s.transpose() * &s;
            assert!((st_t - DMatrix::identity(j.dof(), j.dof())).amax() < 1e-12);
        }
    }

    #[test]
    fn axis_is_normalized() {
        let j = Joint::revolute(Vector3::new(0.0, 3.0, 4.0), Vector3::zeros(), Vector3::zeros()).unwrap();
        match j.kind {
            JointKind::Revolute { axis } => assert!((axis.norm() - 1.0).abs() < 1e-10),
            _ => unreachable!(),
        }
        assert!(Joint::revolute(Vector3::zeros(), Vector3::zeros(), Vector3::zeros()).is_err());
    }

    #[test]
    fn counts_dof_and_depth() {
        let rz = || Joint::revolute(Vector3::z(), Vector3::zeros(), Vector3::zeros()).unwrap();
        let m = RobotModel::new(vec![link("a", None, rz()), link("b", Some(0), rz())], Vector3::zeros()).unwrap();
        assert_eq!((m.n(), m.depth()), (2, 2));
        let err = RobotModel::new(vec![link("a", Some(1), rz()), link("b", None, rz())], Vector3::zeros());
        assert!(matches!(err, Err(ModelError::TopologicalOrder { .. })));
    }

    #[test]
    fn floating_base_layout() {
        let rz = || Joint::revolute(Vector3::z(), Vector3::zeros(), Vector3::zeros()).unwrap();
        let m = RobotModel::new(
            vec![link("base", None, Joint::floating()), link("a", Some(0), rz()), link("b", Some(0), rz())],
            Vector3::zeros(),
        )
        .unwrap();
        assert_eq!((m.n(), m.nq(), m.depth()), (8, 9, 2));
        assert_eq!(m.dof_parents()[..7], [None, Some(0), Some(1), Some(2), Some(3), Some(4), Some(5)]);
        assert_eq!(m.dof_parents()[7], Some(5));
        assert!(m.is_ancestor(0, 2) && !m.is_ancestor(1, 2));
        let bad = RobotModel::new(vec![link("a", None, rz()), link("b", Some(0), Joint::floating())], Vector3::zeros());
        assert!(matches!(bad, Err(ModelError::FloatingPlacement(_))));
    }

    #[test]
    fn constraint_rows_are_normalized() {
        let mut c = ConstraintSet::new();
        c.push(0, vec![Vec6::new(0.0, 0.0, 2.0, 0.0, 0.0, 0.0)], vec![4.0], None).unwrap();
        assert_eq!(c.entries()[0].rows[0], Vec6::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0));
        assert_eq!(c.entries()[0].target, vec![2.0]);
        assert!(c.push(0, vec![Vec6::zeros()], vec![0.0], None).is_err());
        assert!(c.push(0, vec![Vec6::x()], vec![0.0], Some(vec![0.0])).is_err());
        assert!(c.with_penalty(0.0).is_err());
    }

    #[test]
    fn nonpositive_mass_rejected() {
        let j = Joint::floating();
        let err = Link::new("x", None, j, 0.0, Vector3::zeros(), [1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(err, Err(ModelError::NonPositiveMass { .. })));
    }
}
