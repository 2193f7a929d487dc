//! Procedural models, states and constraint sets for tests, verification
//! and benchmarks. Everything is deterministic given the RNG seed.

use std::f64::consts::PI;

use nalgebra::{DVector, Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::baseline::{dense_inverse_osim, JointSpaceModel};
use crate::kinematics::{forward_sweep, KinematicsCache};
use crate::model::{ConstraintSet, Joint, JointKind, Link, RobotModel, RobotState, STANDARD_GRAVITY};
use crate::spatial::{skew, SpatialForce, Vec6};

/// Largest accepted condition number of `Λ⁻¹` for random instances.
pub const MAX_CONDITION: f64 = 1e6;

/// Instance families used by verification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Fixed-base serial chains, up to 32 links.
    Chain,
    /// Fixed-base trees of depth at most 6.
    Tree,
    /// Floating base with several constrained branches.
    Branched,
    /// Fixed-base rail with welded rungs (`m = 6 · rungs`, up to 24).
    Ladder,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Chain, Family::Tree, Family::Branched, Family::Ladder];

    pub fn name(self) -> &'static str {
        match self {
            Family::Chain => "chain",
            Family::Tree => "tree",
            Family::Branched => "branched",
            Family::Ladder => "ladder",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub label: String,
    pub model: RobotModel,
    pub state: RobotState,
    pub constraints: ConstraintSet,
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -STANDARD_GRAVITY)
}

fn unit_vector(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_vec3(rng: &mut impl Rng, lo: f64, hi: f64) -> Vector3<f64> {
    Vector3::new(rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi))
}

/// Box-shaped body with random size and orientation; always physical.
fn random_link(rng: &mut impl Rng, name: String, parent: Option<usize>, joint: Joint) -> Link {
    let mass = rng.random_range(0.5..2.0);
    let dims = random_vec3(rng, 0.05, 0.4);
    let principal = Vector3::new(
        dims.y * dims.y + dims.z * dims.z,
        dims.x * dims.x + dims.z * dims.z,
        dims.x * dims.x + dims.y * dims.y,
    ) * (mass / 12.0);
    let rot = Rotation3::from_scaled_axis(random_vec3(rng, -PI, PI)).into_inner();
    let i: Matrix3<f64> = rot * Matrix3::from_diagonal(&principal) * rot.transpose();
    let com = random_vec3(rng, -0.1, 0.1) + Vector3::new(0.0, 0.0, 0.15);
    Link::new(name, parent, joint, mass, com, [i[(0, 0)], i[(1, 1)], i[(2, 2)], i[(0, 1)], i[(0, 2)], i[(1, 2)]])
        .expect("random link parameters are physical")
}

fn random_joint(rng: &mut impl Rng, prismatic_share: f64) -> Joint {
    let xyz = random_vec3(rng, -0.15, 0.15) + Vector3::new(0.0, 0.0, 0.3);
    let rpy = random_vec3(rng, -0.5, 0.5);
    let axis = unit_vector(rng);
    if rng.random_bool(prismatic_share) {
        Joint::prismatic(axis, xyz, rpy).expect("unit axis")
    } else {
        Joint::revolute(axis, xyz, rpy).expect("unit axis")
    }
}

/// Random tree over `parents` (`None` = root); link 0 floats if `floating`.
pub fn random_model(rng: &mut impl Rng, parents: &[Option<usize>], floating: bool) -> RobotModel {
    let links = parents
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let joint = if floating && i == 0 { Joint::floating() } else { random_joint(rng, 0.2) };
            random_link(rng, format!("link{i}"), p, joint)
        })
        .collect();
    RobotModel::new(links, gravity()).expect("generated tree is valid")
}

pub fn chain_parents(n: usize) -> Vec<Option<usize>> {
    (0..n).map(|i| i.checked_sub(1)).collect()
}

/// Random parent array with every link at depth at most `max_depth`.
pub fn tree_parents(rng: &mut impl Rng, n: usize, max_depth: usize) -> Vec<Option<usize>> {
    let mut parents = vec![None];
    let mut depth = vec![1];
    for _ in 1..n {
        let candidates: Vec<usize> = (0..depth.len()).filter(|&j| depth[j] < max_depth).collect();
        let p = candidates[rng.random_range(0..candidates.len())];
        parents.push(Some(p));
        depth.push(depth[p] + 1);
    }
    parents
}

/// Random state: joint positions, velocities, torques and a few external wrenches.
pub fn random_state(rng: &mut impl Rng, model: &RobotModel) -> RobotState {
    let mut s = RobotState::neutral(model);
    for (i, link) in model.links().iter().enumerate() {
        let (qo, vo) = (model.q_offset(i), model.v_offset(i));
        match link.joint.kind {
            JointKind::Revolute { .. } => s.q[qo] = rng.random_range(-PI..PI),
            JointKind::Prismatic { .. } => s.q[qo] = rng.random_range(-0.3..0.3),
            JointKind::Floating => {
                let p = random_vec3(rng, -1.0, 1.0);
                let quat = UnitQuaternion::from_scaled_axis(random_vec3(rng, -PI, PI));
                s.q.rows_mut(qo, 3).copy_from(&p);
                s.q[qo + 3] = quat.w;
                s.q[qo + 4] = quat.i;
                s.q[qo + 5] = quat.j;
                s.q[qo + 6] = quat.k;
            }
        }
        for k in 0..link.joint.dof() {
            s.qd[vo + k] = rng.random_range(-1.5..1.5);
            s.tau[vo + k] = rng.random_range(-3.0..3.0);
        }
        if rng.random_bool(0.3) {
            s.f_ext[i] = SpatialForce::new(random_vec3(rng, -1.0, 1.0), random_vec3(rng, -2.0, 2.0));
        }
    }
    s
}

fn random_rows(rng: &mut impl Rng, count: usize) -> (Vec<Vec6>, Vec<f64>) {
    let rows = (0..count)
        .map(|_| Vec6::from_fn(|_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let k = (0..count).map(|_| rng.random_range(-1.0..1.0)).collect();
    (rows, k)
}

/// Rows holding a body-fixed point's world acceleration along the selected
/// world axes: `[-[r]×, I]` with `r` the point offset in world coordinates.
pub fn point_rows(cache: &KinematicsCache, link: usize, point: &Vector3<f64>, axes: [bool; 3]) -> Vec<Vec6> {
    let r = cache.orientation(link) * point;
    let sk = -skew(&r);
    (0..3)
        .filter(|&k| axes[k])
        .map(|k| Vec6::new(sk[(k, 0)], sk[(k, 1)], sk[(k, 2)], f64::from(u8::from(k == 0)), f64::from(u8::from(k == 1)), f64::from(u8::from(k == 2))))
        .collect()
}

/// Six rows fixing the full spatial acceleration of a link.
pub fn weld_rows() -> Vec<Vec6> {
    (0..6).map(|k| Vec6::ith(k, 1.0)).collect()
}

/// Condition number of `Λ⁻¹` (infinite when singular or unconstrained
/// instances are not applicable).
pub fn osim_condition(model: &RobotModel, state: &RobotState, constraints: &ConstraintSet) -> f64 {
    if constraints.is_empty() {
        return 1.0;
    }
    let Ok(js) = JointSpaceModel::new(model, state, constraints) else { return f64::INFINITY };
    let Ok(inv) = dense_inverse_osim(&js) else { return f64::INFINITY };
    let eig = inv.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if lo > 0.0 { hi / lo } else { f64::INFINITY }
}

fn draw(rng: &mut StdRng, family: Family) -> Instance {
    match family {
        Family::Chain => {
            let n = rng.random_range(2..=32);
            let model = random_model(rng, &chain_parents(n), false);
            let state = random_state(rng, &model);
            let mut c = ConstraintSet::new();
            let total = rng.random_range(1..=6.min(n));
            let tip_rows = rng.random_range(1..=total);
            let (rows, k) = random_rows(rng, tip_rows);
            c.push(n - 1, rows, k, None).unwrap();
            if total > tip_rows {
                let lo = total - tip_rows;
                let link = rng.random_range(lo - 1..n - 1);
                let (rows, k) = random_rows(rng, total - tip_rows);
                c.push(link, rows, k, None).unwrap();
            }
            Instance { label: format!("chain n={n}"), model, state, constraints: c }
        }
        Family::Tree => {
            let n = rng.random_range(3..=24);
            let parents = tree_parents(rng, n, 6);
            let model = random_model(rng, &parents, false);
            let state = random_state(rng, &model);
            let mut c = ConstraintSet::new();
            let mut used = 0;
            for _ in 0..rng.random_range(1..=3) {
                let link = rng.random_range(0..n);
                let cap = (6 - used).min(model.link_depth(link));
                if cap == 0 {
                    continue;
                }
                let count = rng.random_range(1..=cap);
                let (rows, k) = random_rows(rng, count);
                c.push(link, rows, k, None).unwrap();
                used += count;
            }
            Instance { label: format!("tree n={n} d={}", model.depth()), model, state, constraints: c }
        }
        Family::Branched => {
            let branches = rng.random_range(2..=5);
            let mut parents = vec![None];
            // Each branch carries at most as many rows as it has joints, so
            // the base dual Hessian stays invertible.
            let mut tips = Vec::new();
            for _ in 0..branches {
                let len = rng.random_range(2..=5);
                let mut prev = 0;
                for _ in 0..len {
                    parents.push(Some(prev));
                    prev = parents.len() - 1;
                }
                tips.push((prev, len));
            }
            let model = random_model(rng, &parents, true);
            let state = random_state(rng, &model);
            let mut c = ConstraintSet::new();
            for &(tip, len) in &tips {
                if rng.random_bool(0.8) {
                    let count = rng.random_range(1..=len.min(3));
                    let (rows, k) = random_rows(rng, count);
                    c.push(tip, rows, k, None).unwrap();
                }
            }
            if c.is_empty() {
                let (rows, k) = random_rows(rng, 2);
                c.push(tips[0].0, rows, k, None).unwrap();
            }
            Instance { label: format!("branched b={branches} n={}", model.n()), model, state, constraints: c }
        }
        Family::Ladder => {
            let rungs = rng.random_range(1..=4);
            let model = ladder_model(rng, rungs);
            let state = random_state(rng, &model);
            let constraints = ladder_constraints(&model, Some(rng));
            Instance { label: format!("ladder rungs={rungs}"), model, state, constraints }
        }
    }
}

/// Draws instances until one has a well-conditioned `Λ⁻¹`.
pub fn random_instance(rng: &mut StdRng, family: Family) -> Instance {
    loop {
        let inst = draw(rng, family);
        if osim_condition(&inst.model, &inst.state, &inst.constraints) <= MAX_CONDITION {
            return inst;
        }
    }
}

/// Benchmark chain: `n` revolute links, 6D weld at the tip.
pub fn chain_instance(n: usize, seed: u64) -> Instance {
    let mut rng = rng(seed);
    let model = random_model(&mut rng, &chain_parents(n), false);
    let state = random_state(&mut rng, &model);
    let mut c = ConstraintSet::new();
    c.push(n - 1, weld_rows(), vec![0.0; 6], None).unwrap();
    Instance { label: format!("chain n={n}"), model, state, constraints: c }
}

const RAIL_SEGMENT: usize = 3;
const RUNG_LINKS: usize = 7;

/// Fixed-base rail built from segments of three links; after each segment a
/// rung of seven links branches off.
pub fn ladder_model(rng: &mut impl Rng, rungs: usize) -> RobotModel {
    let mut parents: Vec<Option<usize>> = Vec::new();
    let mut rail_end: Option<usize> = None;
    for _ in 0..rungs {
        for _ in 0..RAIL_SEGMENT {
            parents.push(rail_end);
            rail_end = Some(parents.len() - 1);
        }
        let mut prev = rail_end;
        for _ in 0..RUNG_LINKS {
            parents.push(prev);
            prev = Some(parents.len() - 1);
        }
    }
    random_model(rng, &parents, false)
}

/// Tip link of every rung of a ladder model.
pub fn ladder_tips(model: &RobotModel) -> Vec<usize> {
    (0..model.num_links()).filter(|&i| model.children(i).is_empty()).collect()
}

/// A 6D weld at every rung tip; random targets when an RNG is supplied.
pub fn ladder_constraints(model: &RobotModel, rng: Option<&mut StdRng>) -> ConstraintSet {
    let mut c = ConstraintSet::new();
    let mut rng = rng;
    for tip in ladder_tips(model) {
        let k = match rng.as_deref_mut() {
            Some(r) => (0..6).map(|_| r.random_range(-1.0..1.0)).collect(),
            None => vec![0.0; 6],
        };
        c.push(tip, weld_rows(), k, None).unwrap();
    }
    c
}

pub fn ladder_instance(rungs: usize, seed: u64) -> Instance {
    let mut rng = rng(seed);
    let model = ladder_model(&mut rng, rungs);
    let state = random_state(&mut rng, &model);
    let constraints = ladder_constraints(&model, None);
    Instance { label: format!("ladder rungs={rungs}"), model, state, constraints }
}

/// Floating base with `chains` serial chains of `len` links, a 3D point
/// constraint at every chain tip.
pub fn branched_instance(chains: usize, len: usize, seed: u64) -> Instance {
    let mut rng = rng(seed);
    let mut parents = vec![None];
    let mut tips = Vec::new();
    for _ in 0..chains {
        let mut prev = 0;
        for _ in 0..len {
            parents.push(Some(prev));
            prev = parents.len() - 1;
        }
        tips.push(prev);
    }
    let model = random_model(&mut rng, &parents, true);
    let state = random_state(&mut rng, &model);
    let cache = forward_sweep(&model, &state);
    let mut c = ConstraintSet::new();
    for tip in tips {
        c.push(tip, point_rows(&cache, tip, &Vector3::new(0.0, 0.0, 0.3), [true; 3]), vec![0.0; 3], None).unwrap();
    }
    Instance { label: format!("branched r={chains}"), model, state, constraints: c }
}

/// Quadruped-like robot: floating trunk, four 3-link legs, feet pinned by
/// 3D point constraints.
pub fn quadruped(seed: u64) -> Instance {
    let mut rng = rng(seed);
    let mut links = vec![Link::new("trunk", None, Joint::floating(), 12.0, Vector3::zeros(), [0.15, 0.6, 0.65, 0.0, 0.0, 0.0]).unwrap()];
    let mut feet = Vec::new();
    for (leg, (x, y)) in [(0.35, 0.15), (0.35, -0.15), (-0.35, 0.15), (-0.35, -0.15)].into_iter().enumerate() {
        let specs = [
            (Vector3::x(), Vector3::new(x, y, 0.0)),
            (Vector3::y(), Vector3::new(0.0, 0.0, -0.05)),
            (Vector3::y(), Vector3::new(0.0, 0.0, -0.3)),
        ];
        let mut parent = 0;
        for (seg, (axis, xyz)) in specs.into_iter().enumerate() {
            let joint = Joint::revolute(axis, xyz, Vector3::zeros()).unwrap();
            let mass = [1.0, 1.5, 0.3][seg];
            let com = if seg == 0 { Vector3::zeros() } else { Vector3::new(0.0, 0.0, -0.15) };
            let i = [0.002, 0.01, 0.01, 0.0, 0.0, 0.0];
            links.push(Link::new(format!("leg{leg}_{seg}"), Some(parent), joint, mass, com, i).unwrap());
            parent = links.len() - 1;
        }
        feet.push(parent);
    }
    let model = RobotModel::new(links, gravity()).unwrap();
    let mut state = RobotState::neutral(&model);
    state.q[2] = 0.55;
    for leg in 0..4 {
        let base = 7 + 3 * leg;
        state.q[base] = rng.random_range(-0.1..0.1);
        state.q[base + 1] = 0.6 + rng.random_range(-0.1..0.1);
        state.q[base + 2] = -1.2 + rng.random_range(-0.1..0.1);
    }
    let cache = forward_sweep(&model, &state);
    let mut c = ConstraintSet::new();
    for &foot in &feet {
        c.push(foot, point_rows(&cache, foot, &Vector3::new(0.0, 0.0, -0.3), [true; 3]), vec![0.0; 3], None).unwrap();
    }
    Instance { label: "quadruped".into(), model, state, constraints: c }
}

/// Planar 3-link pendulum whose tip is pinned in x and z.
pub fn pinned_pendulum() -> RobotModel {
    let links = (0..3usize)
        .map(|i| {
            let xyz = if i == 0 { Vector3::zeros() } else { Vector3::new(0.0, 0.0, -0.5) };
            let joint = Joint::revolute(Vector3::y(), xyz, Vector3::zeros()).unwrap();
            Link::new(format!("l{i}"), i.checked_sub(1), joint, 1.0, Vector3::new(0.0, 0.0, -0.25), [0.02, 0.02, 0.001, 0.0, 0.0, 0.0])
                .unwrap()
        })
        .collect();
    RobotModel::new(links, gravity()).unwrap()
}

/// Random seven-dof chain used for the soft-constraint checks, with a 3D
/// point constraint at the tip.
pub fn soft_test_chain(seed: u64) -> Instance {
    let mut rng = rng(seed);
    let model = loop {
        let m = random_model(&mut rng, &chain_parents(7), false);
        if m.links().iter().all(|l| matches!(l.joint.kind, JointKind::Revolute { .. })) {
            break m;
        }
    };
    let state = random_state(&mut rng, &model);
    let cache = forward_sweep(&model, &state);
    let mut c = ConstraintSet::new();
    c.push(6, point_rows(&cache, 6, &Vector3::new(0.0, 0.0, 0.3), [true; 3]), vec![0.1, -0.2, 0.3], None).unwrap();
    Instance { label: "soft chain n=7".into(), model, state, constraints: c }
}

/// All-zero velocity helper for tests that need `q̇ = 0`.
pub fn at_rest(state: &RobotState) -> RobotState {
    let mut s = state.clone();
    s.qd = DVector::zeros(s.qd.len());
    s
}
