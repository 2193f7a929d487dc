//! Constrained forward dynamics: the PV solver, plain ABA, the soft
//! (penalty) variant and the early-elimination variant.
//!
//! All solvers report multipliers with the sign convention
//! `M q̈ + c + Jᵀλ = τ`, so `-λ` is the constraint force along each row.

mod aba;
mod early;
mod pv;
mod reflector;
mod soft;
mod workspace;

pub use aba::{aba, aba_with};
pub use early::{pv_early_solve, pv_early_solve_with};
pub use pv::{pv_solve, pv_solve_with};
pub use reflector::{rank1_reflector, Reflector};
pub use soft::{pv_soft_solve, pv_soft_solve_with};
pub use workspace::SolverWorkspace;

pub(crate) use pv::backward_pass as backward_pass_shared;

use nalgebra::DVector;

use crate::kinematics::KinematicsCache;
use crate::model::{ConstraintSet, RobotModel};
use crate::spatial::{SpatialMotion, Vec6};

/// How gravity enters the sweeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GravityMode {
    /// Accelerate the base by `-g` and shift the constraint targets.
    #[default]
    BaseAcceleration,
    /// Apply each link's weight as an external force.
    LinkWeights,
}

/// Floating-base root resolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FloatingBaseBranch {
    /// Acceleration form when the base dual Hessian factors, else the
    /// constraint-force form.
    #[default]
    Auto,
    Acceleration,
    ConstraintForce,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolverOptions {
    pub gravity: GravityMode,
    pub floating_base: FloatingBaseBranch,
    /// Fault injection for the verification suite: applies `-Jᵀλ` with the
    /// wrong sign in the forward sweep. Never set outside of tests.
    #[doc(hidden)]
    pub inject_sign_fault: bool,
}

impl SolverOptions {
    pub(crate) fn constraint_force_sign(&self) -> f64 {
        if self.inject_sign_fault { -1.0 } else { 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsSolution {
    pub qdd: DVector<f64>,
    /// Multipliers in the constraint set's row order.
    pub lambda: DVector<f64>,
    /// Body-frame spatial acceleration of every link (gravity not included).
    pub link_acc: Vec<SpatialMotion>,
    /// `max |K_i a_i - k_i|` over all rows.
    pub residual: f64,
}

/// Converts sweep accelerations to true link accelerations and measures the
/// constraint residual.
pub(crate) fn finish_solution(
    model: &RobotModel,
    kin: &KinematicsCache,
    constraints: &ConstraintSet,
    mode: GravityMode,
    acc: &[Vec6],
    qdd: DVector<f64>,
    lambda: DVector<f64>,
) -> DynamicsSolution {
    let g = model.gravity();
    let link_acc: Vec<SpatialMotion> = acc
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut a = SpatialMotion::from_vec6(a);
            if mode == GravityMode::BaseAcceleration {
                a.linear += kin.world_x[i].rotation * g;
            }
            a
        })
        .collect();
    let mut residual: f64 = 0.0;
    for e in constraints.entries() {
        let a = link_acc[e.link].to_vec6();
        for (row, k) in e.rows.iter().zip(&e.target) {
            residual = residual.max((kin.row_to_body(e.link, row).dot(&a) - k).abs());
        }
    }
    DynamicsSolution { qdd, lambda, link_acc, residual }
}

/// Constraint target as seen by the sweeps: with the base-acceleration
/// gravity trick the computed accelerations omit gravity, so the row's
/// gravity component is moved into the target.
pub(crate) fn effective_target(model: &RobotModel, mode: GravityMode, row: &Vec6, k: f64) -> f64 {
    match mode {
        GravityMode::BaseAcceleration => k - row.fixed_rows::<3>(3).dot(&model.gravity()),
        GravityMode::LinkWeights => k,
    }
}

/// World-frame base acceleration fed to the roots.
pub(crate) fn root_acceleration(model: &RobotModel, mode: GravityMode) -> Vec6 {
    match mode {
        GravityMode::BaseAcceleration => -model.gravity_spatial(),
        GravityMode::LinkWeights => Vec6::zeros(),
    }
}
