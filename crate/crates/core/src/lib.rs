//! Constrained rigid-body dynamics for kinematic trees.
//!
//! The solvers propagate articulated inertias and motion constraints down
//! the tree in linear time: [`solvers::pv_solve`] for hard constraints,
//! [`solvers::pv_soft_solve`] for penalty constraints, [`solvers::pv_early_solve`]
//! with per-joint multiplier elimination, and [`osim::pv_osim`] for the
//! inverse operational-space inertia. Dense joint-space routines in
//! [`baseline`] serve as independent oracles.
//!
//! Spatial vectors are angular-on-top and every per-link quantity inside
//! the sweeps is expressed in the link's body frame.

// `!(x > 0.0)`-style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod bench;
pub mod error;
pub mod generators;
pub mod kinematics;
pub mod linalg;
pub mod model;
pub mod osim;
pub mod sim;
pub mod solvers;
pub mod spatial;
pub mod verify;

pub use error::{Error, ModelError, Result};
pub use model::{ConstraintSet, RobotModel, RobotState};
pub use solvers::DynamicsSolution;
