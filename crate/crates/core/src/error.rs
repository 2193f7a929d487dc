use thiserror::Error;

/// Problems found while building or loading a [`RobotModel`](crate::model::RobotModel)
/// or a [`ConstraintSet`](crate::model::ConstraintSet).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("link {link:?}: parent index {parent} is not smaller than its own index {index}")]
    TopologicalOrder { link: String, index: usize, parent: usize },
    #[error("cycle detected in the kinematic tree involving link {0:?}")]
    Cycle(String),
    #[error("link {link:?}: unknown joint kind {kind:?}")]
    UnknownJointKind { link: String, kind: String },
    #[error("link {link:?}: mass must be positive, got {mass}")]
    NonPositiveMass { link: String, mass: f64 },
    #[error("link {link:?}: unknown parent {parent:?}")]
    UnknownParent { link: String, parent: String },
    #[error("link {link:?}: {reason}")]
    InvalidJoint { link: String, reason: String },
    #[error("link {link:?}: inertia is not positive definite")]
    InvalidInertia { link: String },
    #[error("duplicate link name {0:?}")]
    DuplicateName(String),
    #[error("floating joints are only allowed on link 0 attached to the world, and then it must be the only root (link {0:?})")]
    FloatingPlacement(String),
    #[error("constraint {index}: {reason}")]
    InvalidConstraint { index: usize, reason: String },
    #[error("empty model")]
    Empty,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("factorization of {factor} failed: pivot {pivot:.3e} at row {index} (rank deficient constraints?)")]
    Singular { factor: &'static str, index: usize, pivot: f64 },
    #[error("joint-space inertia D of link {link} is not positive definite")]
    NonPositiveJointInertia { link: usize },
    #[error("over-constrained system: {rows} propagated constraint rows at link {link} (at most 6)")]
    OverConstrained { link: usize, rows: usize },
    #[error("the base dual Hessian L_b^A is singular; use pv_osim instead of the fast operator")]
    SingularBaseDualHessian,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("at t = {t:.6}: {source}")]
    AtTime { t: f64, source: Box<Error> },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
